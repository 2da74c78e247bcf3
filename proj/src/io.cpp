#include "kssp/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace kssp {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

json net_to_json(const FeedforwardNet& net) {
  json j;
  j["widths"] = net.widths();
  json weights = json::array();
  for (const auto& w : net.weights()) weights.push_back(matrix_to_json(w));
  j["weights"] = weights;
  json biases = json::array();
  for (const auto& b : net.biases()) biases.push_back(vector_to_json(b));
  j["biases"] = biases;
  if (net.has_input_normalization()) {
    j["norm_shift"] = vector_to_json(net.normalization_shift());
    j["norm_scale"] = vector_to_json(net.normalization_scale());
  }
  return j;
}

FeedforwardNet net_from_json(const json& j) {
  const std::vector<int> widths = j.at("widths").get<std::vector<int>>();
  FeedforwardNet net(widths, /*seed=*/0);
  const json& weights = j.at("weights");
  const json& biases = j.at("biases");
  if (weights.size() != net.weights().size() || biases.size() != net.biases().size()) {
    throw IoError("model JSON: layer count mismatch");
  }
  for (size_t l = 0; l < net.weights().size(); ++l) {
    net.weights()[l] = matrix_from_json(weights[l]);
    net.biases()[l] = vector_from_json(biases[l]);
  }
  if (j.contains("norm_shift")) {
    net.set_input_normalization(vector_from_json(j.at("norm_shift")),
                                vector_from_json(j.at("norm_scale")));
  }
  return net;
}

json observable_map_to_json(const ObservableMap& map) {
  json j;
  switch (map.kind()) {
    case ObservableMap::Kind::identity:
      j["kind"] = "identity";
      j["dim"] = map.base_dim();
      break;
    case ObservableMap::Kind::dictionary:
      j["kind"] = "dictionary";
      j["base_dim"] = map.dict().base_dim();
      j["max_degree"] = map.dict().max_degree();
      j["exponents"] = map.dict().exponent_table();
      break;
    case ObservableMap::Kind::network:
      j["kind"] = "network";
      j["base_dim"] = map.base_dim();
      j["net"] = net_to_json(map.net());
      break;
  }
  return j;
}

ObservableMap observable_map_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return ObservableMap::identity(j.at("dim").get<int>());
  if (kind == "dictionary") {
    MonomialDictionary dict(j.at("base_dim").get<int>(), j.at("max_degree").get<int>());
    const auto stored = j.at("exponents").get<std::vector<std::vector<int>>>();
    if (stored != dict.exponent_table()) {
      throw IoError("model JSON: dictionary exponent table does not match its parameters");
    }
    return ObservableMap::dictionary(std::move(dict));
  }
  if (kind == "network") {
    return ObservableMap::network(j.at("base_dim").get<int>(), net_from_json(j.at("net")));
  }
  throw IoError("model JSON: unknown observable map kind " + kind);
}

}  // namespace

std::string format_double(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::move(rows);
  return j;
}

Matrix matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  Matrix m(rows, cols);
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw IoError("matrix JSON: bad row count");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = data[static_cast<size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw IoError("matrix JSON: bad column count");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[static_cast<size_t>(i)].get<double>();
  return v;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  if (!traj.well_formed()) throw IoError("write_trajectory_csv: malformed trajectory");
  std::ofstream out(path);
  if (!out) throw IoError("write_trajectory_csv: cannot open " + path.string());
  const int n = traj.state_dim();
  const int m = traj.input_dim();
  out << "t";
  for (int i = 0; i < n; ++i) out << ",x" << i;
  for (int i = 0; i < m; ++i) out << ",u" << i;
  out << "\n";
  for (size_t k = 0; k < traj.states.size(); ++k) {
    out << format_double(static_cast<double>(k) * traj.dt);
    for (int i = 0; i < n; ++i) out << "," << format_double(traj.states[k](i));
    for (int i = 0; i < m; ++i) {
      out << ",";
      if (k < traj.inputs.size()) out << format_double(traj.inputs[k](i));
    }
    out << "\n";
  }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_trajectory_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("read_trajectory_csv: empty file");
  const auto header = split_csv_line(line);
  int n = 0, m = 0;
  for (const auto& name : header) {
    if (!name.empty() && name[0] == 'x') ++n;
    if (!name.empty() && name[0] == 'u') ++m;
  }
  if (n == 0 || header.empty() || header[0] != "t") {
    throw IoError("read_trajectory_csv: unexpected header in " + path.string());
  }
  Trajectory traj;
  std::vector<double> times;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 1 + n + m) {
      throw IoError("read_trajectory_csv: bad field count in " + path.string());
    }
    times.push_back(std::stod(fields[0]));
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = std::stod(fields[static_cast<size_t>(1 + i)]);
    traj.states.push_back(std::move(x));
    const bool has_input = !fields[static_cast<size_t>(1 + n)].empty();
    if (has_input) {
      Vector u(m);
      for (int i = 0; i < m; ++i) u(i) = std::stod(fields[static_cast<size_t>(1 + n + i)]);
      traj.inputs.push_back(std::move(u));
    }
  }
  if (times.size() >= 2) traj.dt = times[1] - times[0];
  if (!traj.well_formed()) throw IoError("read_trajectory_csv: malformed rows in " + path.string());
  return traj;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<Trajectory>& trajs,
                   const DatasetManifest& manifest) {
  std::filesystem::create_directories(dir);
  json j;
  j["system"] = manifest.system;
  j["params"] = manifest.params;
  j["dt"] = manifest.dt;
  j["seed"] = manifest.seed;
  json files = json::array();
  for (size_t i = 0; i < trajs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
    write_trajectory_csv(dir / name, trajs[i]);
    files.push_back(name);
  }
  j["files"] = files;
  write_json_file(dir / "manifest.json", j);
}

std::pair<std::vector<Trajectory>, DatasetManifest> read_dataset(
    const std::filesystem::path& dir) {
  const json j = read_json_file(dir / "manifest.json");
  DatasetManifest manifest;
  manifest.system = j.at("system").get<std::string>();
  manifest.params = j.at("params").get<Params>();
  manifest.dt = j.at("dt").get<double>();
  manifest.seed = j.at("seed").get<uint64_t>();
  manifest.files = j.at("files").get<std::vector<std::string>>();
  std::vector<Trajectory> trajs;
  trajs.reserve(manifest.files.size());
  for (const auto& name : manifest.files) trajs.push_back(read_trajectory_csv(dir / name));
  return {std::move(trajs), std::move(manifest)};
}

void save_dmdc_model(const std::filesystem::path& path, const LinearModel& model) {
  json j;
  j["kind"] = "dmdc";
  j["A"] = matrix_to_json(model.a);
  j["B"] = matrix_to_json(model.b);
  j["residual"] = model.fit_residual;
  j["rank_deficient"] = model.rank_deficient;
  write_json_file(path, j);
}

LinearModel load_dmdc_model(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  if (j.at("kind").get<std::string>() != "dmdc") throw IoError("not a dmdc model: " + path.string());
  LinearModel model;
  model.a = matrix_from_json(j.at("A"));
  model.b = matrix_from_json(j.at("B"));
  model.fit_residual = j.at("residual").get<double>();
  model.rank_deficient = j.value("rank_deficient", false);
  return model;
}

void save_deepdmd_model(const std::filesystem::path& path, const KoopmanModel& model) {
  json j;
  j["kind"] = "deepdmd";
  j["state_dim"] = model.state_dim();
  j["input_dim"] = model.input_dim();
  j["n_lifted"] = model.state_lift_dim();
  j["m_lifted"] = model.input_lift_dim();
  j["mixed_lifted"] = model.mixed_dim();
  j["psi_x"] = observable_map_to_json(model.psi_x);
  j["psi_u"] = observable_map_to_json(model.psi_u);
  j["mixed"] = to_string(model.mixed);
  if (model.mixed_net) j["mixed_net"] = net_to_json(*model.mixed_net);
  j["K_x"] = matrix_to_json(model.k_x);
  j["K_u"] = matrix_to_json(model.k_u);
  if (model.mixed != MixedTerms::none) j["K_xu"] = matrix_to_json(model.k_xu);
  json training;
  training["lambda1"] = model.info.lambda1;
  training["lambda2"] = model.info.lambda2;
  training["seed"] = model.info.seed;
  training["best_epoch"] = model.info.best_epoch;
  training["near_unit_eigenvalues"] = model.info.near_unit_eigenvalues;
  training["train_loss"] = model.info.train_loss;
  training["val_loss"] = model.info.val_loss;
  j["training"] = training;
  write_json_file(path, j);
}

KoopmanModel load_deepdmd_model(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  if (j.at("kind").get<std::string>() != "deepdmd") {
    throw IoError("not a deepdmd model: " + path.string());
  }
  KoopmanModel model;
  model.psi_x = observable_map_from_json(j.at("psi_x"));
  model.psi_u = observable_map_from_json(j.at("psi_u"));
  model.mixed = mixed_terms_from_string(j.at("mixed").get<std::string>());
  if (j.contains("mixed_net")) model.mixed_net = net_from_json(j.at("mixed_net"));
  model.k_x = matrix_from_json(j.at("K_x"));
  model.k_u = matrix_from_json(j.at("K_u"));
  if (model.mixed != MixedTerms::none) model.k_xu = matrix_from_json(j.at("K_xu"));
  const json& training = j.at("training");
  model.info.lambda1 = training.at("lambda1").get<double>();
  model.info.lambda2 = training.at("lambda2").get<double>();
  model.info.seed = training.at("seed").get<uint64_t>();
  model.info.best_epoch = training.at("best_epoch").get<int>();
  model.info.near_unit_eigenvalues = training.at("near_unit_eigenvalues").get<int>();
  model.info.train_loss = training.at("train_loss").get<std::vector<double>>();
  model.info.val_loss = training.at("val_loss").get<std::vector<double>>();
  return model;
}

KoopmanModel load_model(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "deepdmd") return load_deepdmd_model(path);
  if (kind == "dmdc") {
    const LinearModel linear = load_dmdc_model(path);
    KoopmanModel model;
    model.psi_x = ObservableMap::identity(static_cast<int>(linear.a.rows()));
    model.psi_u = ObservableMap::identity(static_cast<int>(linear.b.cols()));
    model.k_x = linear.a;
    model.k_u = linear.b;
    return model;
  }
  throw IoError("unknown model kind '" + kind + "' in " + path.string());
}

void write_loss_curve_csv(const std::filesystem::path& path, const TrainingInfo& info) {
  std::ofstream out(path);
  if (!out) throw IoError("write_loss_curve_csv: cannot open " + path.string());
  out << "epoch,train_loss,val_loss\n";
  for (size_t e = 0; e < info.train_loss.size(); ++e) {
    out << e << "," << format_double(info.train_loss[e]) << ","
        << format_double(e < info.val_loss.size() ? info.val_loss[e] : 0.0) << "\n";
  }
}

json solution_to_json(const SteadyStateSolution& solution) {
  json j;
  j["u_star"] = vector_to_json(solution.u_star);
  j["lifted_equilibrium"] = vector_to_json(solution.lifted_equilibrium);
  j["predicted_value"] = solution.predicted_value;
  if (solution.achieved_value) {
    j["achieved_value"] = *solution.achieved_value;
  } else {
    j["achieved_value"] = nullptr;
  }
  j["conditioning"] = solution.conditioning;
  j["flat_landscape"] = solution.flat_landscape;
  j["target_index"] = solution.target_index;
  j["constraint_form"] = to_string(solution.form);
  json starts = json::array();
  for (const auto& record : solution.starts) {
    json s;
    s["u_initial"] = vector_to_json(record.u_initial);
    s["u_final"] = vector_to_json(record.u_final);
    s["objective"] = record.objective;
    s["ok"] = record.ok;
    if (!record.error.empty()) s["error"] = record.error;
    starts.push_back(std::move(s));
  }
  j["starts"] = starts;
  return j;
}

SteadyStateSolution solution_from_json(const json& j) {
  SteadyStateSolution solution;
  solution.u_star = vector_from_json(j.at("u_star"));
  solution.lifted_equilibrium = vector_from_json(j.at("lifted_equilibrium"));
  solution.predicted_value = j.at("predicted_value").get<double>();
  if (!j.at("achieved_value").is_null()) {
    solution.achieved_value = j.at("achieved_value").get<double>();
  }
  solution.conditioning = j.at("conditioning").get<double>();
  solution.flat_landscape = j.at("flat_landscape").get<bool>();
  solution.target_index = j.at("target_index").get<int>();
  solution.form = constraint_form_from_string(j.at("constraint_form").get<std::string>());
  for (const auto& s : j.at("starts")) {
    StartRecord record;
    record.u_initial = vector_from_json(s.at("u_initial"));
    record.u_final = vector_from_json(s.at("u_final"));
    record.objective = s.at("objective").get<double>();
    record.ok = s.at("ok").get<bool>();
    record.error = s.value("error", "");
    solution.starts.push_back(std::move(record));
  }
  return solution;
}

json verify_report_to_json(const VerifyReport& report, const SteadyStateSolution& solution) {
  json j;
  j["u_star"] = vector_to_json(report.u_star);
  j["predicted_value"] = report.predicted_value;
  j["achieved_value"] = report.achieved_value;
  j["beats_fraction"] = report.beats_fraction;
  if (report.oracle_value) {
    j["oracle_value"] = *report.oracle_value;
    j["oracle_u"] = vector_to_json(*report.oracle_u);
    const double scale = std::max(std::abs(*report.oracle_value), 1e-300);
    j["oracle_gap_relative"] = (*report.oracle_value - report.achieved_value) / scale;
  } else {
    j["oracle_value"] = nullptr;
  }
  json randoms = json::array();
  for (size_t i = 0; i < report.random_inputs.size(); ++i) {
    json r;
    r["u"] = vector_to_json(report.random_inputs[i]);
    r["value"] = report.random_values[i];
    randoms.push_back(std::move(r));
  }
  j["random_inputs"] = randoms;
  j["starts"] = solution_to_json(solution)["starts"];
  return j;
}

void write_plot_csv(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, Trajectory>>& series,
                    int state_index) {
  std::ofstream out(path);
  if (!out) throw IoError("write_plot_csv: cannot open " + path.string());
  out << "t,series_id,value\n";
  for (const auto& [name, traj] : series) {
    for (size_t k = 0; k < traj.states.size(); ++k) {
      out << format_double(static_cast<double>(k) * traj.dt) << "," << name << ","
          << format_double(traj.states[k](state_index)) << "\n";
    }
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("write_json_file: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

json read_json_file(const std::filesystem::path& path, bool allow_comments) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in, nullptr, true, allow_comments);
  } catch (const json::parse_error& e) {
    throw IoError("JSON parse error in " + path.string() + ": " + e.what());
  }
}

}  // namespace kssp
