#include "kssp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

#include "kssp/dmdc.hpp"
#include "kssp/rng.hpp"

namespace kssp {

namespace fs = std::filesystem;

namespace {

void require_keys(const json& block, const std::string& name,
                  const std::set<std::string>& required, const std::set<std::string>& optional) {
  for (const auto& key : required) {
    if (!block.contains(key)) {
      throw ConfigError("config: missing key '" + key + "' in block '" + name + "'");
    }
  }
  for (const auto& [key, value] : block.items()) {
    if (required.count(key) == 0 && optional.count(key) == 0) {
      throw ConfigError("config: unknown key '" + key + "' in block '" + name + "'");
    }
  }
}

Vector parse_channel_box(const json& j, const std::string& what, bool lower) {
  if (!j.is_array() || j.empty()) throw ConfigError("config: " + what + " must be an array");
  // either [lo, hi] for one channel broadcast later, or [[lo,hi], ...]
  if (j[0].is_number()) {
    if (j.size() != 2) throw ConfigError("config: " + what + " must be [lo, hi]");
    Vector v(1);
    v(0) = j[lower ? 0 : 1].get<double>();
    return v;
  }
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t c = 0; c < j.size(); ++c) {
    const json& pair = j[c];
    if (!pair.is_array() || pair.size() != 2) {
      throw ConfigError("config: " + what + " entries must be [lo, hi]");
    }
    v(static_cast<Eigen::Index>(c)) = pair[lower ? 0 : 1].get<double>();
  }
  return v;
}

Vector broadcast(const Vector& v, int channels) {
  if (v.size() == channels) return v;
  if (v.size() == 1) return Vector::Constant(channels, v(0));
  throw ConfigError("config: box has wrong number of channels");
}

std::string solution_path(int target) { return "solution_x" + std::to_string(target) + ".json"; }

/// snapshot pairs thinned to every stride-th pair within each trajectory
SnapshotSet assemble_with_stride(const std::vector<Trajectory>& trajs, int stride) {
  if (stride <= 1) return assemble_snapshots(trajs);
  const int n = trajs.front().state_dim();
  const int m = trajs.front().input_dim();
  Eigen::Index total = 0;
  for (const auto& t : trajs) total += (t.steps() + stride - 1) / stride;
  SnapshotSet snap;
  snap.x_past.resize(n, total);
  snap.x_future.resize(n, total);
  snap.u_past.resize(m, total);
  Eigen::Index col = 0;
  for (size_t i = 0; i < trajs.size(); ++i) {
    const auto& t = trajs[i];
    const int first = static_cast<int>(col);
    for (int k = 0; k < t.steps(); k += stride, ++col) {
      snap.x_past.col(col) = t.states[static_cast<size_t>(k)];
      snap.x_future.col(col) = t.states[static_cast<size_t>(k) + 1];
      snap.u_past.col(col) = t.inputs[static_cast<size_t>(k)];
    }
    snap.provenance.emplace_back(static_cast<int>(i),
                                 std::make_pair(first, static_cast<int>(col)));
  }
  return snap;
}

}  // namespace

SystemSpec PipelineConfig::make_system() const {
  if (system_name == "iffl") return make_iffl(param_overrides);
  if (system_name == "comb_promoter") {
    return make_comb_promoter(param_overrides, promoter_decay_on_x10);
  }
  throw ConfigError("config: unknown system '" + system_name + "'");
}

Vector PipelineConfig::default_x0() const {
  const SystemSpec system = make_system();
  if (verify_x0) {
    if (verify_x0->size() != system.state_dim) {
      throw ConfigError("config: verify.x0 has wrong dimension");
    }
    return *verify_x0;
  }
  return Vector::Constant(system.state_dim, 0.5 * (ic_lo + ic_hi));
}

PipelineConfig parse_config(const fs::path& path, std::optional<uint64_t> seed_override) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json root;
  try {
    root = read_json_file(path, /*allow_comments=*/true);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  require_keys(root, "<root>", {"system", "dataset", "fit", "program", "verify"}, {});

  PipelineConfig cfg;

  const json& system = root.at("system");
  require_keys(system, "system", {"name"}, {"params", "promoter_decay_on_x10"});
  cfg.system_name = system.at("name").get<std::string>();
  if (cfg.system_name != "iffl" && cfg.system_name != "comb_promoter") {
    throw ConfigError("config: unknown system '" + cfg.system_name + "'");
  }
  if (system.contains("params")) cfg.param_overrides = system.at("params").get<Params>();
  cfg.promoter_decay_on_x10 = system.value("promoter_decay_on_x10", false);

  const json& dataset = root.at("dataset");
  require_keys(dataset, "dataset",
               {"n_trajectories", "n_steps", "dt", "ic_box", "input_kind", "input_box",
                "split_fraction", "seed"},
               {"ramp_tau_steps"});
  cfg.n_trajectories = dataset.at("n_trajectories").get<int>();
  cfg.n_steps = dataset.at("n_steps").get<int>();
  cfg.dt = dataset.at("dt").get<double>();
  const json& ic_box = dataset.at("ic_box");
  if (!ic_box.is_array() || ic_box.size() != 2 || !ic_box[0].is_number()) {
    throw ConfigError("config: dataset.ic_box must be [lo, hi]");
  }
  cfg.ic_lo = ic_box[0].get<double>();
  cfg.ic_hi = ic_box[1].get<double>();
  cfg.input_kind = dataset.at("input_kind").get<std::string>();
  if (cfg.input_kind != "step" && cfg.input_kind != "saturating_ramp") {
    throw ConfigError("config: dataset.input_kind must be step or saturating_ramp");
  }
  cfg.input_lo = parse_channel_box(dataset.at("input_box"), "dataset.input_box", true);
  cfg.input_hi = parse_channel_box(dataset.at("input_box"), "dataset.input_box", false);
  cfg.ramp_tau_steps = dataset.value("ramp_tau_steps", 10.0);
  cfg.split_fraction = dataset.at("split_fraction").get<double>();
  cfg.dataset_seed = dataset.at("seed").get<uint64_t>();
  if (cfg.n_trajectories < 1 || cfg.n_steps < 1 || cfg.dt <= 0.0) {
    throw ConfigError("config: dataset sizes must be positive");
  }
  if (cfg.ic_lo >= cfg.ic_hi) throw ConfigError("config: dataset.ic_box needs lo < hi");
  if (cfg.split_fraction <= 0.0 || cfg.split_fraction >= 1.0) {
    throw ConfigError("config: dataset.split_fraction must be in (0,1)");
  }

  const json& fit = root.at("fit");
  require_keys(fit, "fit", {"estimator", "seed"},
               {"hidden", "state_observables", "input_observables", "mixed_observables",
                "mixed_terms", "lambda1", "lambda2", "learning_rate", "epochs", "batch",
                "val_fraction", "pair_stride", "error_ceiling", "rank_tol",
                "normalize_inputs"});
  cfg.estimator = fit.at("estimator").get<std::string>();
  if (cfg.estimator != "dmdc" && cfg.estimator != "deepdmd") {
    throw ConfigError("config: fit.estimator must be dmdc or deepdmd");
  }
  cfg.train_cfg.seed = fit.at("seed").get<uint64_t>();
  if (fit.contains("hidden")) cfg.train_cfg.hidden = fit.at("hidden").get<std::vector<int>>();
  cfg.train_cfg.state_observables = fit.value("state_observables", 20);
  cfg.train_cfg.input_observables = fit.value("input_observables", 5);
  cfg.train_cfg.mixed_observables = fit.value("mixed_observables", 0);
  try {
    cfg.train_cfg.mixed_terms = mixed_terms_from_string(fit.value("mixed_terms", "none"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.train_cfg.lambda1 = fit.value("lambda1", 1e-3);
  cfg.train_cfg.lambda2 = fit.value("lambda2", 1e-6);
  cfg.train_cfg.learning_rate = fit.value("learning_rate", 1e-3);
  cfg.train_cfg.epochs = fit.value("epochs", 2000);
  cfg.train_cfg.batch = fit.value("batch", 256);
  cfg.train_cfg.normalize_inputs = fit.value("normalize_inputs", true);
  cfg.val_fraction = fit.value("val_fraction", 0.15);
  cfg.pair_stride = fit.value("pair_stride", 1);
  cfg.error_ceiling = fit.value("error_ceiling", 0.10);
  cfg.rank_tol = fit.value("rank_tol", 1e-10);
  if (cfg.val_fraction <= 0.0 || cfg.val_fraction >= 0.5) {
    throw ConfigError("config: fit.val_fraction must be in (0,0.5)");
  }
  if (cfg.pair_stride < 1) throw ConfigError("config: fit.pair_stride must be >= 1");
  try {
    cfg.train_cfg.validate(0, 0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: fit block invalid: ") + e.what());
  }

  const json& program = root.at("program");
  require_keys(program, "program", {"input_box", "constraint_form", "seed"},
               {"targets", "target_index", "n_starts", "max_iterations"});
  if (program.contains("targets")) {
    cfg.targets = program.at("targets").get<std::vector<int>>();
  } else if (program.contains("target_index")) {
    cfg.targets = {program.at("target_index").get<int>()};
  } else {
    throw ConfigError("config: program needs targets or target_index");
  }
  if (cfg.targets.empty()) throw ConfigError("config: program.targets is empty");
  cfg.program_lo = parse_channel_box(program.at("input_box"), "program.input_box", true);
  cfg.program_hi = parse_channel_box(program.at("input_box"), "program.input_box", false);
  try {
    cfg.constraint_form =
        constraint_form_from_string(program.at("constraint_form").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.solver_cfg.seed = program.at("seed").get<uint64_t>();
  cfg.solver_cfg.n_starts = program.value("n_starts", 16);
  cfg.solver_cfg.max_iterations = program.value("max_iterations", 200);

  const json& verify_block = root.at("verify");
  require_keys(verify_block, "verify", {"n_random", "grid_per_dim", "horizon", "seed"},
               {"tolerance", "x0"});
  cfg.n_random = verify_block.at("n_random").get<int>();
  cfg.grid_per_dim = verify_block.at("grid_per_dim").get<int>();
  cfg.verify_horizon = verify_block.at("horizon").get<int>();
  cfg.verify_seed = verify_block.at("seed").get<uint64_t>();
  cfg.tolerance = verify_block.value("tolerance", 0.05);
  if (verify_block.contains("x0") && !verify_block.at("x0").is_null()) {
    cfg.verify_x0 = vector_from_json(verify_block.at("x0"));
  }
  if (cfg.n_random < 0 || cfg.grid_per_dim < 2 || cfg.verify_horizon < 1) {
    throw ConfigError("config: verify block sizes invalid");
  }

  // cross-block consistency
  const SystemSpec system_spec = cfg.make_system();
  cfg.input_lo = broadcast(cfg.input_lo, system_spec.input_dim);
  cfg.input_hi = broadcast(cfg.input_hi, system_spec.input_dim);
  cfg.program_lo = broadcast(cfg.program_lo, system_spec.input_dim);
  cfg.program_hi = broadcast(cfg.program_hi, system_spec.input_dim);
  for (Eigen::Index c = 0; c < cfg.input_lo.size(); ++c) {
    if (cfg.input_lo(c) >= cfg.input_hi(c) || cfg.program_lo(c) >= cfg.program_hi(c)) {
      throw ConfigError("config: input boxes need lo < hi per channel");
    }
  }
  for (int target : cfg.targets) {
    if (target < 0 || target >= system_spec.state_dim) {
      throw ConfigError("config: program target out of range");
    }
  }

  if (seed_override) {
    cfg.dataset_seed = derive_seed(*seed_override, 11);
    cfg.train_cfg.seed = derive_seed(*seed_override, 12);
    cfg.solver_cfg.seed = derive_seed(*seed_override, 13);
    cfg.verify_seed = derive_seed(*seed_override, 14);
  }
  return cfg;
}

int cmd_simulate(const PipelineConfig& cfg, const fs::path& out_dir) {
  const SystemSpec system = cfg.make_system();
  const Vector ic_lo = Vector::Constant(system.state_dim, cfg.ic_lo);
  const Vector ic_hi = Vector::Constant(system.state_dim, cfg.ic_hi);
  const IcSampler ic_sampler = uniform_box_sampler(ic_lo, ic_hi);
  const InputSampler input_sampler =
      cfg.input_kind == "step"
          ? step_input_sampler(cfg.input_lo, cfg.input_hi)
          : ramp_input_sampler(cfg.input_lo, cfg.input_hi, cfg.ramp_tau_steps * cfg.dt);
  const std::vector<Trajectory> trajs = generate_dataset(
      system, cfg.n_trajectories, cfg.n_steps, cfg.dt, ic_sampler, input_sampler,
      cfg.dataset_seed);
  DatasetManifest manifest;
  manifest.system = system.name;
  manifest.params = system.params;
  manifest.dt = cfg.dt;
  manifest.seed = cfg.dataset_seed;
  fs::create_directories(out_dir);
  write_dataset(out_dir / "dataset", trajs, manifest);
  std::cout << "simulate: wrote " << trajs.size() << " trajectories to "
            << (out_dir / "dataset").string() << "\n";
  return 0;
}

int cmd_fit(const PipelineConfig& cfg, const fs::path& out_dir) {
  const fs::path dataset_dir = out_dir / "dataset";
  if (!fs::exists(dataset_dir / "manifest.json")) {
    std::cerr << "fit: dataset not found at " << dataset_dir.string() << "\n";
    return 2;
  }
  auto [trajs, manifest] = read_dataset(dataset_dir);
  auto [train_trajs, test_trajs] =
      train_test_split(trajs, cfg.split_fraction, derive_seed(cfg.dataset_seed, 1000));

  KoopmanModel model;
  if (cfg.estimator == "dmdc") {
    const SnapshotSet snap = assemble_with_stride(train_trajs, cfg.pair_stride);
    const LinearModel linear = fit_dmdc(snap, cfg.rank_tol);
    save_dmdc_model(out_dir / "model.json", linear);
    std::cout << "fit: dmdc residual " << format_double(linear.fit_residual)
              << (linear.rank_deficient ? " (rank-deficient)" : "") << "\n";
    model.psi_x = ObservableMap::identity(static_cast<int>(linear.a.rows()));
    model.psi_u = ObservableMap::identity(static_cast<int>(linear.b.cols()));
    model.k_x = linear.a;
    model.k_u = linear.b;
  } else {
    auto [core_trajs, val_trajs] =
        train_test_split(train_trajs, 1.0 - cfg.val_fraction, derive_seed(cfg.dataset_seed, 1001));
    const SnapshotSet train_snap = assemble_with_stride(core_trajs, cfg.pair_stride);
    const SnapshotSet val_snap = assemble_with_stride(val_trajs, cfg.pair_stride);
    model = train(cfg.train_cfg, train_snap, val_snap);
    save_deepdmd_model(out_dir / "model.json", model);
    write_loss_curve_csv(out_dir / "loss_curve.csv", model.info);
    std::cout << "fit: deepdmd best validation loss "
              << format_double(model.info.val_loss.empty()
                                   ? 0.0
                                   : *std::min_element(model.info.val_loss.begin(),
                                                       model.info.val_loss.end()))
              << " at epoch " << model.info.best_epoch << "\n";
  }

  std::vector<double> errors;
  errors.reserve(test_trajs.size());
  for (const auto& traj : test_trajs) {
    errors.push_back(trajectory_prediction_error(model, traj, cfg.n_steps - 1));
  }
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted.empty()
                            ? 0.0
                            : (sorted.size() % 2 == 1
                                   ? sorted[sorted.size() / 2]
                                   : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                            sorted[sorted.size() / 2]));
  json report;
  report["estimator"] = cfg.estimator;
  report["horizon"] = cfg.n_steps - 1;
  report["test_trajectories"] = test_trajs.size();
  report["per_trajectory_error"] = errors;
  report["median_error"] = median;
  report["error_ceiling"] = cfg.error_ceiling;
  const bool pass = median <= cfg.error_ceiling;
  report["pass"] = pass;
  write_json_file(out_dir / "fit_report.json", report);
  std::cout << "fit: held-out median " << (cfg.n_steps - 1) << "-step relative error "
            << format_double(median) << (pass ? "" : " (exceeds ceiling)") << "\n";
  return pass ? 0 : 1;
}

int cmd_program(const PipelineConfig& cfg, const fs::path& out_dir) {
  const fs::path model_path = out_dir / "model.json";
  if (!fs::exists(model_path)) {
    std::cerr << "program: model not found at " << model_path.string() << "\n";
    return 2;
  }
  const KoopmanModel model = load_model(model_path);
  for (int target : cfg.targets) {
    SteadyStateProblem problem;
    problem.target_index = target;
    problem.input_lo = cfg.program_lo;
    problem.input_hi = cfg.program_hi;
    problem.form = cfg.constraint_form;
    problem.model = &model;
    SteadyStateSolution solution;
    try {
      solution = solve(problem, cfg.solver_cfg);
    } catch (const UnsolvableError& e) {
      std::cerr << "program: target x" << target << ": " << e.what() << "\n";
      return 1;
    }
    write_json_file(out_dir / solution_path(target), solution_to_json(solution));
    std::cout << "program: target x" << target << " u* = [";
    for (Eigen::Index c = 0; c < solution.u_star.size(); ++c) {
      std::cout << (c > 0 ? ", " : "") << format_double(solution.u_star(c));
    }
    std::cout << "] predicted value " << format_double(solution.predicted_value)
              << (solution.flat_landscape ? " (flat landscape)" : "") << "\n";
  }
  return 0;
}

int cmd_verify(const PipelineConfig& cfg, const fs::path& out_dir) {
  const SystemSpec system = cfg.make_system();
  const Vector x0 = cfg.default_x0();
  bool all_pass = true;
  for (int target : cfg.targets) {
    const fs::path sol_path = out_dir / solution_path(target);
    if (!fs::exists(sol_path)) {
      std::cerr << "verify: solution not found at " << sol_path.string() << "\n";
      return 2;
    }
    SteadyStateSolution solution = solution_from_json(read_json_file(sol_path));
    const OracleResult oracle =
        brute_force_oracle(system, cfg.program_lo, cfg.program_hi, cfg.grid_per_dim, x0,
                           cfg.dt, cfg.verify_horizon, target);
    const VerifyReport report =
        verify(system, solution, cfg.n_random, x0, cfg.dt, cfg.verify_horizon,
               derive_seed(cfg.verify_seed, static_cast<uint64_t>(target)), cfg.program_lo,
               cfg.program_hi, &oracle);

    const fs::path dir = out_dir / ("verify_x" + std::to_string(target));
    fs::create_directories(dir);
    json j = verify_report_to_json(report, solution);
    const double oracle_scale = std::max(std::abs(oracle.value), 1e-300);
    const double gap = (oracle.value - report.achieved_value) / oracle_scale;
    double max_random = -std::numeric_limits<double>::infinity();
    for (double v : report.random_values) max_random = std::max(max_random, v);
    const bool within_oracle = gap <= cfg.tolerance;
    const bool beats_randoms =
        report.random_values.empty() ||
        report.achieved_value >= max_random - cfg.tolerance * std::abs(oracle_scale);
    j["tolerance"] = cfg.tolerance;
    j["within_oracle_tolerance"] = within_oracle;
    j["beats_all_randoms_within_tolerance"] = beats_randoms;
    write_json_file(dir / "report.json", j);
    write_json_file(out_dir / solution_path(target), solution_to_json(solution));

    std::vector<std::pair<std::string, Trajectory>> series;
    write_trajectory_csv(dir / "traj_optimal.csv", report.optimal_trajectory);
    series.emplace_back("optimal", report.optimal_trajectory);
    for (size_t i = 0; i < report.random_trajectories.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "traj_random_%02zu.csv", i);
      write_trajectory_csv(dir / name, report.random_trajectories[i]);
      char id[24];
      std::snprintf(id, sizeof(id), "random_%02zu", i);
      series.emplace_back(id, report.random_trajectories[i]);
    }
    write_plot_csv(dir / "plot.csv", series, target);

    std::cout << "verify: target x" << target << " achieved "
              << format_double(report.achieved_value) << " oracle "
              << format_double(oracle.value) << " gap " << format_double(gap)
              << " beats_fraction " << format_double(report.beats_fraction) << "\n";
    all_pass = all_pass && within_oracle && beats_randoms;
  }
  return all_pass ? 0 : 1;
}

int cmd_pipeline(const PipelineConfig& cfg, const fs::path& out_dir) {
  int status = cmd_simulate(cfg, out_dir);
  if (status != 0) return status;
  const int fit_status = cmd_fit(cfg, out_dir);
  if (fit_status == 2) return 2;
  status = cmd_program(cfg, out_dir);
  if (status != 0) return status;
  const int verify_status = cmd_verify(cfg, out_dir);
  if (verify_status == 2) return 2;

  // aggregate summary with every acceptance-relevant number
  json summary;
  summary["system"] = cfg.system_name;
  summary["estimator"] = cfg.estimator;
  const json fit_report = read_json_file(out_dir / "fit_report.json");
  summary["fit"] = fit_report;
  json programs = json::array();
  for (int target : cfg.targets) {
    json entry;
    entry["target"] = target;
    entry["solution"] = read_json_file(out_dir / solution_path(target));
    const json report =
        read_json_file(out_dir / ("verify_x" + std::to_string(target)) / "report.json");
    entry["verify"] = report;
    programs.push_back(std::move(entry));
  }
  summary["programs"] = programs;
  const bool pass = fit_status == 0 && verify_status == 0;
  summary["pass"] = pass;
  write_json_file(out_dir / "summary.json", summary);
  std::cout << "pipeline: " << (pass ? "pass" : "threshold failure") << ", summary at "
            << (out_dir / "summary.json").string() << "\n";
  return pass ? 0 : 1;
}

}  // namespace kssp
