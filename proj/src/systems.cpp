#include "kssp/systems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "kssp/rng.hpp"

namespace kssp {

namespace {

Params merge_params(const Params& defaults, const Params& overrides) {
  Params out = defaults;
  for (const auto& [key, value] : overrides) {
    if (out.find(key) == out.end()) {
      throw std::invalid_argument("unknown system parameter: " + key);
    }
    out[key] = value;
  }
  return out;
}

void require_positive(const Params& p, const std::string& key) {
  if (p.at(key) <= 0.0) {
    throw std::invalid_argument("system parameter must be positive: " + key);
  }
}

// deterministic bounded draw (multiply-shift reduction of one mt19937_64 word)
size_t bounded(std::mt19937_64& rng, size_t bound) {
  return static_cast<size_t>((static_cast<__uint128_t>(rng()) * bound) >> 64);
}

}  // namespace

SystemSpec make_iffl(const Params& overrides) {
  Params defaults;
  for (int i = 0; i <= 5; ++i) defaults["k" + std::to_string(i)] = 1.0;
  for (int i = 1; i <= 4; ++i) defaults["Kd" + std::to_string(i)] = 1.0;
  for (int i = 0; i <= 4; ++i) defaults["delta" + std::to_string(i)] = 0.5;
  Params p = merge_params(defaults, overrides);
  for (int i = 1; i <= 4; ++i) require_positive(p, "Kd" + std::to_string(i));
  for (int i = 0; i <= 4; ++i) require_positive(p, "delta" + std::to_string(i));

  const double k0 = p["k0"], k1 = p["k1"], k2 = p["k2"], k3 = p["k3"], k4 = p["k4"],
               k5 = p["k5"];
  const double kd1 = p["Kd1"], kd2 = p["Kd2"], kd3 = p["Kd3"], kd4 = p["Kd4"];
  const double d0 = p["delta0"], d1 = p["delta1"], d2 = p["delta2"], d3 = p["delta3"],
               d4 = p["delta4"];

  SystemSpec spec;
  spec.name = "iffl";
  spec.state_dim = 5;
  spec.input_dim = 2;
  spec.params = p;
  spec.field = [=](const Vector& x, const Vector& u) {
    Vector dx(5);
    dx(0) = k0 * u(0) / (1.0 + u(1) / kd4) - d0 * x(0);
    dx(1) = k1 * u(1) / (1.0 + x(0) / kd1) - d1 * x(1);
    dx(2) = k2 * x(1) + k3 * u(0) - d2 * x(2);
    dx(3) = k4 * u(1) / (1.0 + x(2) / kd2) - d3 * x(3);
    dx(4) = k5 * u(0) / (1.0 + x(3) / kd3) - d4 * x(4);
    return dx;
  };
  return spec;
}

SystemSpec make_comb_promoter(const Params& overrides, bool decay_on_x10) {
  Params defaults;
  for (int i = 1; i <= 8; ++i) defaults["k" + std::to_string(i) + "f"] = 1.0;
  for (int i = 1; i <= 7; ++i) defaults["k" + std::to_string(i) + "r"] = 0.5;
  defaults["delta"] = 0.1;
  Params p = merge_params(defaults, overrides);
  for (const auto& [key, value] : p) {
    if (value < 0.0) {
      throw std::invalid_argument("system parameter must be nonnegative: " + key);
    }
  }

  const double k1f = p["k1f"], k2f = p["k2f"], k3f = p["k3f"], k4f = p["k4f"],
               k5f = p["k5f"], k6f = p["k6f"], k7f = p["k7f"], k8f = p["k8f"];
  const double k1r = p["k1r"], k2r = p["k2r"], k3r = p["k3r"], k4r = p["k4r"],
               k5r = p["k5r"], k6r = p["k6r"], k7r = p["k7r"];
  const double delta = p["delta"];

  SystemSpec spec;
  spec.name = "comb_promoter";
  spec.state_dim = 11;
  spec.input_dim = 2;
  spec.params = p;
  spec.field = [=](const Vector& x, const Vector& u) {
    Vector dx(11);
    dx(0) = -k1f * x(0) * u(0) + k1r * x(2);
    dx(1) = -k2f * x(1) * u(1) + k2r * x(3) - k4f * x(1) * x(4) + k4r * x(6) -
            k5f * x(1) * x(5) + k5r * x(7) + 0.2 * x(10);
    dx(2) = k1f * x(0) * u(0) - k1r * x(2) - k3f * x(2) * x(4) + k3r * x(5) -
            k6f * x(2) * x(6) + k6r * x(7);
    dx(3) = k2f * x(1) * u(1) - k2r * x(3) - 0.2 * x(3);
    dx(4) = -k3f * x(2) * x(4) + k3r * x(5) - k4f * x(1) * x(4) + k4r * x(6);
    dx(5) = k3f * x(2) * x(4) - k3r * x(5) - k5f * x(1) * x(5) + k5r * x(7) -
            k7f * x(5) * x(8) + k7r * x(9) + k8f * x(9);
    dx(6) = -k6f * x(2) * x(6) + k6r * x(7) - k4r * x(6) + k4f * x(1) * x(4);
    dx(7) = k5f * x(1) * x(5) - k5r * x(7) + k6f * x(2) * x(6) - k6r * x(7);
    dx(8) = -k7f * x(5) * x(8) + (k7r + k8f) * x(9);
    dx(9) = k7f * x(5) * x(8) - (k7r + k8f) * x(9);
    const double decay_state = decay_on_x10 ? x(10) : x(9);
    dx(10) = k8f * x(9) - delta * decay_state * decay_state;
    return dx;
  };
  return spec;
}

SystemSpec make_linear_test(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw std::invalid_argument("make_linear_test: inconsistent dimensions");
  }
  SystemSpec spec;
  spec.name = "linear";
  spec.state_dim = static_cast<int>(a.rows());
  spec.input_dim = static_cast<int>(b.cols());
  spec.field = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
  return spec;
}

Vector InputSignal::at(double t) const {
  if (kind == Kind::step) return level;
  Vector u(level.size());
  const double ramp = 1.0 - std::exp(-t / ramp_tau);
  for (Eigen::Index i = 0; i < level.size(); ++i) u(i) = level(i) * ramp;
  return u;
}

InputSignalFn InputSignal::fn() const {
  InputSignal copy = *this;
  return [copy](double t) { return copy.at(t); };
}

IcSampler uniform_box_sampler(const Vector& lo, const Vector& hi) {
  if (lo.size() != hi.size()) {
    throw std::invalid_argument("uniform_box_sampler: bound dimension mismatch");
  }
  return [lo, hi](std::mt19937_64& rng) {
    Vector v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      std::uniform_real_distribution<double> dist(lo(i), hi(i));
      v(i) = dist(rng);
    }
    return v;
  };
}

InputSampler step_input_sampler(const Vector& lo, const Vector& hi) {
  IcSampler level = uniform_box_sampler(lo, hi);
  return [level](std::mt19937_64& rng) {
    InputSignal sig;
    sig.kind = InputSignal::Kind::step;
    sig.level = level(rng);
    return sig;
  };
}

InputSampler ramp_input_sampler(const Vector& lo, const Vector& hi, double tau) {
  if (tau <= 0.0) {
    throw std::invalid_argument("ramp_input_sampler: tau must be positive");
  }
  IcSampler level = uniform_box_sampler(lo, hi);
  return [level, tau](std::mt19937_64& rng) {
    InputSignal sig;
    sig.kind = InputSignal::Kind::saturating_ramp;
    sig.level = level(rng);
    sig.ramp_tau = tau;
    return sig;
  };
}

std::vector<Trajectory> generate_dataset(const SystemSpec& spec, int n_traj, int n_steps,
                                         double dt, const IcSampler& ic_sampler,
                                         const InputSampler& input_sampler, uint64_t seed) {
  if (n_traj < 1) throw std::invalid_argument("generate_dataset: n_traj must be >= 1");
  std::vector<Trajectory> trajs;
  trajs.reserve(static_cast<size_t>(n_traj));
  for (int i = 0; i < n_traj; ++i) {
    std::mt19937_64 rng = make_rng(derive_seed(seed, static_cast<uint64_t>(i)));
    const Vector x0 = ic_sampler(rng);
    const InputSignal sig = input_sampler(rng);
    try {
      trajs.push_back(integrate(spec.field, x0, sig.fn(), dt, n_steps));
    } catch (const IntegrationError& e) {
      throw IntegrationError("generate_dataset: trajectory " + std::to_string(i) + " failed: " +
                                 e.what(),
                             e.state, e.step);
    }
  }
  return trajs;
}

SnapshotSet assemble_snapshots(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw std::invalid_argument("assemble_snapshots: no trajectories");
  const int n = trajs.front().state_dim();
  const int m = trajs.front().input_dim();
  const double dt = trajs.front().dt;
  Eigen::Index total = 0;
  for (const auto& t : trajs) {
    if (!t.well_formed() || t.state_dim() != n || t.input_dim() != m || t.dt != dt) {
      throw std::invalid_argument("assemble_snapshots: inconsistent trajectories");
    }
    total += t.steps();
  }
  SnapshotSet snap;
  snap.x_past.resize(n, total);
  snap.x_future.resize(n, total);
  snap.u_past.resize(m, total);
  Eigen::Index col = 0;
  for (size_t i = 0; i < trajs.size(); ++i) {
    const auto& t = trajs[i];
    const int first = static_cast<int>(col);
    for (int k = 0; k < t.steps(); ++k, ++col) {
      snap.x_past.col(col) = t.states[static_cast<size_t>(k)];
      snap.x_future.col(col) = t.states[static_cast<size_t>(k) + 1];
      snap.u_past.col(col) = t.inputs[static_cast<size_t>(k)];
    }
    snap.provenance.emplace_back(static_cast<int>(i),
                                 std::make_pair(first, static_cast<int>(col)));
  }
  return snap;
}

std::pair<std::vector<Trajectory>, std::vector<Trajectory>> train_test_split(
    const std::vector<Trajectory>& trajs, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("train_test_split: fraction must be in (0,1)");
  }
  const size_t count = trajs.size();
  if (count < 2) throw std::invalid_argument("train_test_split: need at least 2 trajectories");
  std::vector<size_t> order(count);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng = make_rng(seed);
  for (size_t i = count - 1; i > 0; --i) {
    std::swap(order[i], order[bounded(rng, i + 1)]);
  }
  size_t n_train = static_cast<size_t>(std::llround(fraction * static_cast<double>(count)));
  n_train = std::clamp<size_t>(n_train, 1, count - 1);
  std::vector<Trajectory> train, test;
  for (size_t i = 0; i < count; ++i) {
    (i < n_train ? train : test).push_back(trajs[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace kssp
