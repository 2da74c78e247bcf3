// scratch diagnostic (not registered with ctest): promoter training spectrum
// and steady-state landscape under different settings
#include <Eigen/Eigenvalues>
#include <iostream>

#include "kssp/deepdmd.hpp"
#include "kssp/ssprog.hpp"
#include "kssp/systems.hpp"

using namespace kssp;

namespace {

SnapshotSet thin(const std::vector<Trajectory>& ts, int stride) {
  SnapshotSet snap = assemble_snapshots(ts);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < snap.columns(); j += stride) idx.push_back(j);
  SnapshotSet out;
  out.x_past.resize(snap.x_past.rows(), static_cast<Eigen::Index>(idx.size()));
  out.x_future.resize(snap.x_future.rows(), static_cast<Eigen::Index>(idx.size()));
  out.u_past.resize(snap.u_past.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) {
    out.x_past.col(static_cast<Eigen::Index>(j)) = snap.x_past.col(idx[j]);
    out.x_future.col(static_cast<Eigen::Index>(j)) = snap.x_future.col(idx[j]);
    out.u_past.col(static_cast<Eigen::Index>(j)) = snap.u_past.col(idx[j]);
  }
  return out;
}

double steady_value(const SystemSpec& sys, const Vector& u, const Vector& x0, double dt,
                    int horizon, int target) {
  Vector x = x0;
  for (int k = 0; k < horizon; ++k) {
    if (sys.field(x, u).lpNorm<Eigen::Infinity>() < 1e-6) break;
    x = rk4_step(sys.field, x, u, dt);
  }
  return x(target);
}

}  // namespace

int main(int argc, char** argv) {
  const bool toggle = argc > 1 && std::atoi(argv[1]) != 0;
  const double lambda1 = argc > 2 ? std::atof(argv[2]) : 1e-3;
  const int epochs = argc > 3 ? std::atoi(argv[3]) : 150;
  const int n_traj = argc > 4 ? std::atoi(argv[4]) : 40;

  const SystemSpec promoter = make_comb_promoter({}, toggle);
  const IcSampler ic = uniform_box_sampler(Vector::Zero(11), Vector::Constant(11, 2.0));
  const InputSampler inputs =
      ramp_input_sampler(Vector::Constant(2, 0.01), Vector::Constant(2, 1.0), 0.1);
  const auto trajs = generate_dataset(promoter, n_traj, 1000, 0.01, ic, inputs, 515151);
  auto [train_trajs, val_trajs] = train_test_split(trajs, 0.85, 9);

  TrainConfig cfg;
  cfg.state_observables = argc > 6 ? std::atoi(argv[6]) : 20;
  cfg.input_observables = argc > 5 ? std::atoi(argv[5]) : 5;
  cfg.lambda1 = lambda1;
  cfg.epochs = epochs;
  cfg.operator_least_squares = false;
  cfg.batch = 256;
  cfg.seed = argc > 7 ? static_cast<uint64_t>(std::atoll(argv[7])) : 5057;
  const KoopmanModel model = train(cfg, thin(train_trajs, 4), thin(val_trajs, 4));

  const Eigen::VectorXcd eig = model.k_x.eigenvalues();
  double closest = 1e9;
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    closest = std::min(closest, std::abs(eig(i) - std::complex<double>(1.0, 0.0)));
  }
  double pred_err = 0.0;
  for (const auto& t : val_trajs) pred_err += trajectory_prediction_error(model, t, 999);
  pred_err /= static_cast<double>(val_trajs.size());
  std::cout << "toggle=" << toggle << " lambda1=" << lambda1 << " epochs=" << epochs
            << "  best_epoch=" << model.info.best_epoch
            << "  near_unit=" << model.info.near_unit_eigenvalues
            << "  min|l-1|=" << closest << "  rho=" << eig.cwiseAbs().maxCoeff()
            << "  mean 999-step err=" << pred_err << "\n";

  // model argmax vs true argmax on a 5x5 grid, both targets
  const Vector x0 = Vector::Ones(11);
  for (int target : {6, 10}) {
    std::cout << "target x" << target << ":\n";
    double best_true = -1e18, best_model = -1e18;
    Vector u_true(2), u_model(2);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        Vector u(2);
        u << 0.01 + (1.0 - 0.01) * i / 4, 0.01 + (1.0 - 0.01) * j / 4;
        const double truth = steady_value(promoter, u, x0, 0.01, 1000, target);
        const double truth_long = argc > 8 ? steady_value(promoter, u, x0, 0.01, 8000, target) : 0.0;
        double modeled = std::numeric_limits<double>::quiet_NaN();
        try {
          modeled = steady_state_map(model, u, ConstraintForm::no_mixed)(target);
        } catch (const NumericsError&) {
        }
        if (argc > 8) {
          std::printf("  u=(%.3f,%.3f) true=%.4f true8k=%.4f model=%.4f\n", u(0), u(1), truth,
                      truth_long, modeled);
        }
        if (truth > best_true) {
          best_true = truth;
          u_true = u;
        }
        if (std::isfinite(modeled) && modeled > best_model) {
          best_model = modeled;
          u_model = u;
        }
      }
    }
    const double achieved = steady_value(promoter, u_model, x0, 0.01, 1000, target);
    const bool pass5 = achieved >= 0.95 * best_true;
    std::printf("  %s true argmax (%.3f,%.3f) value %.4f | model argmax (%.3f,%.3f) achieves %.4f\n",
                pass5 ? "PASS" : "FAIL", u_true(0), u_true(1), best_true, u_model(0), u_model(1),
                achieved);
  }
  return 0;
}
