#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kssp/deepdmd.hpp"
#include "kssp/io.hpp"
#include "kssp/ssprog.hpp"
#include "kssp/systems.hpp"

namespace kssp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parsed, validated pipeline configuration (one structured JSON file with
/// nested sections; // comments are allowed). Every block carries its own
/// mandatory seed.
struct PipelineConfig {
  // system
  std::string system_name;
  Params param_overrides;
  bool promoter_decay_on_x10 = false;

  // dataset
  int n_trajectories = 1;
  int n_steps = 1;
  double dt = 0.1;
  double ic_lo = 0.0, ic_hi = 2.0;
  std::string input_kind = "step";
  Vector input_lo, input_hi;
  double ramp_tau_steps = 10.0;
  double split_fraction = 0.75;
  uint64_t dataset_seed = 0;

  // fit
  std::string estimator = "deepdmd";
  TrainConfig train_cfg;
  double val_fraction = 0.15;
  int pair_stride = 1;
  double error_ceiling = 0.10;
  double rank_tol = 1e-10;

  // program
  std::vector<int> targets;
  Vector program_lo, program_hi;
  ConstraintForm constraint_form = ConstraintForm::no_mixed;
  SolverConfig solver_cfg;

  // verify
  int n_random = 20;
  int grid_per_dim = 21;
  int verify_horizon = 1000;
  double tolerance = 0.05;
  std::optional<Vector> verify_x0;
  uint64_t verify_seed = 0;

  SystemSpec make_system() const;
  Vector default_x0() const;
};

PipelineConfig parse_config(const std::filesystem::path& path,
                            std::optional<uint64_t> seed_override = std::nullopt);

/// Pipeline commands; artifacts are exchanged through out_dir. Exit status:
/// 0 success, 1 threshold/solver failure, 2 configuration or IO error.
int cmd_simulate(const PipelineConfig& cfg, const std::filesystem::path& out_dir);
int cmd_fit(const PipelineConfig& cfg, const std::filesystem::path& out_dir);
int cmd_program(const PipelineConfig& cfg, const std::filesystem::path& out_dir);
int cmd_verify(const PipelineConfig& cfg, const std::filesystem::path& out_dir);
int cmd_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace kssp
