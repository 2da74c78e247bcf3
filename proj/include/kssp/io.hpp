#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kssp/deepdmd.hpp"
#include "kssp/dmdc.hpp"
#include "kssp/ssprog.hpp"
#include "kssp/systems.hpp"

namespace kssp {

using nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Formats a double so that parsing it back recovers the exact value.
std::string format_double(double value);

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);
json vector_to_json(const Vector& v);
Vector vector_from_json(const json& j);

/// Trajectory CSV: header t,x0..x{n-1},u0..u{m-1}; one row per sample; input
/// fields on the final row are empty.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::filesystem::path& path);

struct DatasetManifest {
  std::string system;
  Params params;
  double dt = 0.0;
  uint64_t seed = 0;
  std::vector<std::string> files;
};

void write_dataset(const std::filesystem::path& dir, const std::vector<Trajectory>& trajs,
                   const DatasetManifest& manifest);
std::pair<std::vector<Trajectory>, DatasetManifest> read_dataset(
    const std::filesystem::path& dir);

void save_dmdc_model(const std::filesystem::path& path, const LinearModel& model);
LinearModel load_dmdc_model(const std::filesystem::path& path);

void save_deepdmd_model(const std::filesystem::path& path, const KoopmanModel& model);
KoopmanModel load_deepdmd_model(const std::filesystem::path& path);

/// Loads either model kind; a dmdc artifact is wrapped as an
/// identity-observable Koopman model (K_x = A, K_u = B).
KoopmanModel load_model(const std::filesystem::path& path);

void write_loss_curve_csv(const std::filesystem::path& path, const TrainingInfo& info);

json solution_to_json(const SteadyStateSolution& solution);
SteadyStateSolution solution_from_json(const json& j);

json verify_report_to_json(const VerifyReport& report, const SteadyStateSolution& solution);

/// Plot-ready long-format CSV with columns t,series_id,value.
void write_plot_csv(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, Trajectory>>& series,
                    int state_index);

void write_json_file(const std::filesystem::path& path, const json& j);
json read_json_file(const std::filesystem::path& path, bool allow_comments = false);

}  // namespace kssp
