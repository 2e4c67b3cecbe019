#ifndef MFK_IO_HPP
#define MFK_IO_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfk/crossval.hpp"
#include "mfk/gp_core.hpp"
#include "mfk/model.hpp"

namespace mfk {

/// Shortest text that is certain to read back to the same double (17 significant digits).
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

/// Comma-separated numeric table with a header row; every cell must be a finite number.
CsvTable read_csv(const std::filesystem::path& path);
std::string to_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& values);

/// Writes to a temporary file in the same directory, then renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// Inputs, then the output, then optionally the lower-level output in a column named z_lower.
LevelData ingest_level_csv(const std::filesystem::path& path);
std::string level_csv(const LevelData& level);

/// Query points: every column is an input coordinate.
Design read_points_csv(const std::filesystem::path& path);
std::string design_csv(const Design& design);

std::string predictions_csv(const Design& points, const std::vector<Prediction>& predictions);
std::string cv_report_csv(const CVReport& report);

struct Provenance {
  std::uint64_t seed = 0;
  std::string objective = "reml";
  std::vector<bool> theta_estimated;
};

std::string model_to_json(const MultiFidelityModel& model, const Provenance& provenance);
MultiFidelityModel model_from_json(const std::string& text, Provenance* provenance = nullptr);
void save_model(const std::filesystem::path& path, const MultiFidelityModel& model, const Provenance& provenance);
MultiFidelityModel load_model(const std::filesystem::path& path, Provenance* provenance = nullptr);

/// Settings of the `fit` command, read from a JSON file; unknown keys are rejected.
struct RunConfig {
  std::vector<std::filesystem::path> level_files;
  std::vector<std::string> f_basis;  // one per level, empty means constant
  std::vector<std::string> g_basis;  // one per level, first entry ignored
  std::vector<PriorSpec> priors;     // empty means non-informative everywhere
  std::vector<std::optional<Eigen::VectorXd>> theta;  // empty or nullopt entries mean estimated
  ThetaObjective objective = ThetaObjective::Reml;
  std::optional<ThetaBounds> bounds;
  int restarts = 10;
  std::uint64_t seed = 0;
  double nugget = 1e-10;
  PredictionMode mode = PredictionMode::Simple;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Reads the level files and bases named by the configuration.
std::vector<LevelData> load_levels(const RunConfig& config);
FitOptions fit_options(const RunConfig& config);

}  // namespace mfk

#endif  // MFK_IO_HPP
