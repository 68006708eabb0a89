#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdglm/model.hpp"
#include "tdglm/samplers.hpp"
#include "tdglm/selection.hpp"
#include "tdglm/synth.hpp"

namespace tdglm {

/// A loaded dataset: observations plus the column/site labels needed to
/// report results. The spatial domain is present when a coords file was
/// given; site order then follows the coords file, otherwise first
/// appearance in the data.
struct Dataset {
  ObservationSet obs;
  std::optional<SpatialDomain> domain;
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  std::vector<std::string> site_ids;
};

/// Read a data CSV (columns y, exposure, location_id, then x_* / z_*
/// covariates) and optionally a coords CSV (site_id, x, y). Errors carry the
/// offending row and column.
Dataset load_dataset(const std::filesystem::path& data_path,
                     const std::optional<std::filesystem::path>& coords_path);

/// Write a dataset in the exact format load_dataset reads; doubles are
/// printed with round-trip precision.
void write_dataset(const std::filesystem::path& data_path, const Dataset& data,
                   const std::string& file_stamp);
void write_coords(const std::filesystem::path& coords_path, const Dataset& data,
                  const std::string& file_stamp);

/// Everything a command run needs; flags override config-file entries.
struct RunConfig {
  std::string model = "M1";
  std::filesystem::path data_path;
  std::optional<std::filesystem::path> coords_path;
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 1;
  long chains = 1;
  long workers = 0;  // 0 = hardware concurrency
  Hyperparameters hyper;
  // summarize/select/predict read a previous fit from here
  std::optional<std::filesystem::path> fit_dir;

  /// Stable hash of the effective configuration.
  std::string hash() const;
};

/// Apply the "hyper" object of a JSON config file onto defaults.
void apply_config_file(RunConfig& config);

struct FitArtifacts {
  std::vector<ChainOutput> chains;
  Eigen::MatrixXd pooled_draws;
  std::vector<std::string> column_names;  // with chain/iteration prepended
  Eigen::VectorXd pooled_log_posterior;
};

int fit_command(const RunConfig& config);
int simulate_command(const RunConfig& config);
int select_command(const RunConfig& config);
int predict_command(const RunConfig& config);
int summarize_command(const RunConfig& config);

/// Stored-draws table as written by fit: named columns, one row per kept
/// iteration (all chains stacked).
struct DrawsTable {
  std::vector<std::string> column_names;
  Eigen::MatrixXd values;

  Eigen::Index column(const std::string& name) const;
  Eigen::MatrixXd block(const std::string& prefix) const;
};

DrawsTable read_draws_csv(const std::filesystem::path& path);

void write_truth_json(const std::filesystem::path& path,
                      const SyntheticTruth& truth, const std::string& stamp);
SyntheticTruth read_truth_json(const std::filesystem::path& path);

/// Atomic text write: temp file in the same directory, then rename.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string format_double(double v);

}  // namespace tdglm
