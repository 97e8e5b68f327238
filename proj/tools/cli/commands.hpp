#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "infosched/catalog.hpp"
#include "infosched/policy.hpp"
#include "infosched/sim.hpp"

namespace infosched::cli {

/// Exit codes: 0 ok, 1 unexpected failure, 2 configuration error, 3 numeric failure.
enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3 };

/// Where a run's config comes from, plus the overrides accepted on the
/// command line. Empty optionals keep the catalog/config value.
struct ConfigSource {
  std::string model;  ///< catalog name, used when `config_path` is empty
  std::filesystem::path config_path;
  Scale scale = Scale::desk;
  std::optional<double> delta;
  std::optional<int> gamma;
  std::optional<int> n;
};

ModelConfig resolve_config(const ConfigSource& source);

/// Default output directory runs/<model>-<scale>.
std::filesystem::path default_out(const ConfigSource& source);

struct PrecomputeOptions {
  bool averaged = false;
  bool vi = false;
  double dtheta = 0.0;     ///< 0 selects the candidate spacing
  double discount = 0.95;  ///< λ
  double tolerance = 0.0;  ///< ε; 0 selects 1e-6·|S|
  bool force = false;      ///< ignore a matching manifest
};

struct PrecomputeResult {
  std::filesystem::path dir;
  bool cached = false;
  nlohmann::json manifest;
};

/// Writes config.json, kernel.txt, profile.csv, policy_dp.bin and, when
/// requested, prior.json, policy_averaged.bin and policy_vi.bin, then a
/// manifest with the config hash and per-file SHA-256. A directory whose
/// manifest matches the config hash and file hashes is left untouched.
PrecomputeResult precompute(const ModelConfig& config, const PrecomputeOptions& options,
                            const std::filesystem::path& out, std::ostream& log);

struct ExperimentOptions {
  std::vector<Design> designs{Design::policy, Design::uniform};
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  bool vi_recompute = false;
};

struct ExperimentRow {
  Design design;
  std::optional<SummaryStats> stats;
  std::vector<ExperimentRecord> records;
};

/// Runs each design over the same paired paths using the artifacts in `dir`,
/// writing records.csv and stats.json there. Records are written before the
/// statistics, so a single replicate still leaves its CSV behind.
std::vector<ExperimentRow> experiment(const std::filesystem::path& dir,
                                      const ExperimentOptions& options, std::ostream& log);

/// Table-1 style comparison of the rows.
void print_table(std::ostream& out, const std::vector<ExperimentRow>& rows, double theta_true);

/// Heat map of observation i from the dp (or averaged) policy in `dir`.
void heatmap(const std::filesystem::path& dir, int i, Design design, const HeatmapSlice& slice,
             std::ostream& out);

/// Parses argv and runs a subcommand; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace infosched::cli
