#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "infosched/model.hpp"

namespace infosched {

struct GridAxisSpec {
  double lo;
  double hi;
  double h;
};

struct CandidateSpec {
  double lo;
  double hi;
  double step;
};

/// Serializable description of one experiment setup. JSON layout:
///   {name, theta_true, x0, n, tau, delta, gamma,
///    grid: [{lo, hi, h}, ...], phi: {lo, hi, step}}
struct ModelConfig {
  std::string name;
  double theta_true = 0.0;
  std::vector<double> x0;
  int n = 1;
  double tau = 1.0;
  double delta = 1e-5;
  int gamma = 1;
  std::vector<GridAxisSpec> grid;
  CandidateSpec phi{};

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& doc);

  StateGrid state_grid() const;
  TimeMesh time_mesh() const;
  CandidateGrid candidates() const;
  /// Checks cross-field consistency (dimension, x0 inside grid, n >= 1).
  void validate() const;
};

/// Paper-scale settings, or a reduced preset that runs on a desktop in minutes.
enum class Scale { paper, desk };

Scale parse_scale(std::string_view text);

/// Names of the compiled-in systems: "ou", "rma", "lienard".
std::vector<std::string> catalog_names();

/// Compiled-in drift/noise for a catalog system; θ is the only free argument.
DiffusionModel make_model(std::string_view name);

ModelConfig catalog_config(std::string_view name, Scale scale = Scale::paper);

/// Everything needed to run one system, materialized from a config.
struct Setup {
  ModelConfig config;
  DiffusionModel model;
  StateGrid grid;
  TimeMesh mesh;
  CandidateGrid candidates;

  static Setup from_config(ModelConfig config);
  std::size_t initial_state() const { return grid.nearest(config.x0); }
};

inline Setup catalog_model(std::string_view name, Scale scale = Scale::paper) {
  return Setup::from_config(catalog_config(name, scale));
}

}  // namespace infosched
