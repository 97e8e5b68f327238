#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "infosched/bank.hpp"
#include "infosched/chain.hpp"
#include "infosched/info.hpp"
#include "infosched/model.hpp"

namespace infosched {

using IndexMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Value surfaces M_i and argmax tables t̂_i for i = 1..n, indexed
/// [mesh index][state]. M_0 ≡ 0 is implicit. argmax holds the mesh index of
/// the best next observation, or -1 at the final mesh point.
struct FitgTable {
  int n = 0;
  TimeMesh mesh{1.0, 1, 1.0};
  std::size_t states = 0;
  std::vector<DenseMatrix> value;   ///< value[i-1] is M_i
  std::vector<IndexMatrix> argmax;  ///< argmax[i-1] is t̂_i

  const DenseMatrix& m(int i) const { return value.at(static_cast<std::size_t>(i - 1)); }
  const IndexMatrix& t_hat(int i) const { return argmax.at(static_cast<std::size_t>(i - 1)); }
};

/// Weights over a candidate grid.
struct Prior {
  std::vector<double> values;
  std::vector<double> weights;

  static Prior uniform(const CandidateGrid& grid);
  /// All mass on the candidate nearest θ.
  static Prior point_mass(const CandidateGrid& grid, double theta);
  /// Throws ConfigError unless weights are nonnegative, sized like values and
  /// sum to 1 within 1e-12.
  void validate() const;
  std::size_t size() const noexcept { return values.size(); }
};

/// FITG tables for a single θ. `stride` is the dense P^γ; profile rows must
/// cover every lag up to mesh.size() − 1.
FitgTable compute_fitg(const FisherProfile& profile, const DenseMatrix& stride,
                       const TimeMesh& mesh, int n);
FitgTable compute_fitg(const FisherProfile& profile, const TransitionKernel& kernel,
                       const TimeMesh& mesh, int n);
FitgTable compute_fitg(const ThetaComponent& component, const TimeMesh& mesh, int n);

/// Prior-averaged tables: information and continuation terms are both
/// averaged over the components before the max. Components with zero weight
/// are skipped, so a point-mass prior reproduces compute_fitg exactly.
FitgTable averaged_fitg(std::span<const ThetaComponent> components, const Prior& prior,
                        const TimeMesh& mesh, int n);

/// Mesh time of observation i (1-based) given the previous observation at
/// time s in state x. x is rounded to the grid and s down to the mesh.
/// Throws StateError when no future mesh point remains.
double next_time(const FitgTable& table, int i, double s, std::span<const double> x,
                 const StateGrid& grid);
/// Same, by mesh and state index.
int next_index(const FitgTable& table, int i, int mesh_index, std::size_t state);

/// Axis selection for 2-D and higher grids: the heat map varies `axis` and
/// holds the other coordinates at `at` (snapped to the grid).
struct HeatmapSlice {
  std::size_t axis = 0;
  std::vector<double> at;
};

struct Heatmap {
  int i = 0;
  std::vector<double> times;      ///< mesh times (rows)
  std::vector<double> positions;  ///< coordinates along the slice axis (columns)
  std::vector<std::size_t> states;
  DenseMatrix t_hat;  ///< NaN where no future mesh point exists
};

Heatmap export_heatmap(const FitgTable& table, int i, const StateGrid& grid,
                       const HeatmapSlice& slice = {});

/// Matrix CSV: header "s,<x_0>,<x_1>,…", then one row per mesh time with the
/// optimal next time per state (empty cell at the final mesh point).
void write_heatmap_csv(std::ostream& out, const Heatmap& map);

}  // namespace infosched
