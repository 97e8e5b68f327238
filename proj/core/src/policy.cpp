#include "infosched/policy.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

constexpr double kWeightTol = 1e-12;

struct Term {
  const DenseMatrix* stride;
  const DenseMatrix* info;
  double weight;
};

FitgTable run_dp(std::span<const Term> terms, const TimeMesh& mesh, int n) {
  if (n < 1) throw ConfigError("FITG needs n >= 1 observations");
  if (terms.empty()) throw ConfigError("FITG needs at least one component with positive weight");
  const auto t_count = static_cast<Eigen::Index>(mesh.size());
  const Eigen::Index s_count = terms.front().stride->rows();
  for (const auto& t : terms) {
    if (t.stride->rows() != s_count || t.stride->cols() != s_count) {
      throw ConfigError("FITG components disagree on the state count");
    }
    if (t.info->cols() != s_count) {
      throw ConfigError(fmt::format("information profile has {} states, kernel has {}",
                                    t.info->cols(), s_count));
    }
    if (t.info->rows() < t_count - 1) {
      throw ConfigError(fmt::format("information profile covers {} lags; the mesh needs {}",
                                    t.info->rows(), t_count - 1));
    }
  }

  FitgTable table;
  table.n = n;
  table.mesh = mesh;
  table.states = static_cast<std::size_t>(s_count);
  table.value.assign(n, DenseMatrix::Zero(t_count, s_count));
  table.argmax.assign(n, IndexMatrix::Constant(t_count, s_count, -1));

  // cont[c].col(j') holds (P_c^{γ(j'−j)} M_{i−1}(j'))(·) for the current j.
  std::vector<DenseMatrix> cont(terms.size(), DenseMatrix::Zero(s_count, t_count));
  DenseMatrix scratch(s_count, t_count);
  DenseMatrix objective(s_count, t_count);
  Vector best(s_count);

  for (int i = 1; i <= n; ++i) {
    DenseMatrix& m = table.value[i - 1];
    IndexMatrix& arg = table.argmax[i - 1];
    const DenseMatrix* prev = i > 1 ? &table.value[i - 2] : nullptr;

    for (Eigen::Index j = t_count - 2; j >= 0; --j) {
      const Eigen::Index width = t_count - 1 - j;
      auto obj = objective.leftCols(width);
      obj.setZero();
      for (std::size_t c = 0; c < terms.size(); ++c) {
        const auto info = terms[c].info->topRows(width).transpose();
        if (prev != nullptr) {
          auto block = cont[c].middleCols(j + 1, width);
          block.col(0) = prev->row(j + 1).transpose();
          scratch.leftCols(width).noalias() = *terms[c].stride * block;
          block = scratch.leftCols(width);
          obj += terms[c].weight * (info + block);
        } else {
          obj += terms[c].weight * info;
        }
      }
      // Smallest maximizer: scan lags upward, replace only on strict gain.
      best = obj.col(0);
      auto arg_row = arg.row(j);
      arg_row.setConstant(static_cast<std::int32_t>(j + 1));
      for (Eigen::Index k = 1; k < width; ++k) {
        const auto col = obj.col(k);
        for (Eigen::Index x = 0; x < s_count; ++x) {
          if (col[x] > best[x]) {
            best[x] = col[x];
            arg_row[x] = static_cast<std::int32_t>(j + 1 + k);
          }
        }
      }
      m.row(j) = best.transpose();
    }
  }
  return table;
}

}  // namespace

Prior Prior::uniform(const CandidateGrid& grid) {
  Prior p;
  p.values = grid.values();
  p.weights.assign(grid.size(), 1.0 / static_cast<double>(grid.size()));
  return p;
}

Prior Prior::point_mass(const CandidateGrid& grid, double theta) {
  Prior p;
  p.values = grid.values();
  p.weights.assign(grid.size(), 0.0);
  p.weights[grid.nearest(theta)] = 1.0;
  return p;
}

void Prior::validate() const {
  if (values.empty()) throw ConfigError("prior has no candidates");
  if (weights.size() != values.size()) {
    throw ConfigError(fmt::format("prior has {} weights for {} candidates", weights.size(),
                                  values.size()));
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("prior weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > kWeightTol) {
    throw ConfigError(fmt::format("prior weights sum to {:.17g}, not 1", sum));
  }
}

FitgTable compute_fitg(const FisherProfile& profile, const DenseMatrix& stride,
                       const TimeMesh& mesh, int n) {
  const Term term{&stride, &profile.values, 1.0};
  return run_dp(std::span(&term, 1), mesh, n);
}

FitgTable compute_fitg(const FisherProfile& profile, const TransitionKernel& kernel,
                       const TimeMesh& mesh, int n) {
  return compute_fitg(profile, stride_power(kernel, mesh.dilation()), mesh, n);
}

FitgTable compute_fitg(const ThetaComponent& component, const TimeMesh& mesh, int n) {
  return compute_fitg(component.profile, component.stride, mesh, n);
}

FitgTable averaged_fitg(std::span<const ThetaComponent> components, const Prior& prior,
                        const TimeMesh& mesh, int n) {
  prior.validate();
  if (components.size() != prior.size()) {
    throw ConfigError(fmt::format("prior has {} candidates but {} components were supplied",
                                  prior.size(), components.size()));
  }
  std::vector<Term> terms;
  for (std::size_t c = 0; c < components.size(); ++c) {
    if (prior.weights[c] > 0.0) {
      terms.push_back({&components[c].stride, &components[c].profile.values, prior.weights[c]});
    }
  }
  return run_dp(terms, mesh, n);
}

int next_index(const FitgTable& table, int i, int mesh_index, std::size_t state) {
  if (i < 1 || i > table.n) {
    throw ConfigError(fmt::format("observation index {} outside 1..{}", i, table.n));
  }
  if (mesh_index < 0 || mesh_index >= table.mesh.size()) {
    throw StateError(fmt::format("mesh index {} outside the horizon", mesh_index));
  }
  if (state >= table.states) throw ConfigError(fmt::format("state {} out of range", state));
  // Observation i is scheduled by the table with n − i + 1 observations to go.
  const int next = table.t_hat(table.n - i + 1)(mesh_index, static_cast<Eigen::Index>(state));
  if (next < 0) {
    throw StateError(fmt::format("no mesh point remains after t={} (last is {})",
                                 table.mesh.time(mesh_index),
                                 table.mesh.time(table.mesh.last())));
  }
  return next;
}

double next_time(const FitgTable& table, int i, double s, std::span<const double> x,
                 const StateGrid& grid) {
  if (grid.size() != table.states) throw ConfigError("grid does not match the policy table");
  if (!(s >= 0.0)) throw ConfigError("observation time must be nonnegative");
  if (s > table.mesh.time(table.mesh.last()) * (1.0 + 1e-9) + 1e-12) {
    throw StateError(fmt::format("time {} is beyond the last mesh point {}", s,
                                 table.mesh.time(table.mesh.last())));
  }
  const int j = table.mesh.floor_index(s);
  return table.mesh.time(next_index(table, i, j, grid.nearest(x)));
}

Heatmap export_heatmap(const FitgTable& table, int i, const StateGrid& grid,
                       const HeatmapSlice& slice) {
  if (i < 1 || i > table.n) {
    throw ConfigError(fmt::format("heat map index {} outside 1..{}", i, table.n));
  }
  if (grid.size() != table.states) throw ConfigError("grid does not match the policy table");
  if (slice.axis >= grid.dimension()) {
    throw ConfigError(fmt::format("slice axis {} but the grid has {} axes", slice.axis,
                                  grid.dimension()));
  }
  std::vector<double> anchor(grid.dimension());
  for (std::size_t a = 0; a < grid.dimension(); ++a) {
    anchor[a] = a < slice.at.size() ? slice.at[a] : grid.axis(a).lo;
  }
  anchor[slice.axis] = grid.axis(slice.axis).lo;
  const std::size_t base = grid.nearest(anchor);

  Heatmap map;
  map.i = i;
  const std::size_t count = grid.points(slice.axis);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t st = base + k * grid.stride(slice.axis);
    map.states.push_back(st);
    map.positions.push_back(grid.coordinate(st, slice.axis));
  }
  const auto& arg = table.t_hat(table.n - i + 1);
  const Eigen::Index rows = table.mesh.size();
  map.t_hat.resize(rows, static_cast<Eigen::Index>(count));
  for (Eigen::Index j = 0; j < rows; ++j) {
    map.times.push_back(table.mesh.time(static_cast<int>(j)));
    for (std::size_t k = 0; k < count; ++k) {
      const int next = arg(j, static_cast<Eigen::Index>(map.states[k]));
      map.t_hat(j, static_cast<Eigen::Index>(k)) =
          next < 0 ? std::numeric_limits<double>::quiet_NaN() : table.mesh.time(next);
    }
  }
  return map;
}

void write_heatmap_csv(std::ostream& out, const Heatmap& map) {
  out << 's';
  for (double x : map.positions) fmt::print(out, ",{}", x);
  out << '\n';
  for (std::size_t j = 0; j < map.times.size(); ++j) {
    fmt::print(out, "{}", map.times[j]);
    for (std::size_t k = 0; k < map.positions.size(); ++k) {
      const double v = map.t_hat(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
      if (std::isnan(v)) {
        out << ',';
      } else {
        fmt::print(out, ",{}", v);
      }
    }
    out << '\n';
  }
}

}  // namespace infosched
