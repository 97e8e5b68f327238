#include "infosched/bank.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

struct Stream {
  double theta;
  std::optional<PowerStream> powers;
};

std::size_t find_or_add(std::vector<double>& values, double theta, double tol) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (std::abs(values[i] - theta) <= tol) return i;
  }
  values.push_back(theta);
  return values.size() - 1;
}

}  // namespace

std::vector<ThetaComponent> build_theta_bank(const DiffusionModel& model, const StateGrid& grid,
                                             const TimeMesh& mesh,
                                             std::span<const double> thetas,
                                             const BankOptions& options) {
  if (thetas.empty()) return {};
  if (!(options.dtheta > 0)) throw ConfigError("theta bank: dtheta must be positive");
  if (options.max_lag < 1) throw ConfigError("theta bank: max_lag must be >= 1");

  // Unique kernel parameters and, per requested θ, indices of (lo, mid, hi).
  const double tol = 1e-9 * options.dtheta;
  std::vector<double> unique;
  struct Triple {
    std::size_t lo, mid, hi;
  };
  std::vector<Triple> triples;
  for (double theta : thetas) {
    const std::size_t mid = find_or_add(unique, theta, tol);
    const double lo_theta = theta - options.dtheta;
    const std::size_t lo = model.admits(lo_theta) ? find_or_add(unique, lo_theta, tol) : mid;
    const std::size_t hi = find_or_add(unique, theta + options.dtheta, tol);
    triples.push_back({lo, mid, hi});
  }

  const std::size_t n = grid.size();
  const std::size_t bytes = (3 * unique.size() + thetas.size()) * n * n * sizeof(double);
  if (bytes > options.memory_budget_bytes) {
    throw ConfigError(fmt::format(
        "theta bank needs {:.1f} MiB for {} kernels on {} states (budget {:.1f} MiB); use a "
        "coarser grid (--scale desk) or fewer candidates",
        bytes / 1048576.0, unique.size(), n, options.memory_budget_bytes / 1048576.0));
  }

  std::vector<Stream> streams;
  streams.reserve(unique.size());
  for (double theta : unique) {
    const auto kernel = build_kernel(model, grid, theta, mesh.delta());
    streams.push_back({theta, PowerStream(kernel, mesh.dilation(), options.max_lag)});
  }

  std::vector<ThetaComponent> out(thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    auto& c = out[k];
    c.theta = streams[triples[k].mid].theta;
    c.profile.values.resize(options.max_lag, static_cast<Eigen::Index>(n));
    c.profile.lag_time = mesh.step();
    c.profile.theta = c.theta;
    c.profile.dtheta = 0.5 * (streams[triples[k].hi].theta - streams[triples[k].lo].theta);
  }

  for (int lag = 1; lag <= options.max_lag; ++lag) {
    for (auto& s : streams) s.powers->advance();
    for (std::size_t k = 0; k < thetas.size(); ++k) {
      const auto& [lo, mid, hi] = triples[k];
      out[k].profile.values.row(lag - 1) =
          fisher_rows(streams[lo].powers->current(), streams[hi].powers->current(),
                      streams[mid].powers->current(), streams[lo].theta, streams[hi].theta)
              .transpose();
    }
  }

  std::vector<DenseMatrix> strides(streams.size());
  for (std::size_t u = 0; u < streams.size(); ++u) {
    strides[u] = streams[u].powers->stride_matrix();
    streams[u].powers.reset();
  }
  for (std::size_t k = 0; k < thetas.size(); ++k) out[k].stride = strides[triples[k].mid];
  return out;
}

}  // namespace infosched
