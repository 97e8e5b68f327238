#include "infosched/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

using RowMajorDense = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kRowSumTol = 1e-12;

// Rate of leaving state x per unit δ: tr(σσᵀ)/h² + Σ|f_i|/h.
double exit_rate(std::span<const double> f, std::span<const double> s, double h) {
  double rate = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) rate += s[i] * s[i] / (h * h) + std::abs(f[i]) / h;
  return rate;
}

void check_finite(const DiffusionModel& model, std::span<const double> f,
                  std::span<const double> s, std::span<const double> x, double theta) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f[i]) || !std::isfinite(s[i])) {
      throw NumericError(fmt::format("model {}: non-finite drift/noise component {} at x=({}) "
                                     "theta={}",
                                     model.name(), i, fmt::join(x, ", "), theta));
    }
  }
}

}  // namespace

TransitionKernel TransitionKernel::from_matrix(SparseMatrix matrix, double theta, double delta,
                                               double spacing) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) {
    throw ConfigError("transition matrix must be square and nonempty");
  }
  matrix.makeCompressed();
  for (Eigen::Index r = 0; r < matrix.outerSize(); ++r) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(matrix, r); it; ++it) {
      if (!(it.value() >= 0.0 && it.value() <= 1.0)) {
        throw ConfigError(fmt::format("transition matrix entry ({}, {}) = {} outside [0, 1]", r,
                                      it.col(), it.value()));
      }
      sum += it.value();
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      throw ConfigError(fmt::format("transition matrix row {} sums to {}", r, sum));
    }
  }
  TransitionKernel k;
  k.p_ = std::move(matrix);
  k.theta_ = theta;
  k.delta_ = delta;
  k.spacing_ = spacing;
  return k;
}

double max_stable_delta(const DiffusionModel& model, const StateGrid& grid, double theta) {
  const std::size_t d = grid.dimension();
  std::vector<double> x(d), f(d), s(d);
  double worst = 0.0;
  for (std::size_t st = 0; st < grid.size(); ++st) {
    grid.coordinates(st, x);
    model.drift(x, theta, f);
    model.noise_diag(x, theta, s);
    check_finite(model, f, s, x, theta);
    worst = std::max(worst, exit_rate(f, s, grid.spacing()));
  }
  if (worst == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / worst;
}

TransitionKernel build_kernel(const DiffusionModel& model, const StateGrid& grid, double theta,
                              double delta) {
  if (!(delta > 0)) throw ConfigError("chain step delta must be positive");
  if (model.dimension() != grid.dimension()) {
    throw ConfigError(fmt::format("model {} has dimension {}, grid has {}", model.name(),
                                  model.dimension(), grid.dimension()));
  }
  if (!model.admits(theta)) {
    throw ConfigError(fmt::format("theta={} is outside the parameter domain of model {}", theta,
                                  model.name()));
  }
  const std::size_t d = grid.dimension();
  const double h = grid.spacing();
  std::vector<double> x(d), f(d), s(d);

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(grid.size() * (2 * d + 1));
  double max_folded = 0.0;

  for (std::size_t st = 0; st < grid.size(); ++st) {
    grid.coordinates(st, x);
    model.drift(x, theta, f);
    model.noise_diag(x, theta, s);
    check_finite(model, f, s, x, theta);

    double moved = 0.0;
    double folded = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const double diffusive = s[a] * s[a] * delta / (2.0 * h * h);
      const double up = diffusive + std::max(f[a], 0.0) * delta / h;
      const double down = diffusive + std::max(-f[a], 0.0) * delta / h;
      moved += up + down;
      if (auto nb = grid.neighbor(st, a, +1)) {
        if (up > 0) triplets.emplace_back(st, *nb, up);
      } else {
        folded += up;
      }
      if (auto nb = grid.neighbor(st, a, -1)) {
        if (down > 0) triplets.emplace_back(st, *nb, down);
      } else {
        folded += down;
      }
    }
    const double stay = 1.0 - moved;
    if (stay < -1e-12) {
      const double bound = max_stable_delta(model, grid, theta);
      throw StabilityError(
          fmt::format("model {} at theta={}: delta={} makes the stay-probability negative at "
                      "x=({}); the largest stable delta on this grid is {:.6g}",
                      model.name(), theta, delta, fmt::join(x, ", "), bound),
          bound);
    }
    triplets.emplace_back(st, st, std::max(stay, 0.0) + folded);
    max_folded = std::max(max_folded, folded);
  }

  TransitionKernel k;
  k.p_.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(grid.size()));
  k.p_.setFromTriplets(triplets.begin(), triplets.end());
  k.p_.makeCompressed();
  k.theta_ = theta;
  k.delta_ = delta;
  k.spacing_ = h;
  k.max_folded_ = max_folded;
  return k;
}

Vector propagate(const TransitionKernel& kernel, const Vector& initial, std::int64_t steps) {
  if (static_cast<std::size_t>(initial.size()) != kernel.size()) {
    throw ConfigError(fmt::format("distribution has {} entries, kernel has {} states",
                                  initial.size(), kernel.size()));
  }
  if (steps < 0) throw ConfigError("propagate: step count must be nonnegative");
  Vector v = initial;
  Vector next(v.size());
  const auto pt = kernel.matrix().transpose();
  for (std::int64_t k = 0; k < steps; ++k) {
    next.noalias() = pt * v;
    v.swap(next);
  }
  return v;
}

DenseMatrix stride_power(const TransitionKernel& kernel, int stride) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  const auto n = static_cast<Eigen::Index>(kernel.size());
  // Row-major operands keep the sparse-times-dense update contiguous.
  RowMajorDense power = RowMajorDense::Identity(n, n);
  RowMajorDense next(n, n);
  for (int k = 0; k < stride; ++k) {
    next.noalias() = kernel.matrix() * power;
    power.swap(next);
  }
  return power;
}

PowerStream::PowerStream(const TransitionKernel& kernel, int stride, int max_lag)
    : PowerStream(stride_power(kernel, stride), max_lag) {}

PowerStream::PowerStream(DenseMatrix stride_matrix, int max_lag)
    : stride_(std::move(stride_matrix)), max_lag_(max_lag) {
  if (max_lag_ < 0) throw ConfigError("power stream: max_lag must be nonnegative");
}

bool PowerStream::advance() {
  if (lag_ >= max_lag_) {
    lag_ = max_lag_ + 1;
    return false;
  }
  if (lag_ == 0) {
    current_ = stride_;
  } else {
    scratch_.noalias() = stride_ * current_;
    current_.swap(scratch_);
  }
  ++lag_;
  return true;
}

void write_kernel(std::ostream& out, const TransitionKernel& kernel) {
  fmt::print(out, "{} {} {} {}\n", kernel.size(), kernel.spacing(), kernel.delta(),
             kernel.theta());
  const auto& p = kernel.matrix();
  for (Eigen::Index r = 0; r < p.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(p, r); it; ++it) {
      fmt::print(out, "{} {} {:.17g}\n", r, it.col(), it.value());
    }
  }
}

}  // namespace infosched
