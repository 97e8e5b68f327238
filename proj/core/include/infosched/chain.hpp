#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "infosched/model.hpp"

namespace infosched {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One-step (duration δ) transition matrix of the locally consistent chain.
///
/// Row i holds the probabilities of moving from state i; there are at most
/// 2d+1 nonzeros per row (stay, and ±h along each axis).
class TransitionKernel {
 public:
  /// Wraps a hand-built matrix (used for toy chains). Rows must be
  /// probability vectors within 1e-12.
  static TransitionKernel from_matrix(SparseMatrix matrix, double theta, double delta,
                                      double spacing = 0.0);

  const SparseMatrix& matrix() const noexcept { return p_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(p_.rows()); }
  double theta() const noexcept { return theta_; }
  double delta() const noexcept { return delta_; }
  double spacing() const noexcept { return spacing_; }

  /// Largest per-row probability that was folded back onto the diagonal
  /// because its target lay off the grid. Diagnostic only.
  double max_folded_mass() const noexcept { return max_folded_; }

 private:
  friend TransitionKernel build_kernel(const DiffusionModel&, const StateGrid&, double, double);

  SparseMatrix p_;
  double theta_ = 0.0;
  double delta_ = 0.0;
  double spacing_ = 0.0;
  double max_folded_ = 0.0;
};

/// Builds the upwind chain: for each axis i,
///   P(x -> x ± h e_i) = (σσᵀ)_ii δ/(2h²) + f_i^± δ/h,
/// with the remaining mass on the diagonal and off-grid moves folded into it.
/// Throws StabilityError when some stay-probability would be negative.
TransitionKernel build_kernel(const DiffusionModel& model, const StateGrid& grid, double theta,
                              double delta);

/// Largest δ for which every stay-probability on the grid is nonnegative;
/// +infinity when the model has no motion anywhere on the grid.
double max_stable_delta(const DiffusionModel& model, const StateGrid& grid, double theta);

/// Distribution after k chain steps, initialᵀ Pᵏ.
Vector propagate(const TransitionKernel& kernel, const Vector& initial, std::int64_t steps);

/// Dense P^stride, formed by `stride` sparse-times-dense products.
DenseMatrix stride_power(const TransitionKernel& kernel, int stride);

/// Yields P^γ, P^{2γ}, …, P^{γ·max_lag} in order.
///
/// Each power comes from its predecessor by one product with the dense
/// stride power. The stream holds the stride power, the current power and
/// one scratch matrix.
class PowerStream {
 public:
  PowerStream(const TransitionKernel& kernel, int stride, int max_lag);
  PowerStream(DenseMatrix stride_matrix, int max_lag);

  /// Moves to the next lag. Returns false once max_lag has been passed.
  bool advance();

  /// Lag of current(); 0 before the first advance().
  int lag() const noexcept { return lag_; }
  int max_lag() const noexcept { return max_lag_; }
  const DenseMatrix& current() const noexcept { return current_; }
  const DenseMatrix& stride_matrix() const noexcept { return stride_; }

 private:
  DenseMatrix stride_;
  DenseMatrix current_;
  DenseMatrix scratch_;
  int max_lag_;
  int lag_ = 0;
};

/// Coordinate-list export: header line "<states> <h> <delta> <theta>", then
/// one "<row> <col> <prob>" line per nonzero in row-major order.
void write_kernel(std::ostream& out, const TransitionKernel& kernel);

}  // namespace infosched
