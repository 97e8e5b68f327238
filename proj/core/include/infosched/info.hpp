#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>

#include "infosched/chain.hpp"

namespace infosched {

/// Terms with p_mid(y) below this are dropped from the information sum.
inline constexpr double kDensityFloor = 1e-300;

/// Expected Fisher information I(lag·γδ, x) for lags 1..max_lag.
struct FisherProfile {
  DenseMatrix values;  ///< row lag-1, column state
  double lag_time = 0.0;
  double theta = 0.0;
  double dtheta = 0.0;

  int max_lag() const noexcept { return static_cast<int>(values.rows()); }
  std::size_t states() const noexcept { return static_cast<std::size_t>(values.cols()); }
  double at(int lag, std::size_t state) const {
    return values(lag - 1, static_cast<Eigen::Index>(state));
  }
};

/// Per-row information from three transition-probability matrices sharing
/// row/column layout: Σ_y ((p_hi − p_lo)/(θ_hi − θ_lo))² / p_mid over
/// p_mid(y) > floor. This is E[(∂θ log p)²] with a finite-difference score.
Vector fisher_rows(const DenseMatrix& p_lo, const DenseMatrix& p_hi, const DenseMatrix& p_mid,
                   double theta_lo, double theta_hi, double floor = kDensityFloor);

/// Profile over all states from three synchronized power streams.
/// `minus` and `plus` bracket θ = mid.theta(); a central difference when they
/// are symmetric, one-sided when one of them coincides with mid.
FisherProfile fisher_profile(const TransitionKernel& minus, const TransitionKernel& plus,
                             const TransitionKernel& mid, int stride, int max_lag,
                             double floor = kDensityFloor);

/// Information for a few start states at arbitrary chain-step counts, by
/// propagating point masses. Result is steps.size() × states.size().
DenseMatrix fisher_at_states(const TransitionKernel& minus, const TransitionKernel& plus,
                             const TransitionKernel& mid, std::span<const std::size_t> states,
                             std::span<const std::int64_t> steps,
                             double floor = kDensityFloor);

/// Exact expected information about α carried by one observation of the
/// Ornstein–Uhlenbeck process dx = −αx dt + σ dw at time t, started at x.
double gaussian_ou_oracle(double alpha, double sigma, double x, double t);

/// CSV export: "# lag_time=…,theta=…,dtheta=…" then one row per lag:
/// "lag,I(state 0),I(state 1),…".
void write_profile_csv(std::ostream& out, const FisherProfile& profile);

}  // namespace infosched
