#include "infosched/info.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

void check_triplet(const TransitionKernel& minus, const TransitionKernel& plus,
                   const TransitionKernel& mid) {
  if (minus.size() != mid.size() || plus.size() != mid.size()) {
    throw ConfigError("fisher: kernels are built on different grids");
  }
  if (minus.delta() != mid.delta() || plus.delta() != mid.delta()) {
    throw ConfigError("fisher: kernels use different chain steps");
  }
  if (!(plus.theta() > minus.theta())) {
    throw ConfigError("fisher: parameter offset must be positive (plus.theta > minus.theta)");
  }
}

}  // namespace

Vector fisher_rows(const DenseMatrix& p_lo, const DenseMatrix& p_hi, const DenseMatrix& p_mid,
                   double theta_lo, double theta_hi, double floor) {
  const double inv = 1.0 / (theta_hi - theta_lo);
  const auto score = (p_hi - p_lo).array() * inv;
  const auto keep = p_mid.array() > floor;
  return keep.select(score.square() / p_mid.array(), 0.0).rowwise().sum();
}

FisherProfile fisher_profile(const TransitionKernel& minus, const TransitionKernel& plus,
                             const TransitionKernel& mid, int stride, int max_lag,
                             double floor) {
  check_triplet(minus, plus, mid);
  if (max_lag < 1) throw ConfigError("fisher: max_lag must be >= 1");

  FisherProfile profile;
  profile.values.resize(max_lag, static_cast<Eigen::Index>(mid.size()));
  profile.lag_time = mid.delta() * stride;
  profile.theta = mid.theta();
  profile.dtheta = 0.5 * (plus.theta() - minus.theta());

  PowerStream lo(minus, stride, max_lag);
  PowerStream hi(plus, stride, max_lag);
  PowerStream md(mid, stride, max_lag);
  while (lo.advance() && hi.advance() && md.advance()) {
    profile.values.row(md.lag() - 1) =
        fisher_rows(lo.current(), hi.current(), md.current(), minus.theta(), plus.theta(), floor)
            .transpose();
  }
  return profile;
}

DenseMatrix fisher_at_states(const TransitionKernel& minus, const TransitionKernel& plus,
                             const TransitionKernel& mid, std::span<const std::size_t> states,
                             std::span<const std::int64_t> steps, double floor) {
  check_triplet(minus, plus, mid);
  if (!std::is_sorted(steps.begin(), steps.end())) {
    throw ConfigError("fisher_at_states: step counts must be ascending");
  }
  const auto n = static_cast<Eigen::Index>(mid.size());
  const auto m = static_cast<Eigen::Index>(states.size());
  // Column c of each block is the distribution started from states[c].
  DenseMatrix lo = DenseMatrix::Zero(n, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    if (states[c] >= mid.size()) throw ConfigError("fisher_at_states: state out of range");
    lo(static_cast<Eigen::Index>(states[c]), c) = 1.0;
  }
  DenseMatrix hi = lo;
  DenseMatrix md = lo;
  DenseMatrix next(n, m);

  const auto lo_t = minus.matrix().transpose();
  const auto hi_t = plus.matrix().transpose();
  const auto md_t = mid.matrix().transpose();

  DenseMatrix out(static_cast<Eigen::Index>(steps.size()), m);
  std::int64_t done = 0;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    for (; done < steps[k]; ++done) {
      next.noalias() = lo_t * lo;
      lo.swap(next);
      next.noalias() = hi_t * hi;
      hi.swap(next);
      next.noalias() = md_t * md;
      md.swap(next);
    }
    out.row(static_cast<Eigen::Index>(k)) =
        fisher_rows(lo.transpose(), hi.transpose(), md.transpose(), minus.theta(), plus.theta(),
                    floor)
            .transpose();
  }
  return out;
}

double gaussian_ou_oracle(double alpha, double sigma, double x, double t) {
  if (!(t > 0)) throw ConfigError("gaussian_ou_oracle: t must be positive");
  if (!(alpha > 0)) throw ConfigError("gaussian_ou_oracle: alpha must be positive");
  const double decay = std::exp(-alpha * t);
  const double decay2 = decay * decay;
  const double s2 = sigma * sigma;
  const double dmean = -x * t * decay;
  const double var = s2 * (1.0 - decay2) / (2.0 * alpha);
  const double dvar = s2 * (t * decay2 / alpha - (1.0 - decay2) / (2.0 * alpha * alpha));
  return dmean * dmean / var + dvar * dvar / (2.0 * var * var);
}

void write_profile_csv(std::ostream& out, const FisherProfile& profile) {
  fmt::print(out, "# lag_time={},theta={},dtheta={}\n", profile.lag_time, profile.theta,
             profile.dtheta);
  for (int lag = 1; lag <= profile.max_lag(); ++lag) {
    fmt::print(out, "{}", lag);
    for (std::size_t s = 0; s < profile.states(); ++s) {
      fmt::print(out, ",{:.17g}", profile.at(lag, s));
    }
    out << '\n';
  }
}

}  // namespace infosched
