#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "infosched/chain.hpp"
#include "infosched/info.hpp"
#include "infosched/model.hpp"

namespace infosched {

/// What the dynamic programs need from one parameter value: the dense
/// P_θ^γ used for expectations and the information profile.
struct ThetaComponent {
  double theta = 0.0;
  DenseMatrix stride;
  FisherProfile profile;
};

struct BankOptions {
  double dtheta = 0.0;
  int max_lag = 1;
  /// Upper bound on dense-matrix memory held at once; exceeding it is a
  /// ConfigError suggesting a coarser grid.
  std::size_t memory_budget_bytes = std::size_t{3} << 30;
};

/// Builds components for each θ in `thetas`. Kernels at θ ± Δθ are shared
/// between neighbors (on a grid with spacing Δθ most of them coincide) and
/// all power streams advance in lockstep. When θ − Δθ is outside the
/// model's parameter domain the difference becomes one-sided.
std::vector<ThetaComponent> build_theta_bank(const DiffusionModel& model, const StateGrid& grid,
                                             const TimeMesh& mesh,
                                             std::span<const double> thetas,
                                             const BankOptions& options);

inline ThetaComponent build_component(const DiffusionModel& model, const StateGrid& grid,
                                      const TimeMesh& mesh, double theta,
                                      const BankOptions& options) {
  const double one[] = {theta};
  return std::move(build_theta_bank(model, grid, mesh, one, options).front());
}

}  // namespace infosched
