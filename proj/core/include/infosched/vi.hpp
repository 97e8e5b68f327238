#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "infosched/bank.hpp"
#include "infosched/chain.hpp"
#include "infosched/policy.hpp"

namespace infosched {

struct ViOptions {
  double discount = 0.95;
  /// L¹ stopping tolerance; 0 selects 1e-6 per state.
  double tolerance = 0.0;
  /// Largest waiting time in mesh steps, ⌊(τ/n)/(γδ)⌋.
  int max_lag = 1;
  /// Components whose posterior weight falls below this are left out of the
  /// Bellman operator.
  double weight_floor = 1e-12;
};

/// Largest waiting lag allowed by the τ/n truncation.
int vi_max_lag(const TimeMesh& mesh, int n);

struct ViPolicy {
  Vector value;             ///< v̂ per state
  std::vector<int> wait;    ///< Δ̂ per state, in mesh steps (1..max_lag)
  double discount = 0.0;
  double tolerance = 0.0;
  double residual = 0.0;    ///< ‖f(v̂) − v̂‖₁
  int iterations = 0;
  int max_lag = 0;
  std::vector<double> sup_diffs;  ///< ‖w_{k+1} − w_k‖_∞ per iteration
};

/// Discounted-information value iteration
///   w(x) = max_Δ Σ_c π_c [ I_c(Δ, x) + λ (P_c^{γΔ} v)(x) ],
/// stopping once ‖f(v) − v‖₁ ≤ ε. Returns that v with the smallest maximizing
/// Δ of f(v). `warm_start` seeds v (otherwise v = 0).
ViPolicy value_iterate(std::span<const ThetaComponent> components, const Prior& prior,
                       const ViOptions& options, const Vector* warm_start = nullptr);

/// One application of the Bellman operator; fills `wait` with smallest
/// maximizers when non-null.
Vector bellman(std::span<const ThetaComponent> components, std::span<const double> weights,
               const Vector& v, double discount, int max_lag, double weight_floor,
               std::vector<int>* wait = nullptr);

/// Bayes update of the prior by the likelihood of moving from→to in `lag`
/// strides: π(φ) ∝ [P_φ^{γ·lag}]_{from,to} π(φ). Throws NumericError when
/// every likelihood vanishes.
Prior posterior_update(const Prior& prior, std::size_t from, std::size_t to, int lag,
                       std::span<const DenseMatrix* const> strides);
Prior posterior_update(const Prior& prior, std::size_t from, std::size_t to, int lag,
                       std::span<const ThetaComponent> components);
/// Kernel form: the likelihood uses stride·lag single chain steps.
Prior posterior_update(const Prior& prior, std::size_t from, std::size_t to, int lag,
                       std::span<const TransitionKernel> kernels, int stride);

/// Running state of one adaptive schedule under the discounted policy.
struct ViSession {
  ViPolicy policy;
  Prior prior;
  ViOptions options;
  int n = 0;
  int k = 0;                    ///< observations taken (excluding the initial state)
  bool started = false;         ///< initial state recorded
  int mesh_index = 0;           ///< mesh index of the last observation
  std::size_t state = 0;        ///< grid state of the last observation
  bool recompute = true;
};

struct ViStep {
  std::optional<int> next_index;  ///< empty once the budget or horizon is spent
  bool exhausted = false;
};

/// Records an observation at (mesh_index, state). The first call fixes the
/// initial state; later calls count against the budget n, update the prior
/// with the observed transition and, when `session.recompute` is set, re-solve
/// the policy warm-started from the previous v̂. Throws StateError when the
/// budget is spent or time does not advance.
ViStep vi_session_step(ViSession& session, std::span<const ThetaComponent> components,
                       const TimeMesh& mesh, int mesh_index, std::size_t state);

}  // namespace infosched
