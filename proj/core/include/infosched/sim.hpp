#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "infosched/bank.hpp"
#include "infosched/catalog.hpp"
#include "infosched/policy.hpp"
#include "infosched/vi.hpp"

namespace infosched {

/// Euler–Maruyama realization; states are stored point-major.
struct SamplePath {
  double step = 0.0;
  std::size_t dimension = 0;
  double theta = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t replicate = 0;
  std::vector<double> states;

  std::size_t length() const noexcept { return dimension == 0 ? 0 : states.size() / dimension; }
  std::span<const double> at(std::size_t k) const {
    return std::span<const double>(states).subspan(k * dimension, dimension);
  }
};

/// Simulates ⌈τ/step⌉ Euler–Maruyama steps from x0. Normals come from a
/// generator keyed by (seed, replicate), so paths for different replicates
/// are independent and each path is reproducible on its own.
SamplePath simulate_path(const DiffusionModel& model, double theta, std::span<const double> x0,
                         double tau, double step, std::uint64_t seed,
                         std::uint64_t replicate = 0);

/// Path value at the step nearest t, rounded to the nearest lattice state
/// (ties toward +inf, clamped to the grid).
std::size_t observe(const SamplePath& path, double t, const StateGrid& grid,
                    bool* clamped = nullptr);

/// kτ/n for k = 1..n.
std::vector<double> uniform_times(int n, double tau);
/// uniform_times snapped down to the mesh, never past the last mesh point.
std::vector<int> uniform_mesh_indices(int n, const TimeMesh& mesh);

struct Observation {
  int mesh_index = 0;
  std::size_t state = 0;
};

struct LikelihoodCurve {
  std::vector<double> loglik;  ///< one entry per candidate
  std::size_t argmax = 0;
  double theta_hat = 0.0;
};

/// Grid ML estimates for many observation sequences at once. For each
/// candidate the chain powers are shared across all sequences. Each
/// sequence must hold the initial observation plus at least one more, with
/// strictly increasing mesh indices. Throws NumericError when a sequence has
/// zero likelihood under every candidate.
std::vector<LikelihoodCurve> ml_estimate(const DiffusionModel& model, const StateGrid& grid,
                                         const TimeMesh& mesh, const CandidateGrid& candidates,
                                         std::span<const std::vector<Observation>> sequences);
LikelihoodCurve ml_estimate(const DiffusionModel& model, const StateGrid& grid,
                            const TimeMesh& mesh, const CandidateGrid& candidates,
                            const std::vector<Observation>& sequence);

enum class Design { policy, uniform, averaged, vi };

std::string_view to_string(Design design);
Design parse_design(std::string_view text);

struct ExperimentRecord {
  std::size_t replicate = 0;
  Design design = Design::policy;
  std::vector<Observation> observations;  ///< k = 0..; entry 0 is the start
  double theta_hat = 0.0;
  std::vector<double> loglik;
};

/// Precomputed artifacts a design needs: a FITG table for policy/averaged,
/// a discounted policy plus the per-candidate components and prior for vi.
struct DesignInputs {
  const FitgTable* table = nullptr;
  const ViPolicy* vi = nullptr;
  std::span<const ThetaComponent> components;
  Prior prior;
  ViOptions vi_options;
  bool vi_recompute = true;
};

/// Simulates `replicates` paths at θ_true and walks the design over each.
/// Replicate r always uses the path keyed by (seed, r), so different
/// designs see identical paths.
std::vector<ExperimentRecord> run_experiment(Design design, const Setup& setup,
                                             const DesignInputs& inputs, std::size_t replicates,
                                             std::uint64_t seed);

/// Observation walk for one path, without estimation.
std::vector<Observation> schedule_path(Design design, const Setup& setup,
                                       const DesignInputs& inputs, const SamplePath& path);

struct SummaryStats {
  std::size_t replicates = 0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mse = 0.0;
};

/// bias = mean − θ, SD with divisor r − 1, MSE = bias² + SD². Needs ≥ 2.
SummaryStats summarize(std::span<const double> estimates, double theta_true);
SummaryStats summarize(std::span<const ExperimentRecord> records, double theta_true);

/// CSV: replicate,design,t_1..t_n,x_1..x_n,theta_hat. Coordinates of
/// multi-dimensional states are joined with ';'. Missing observations are
/// left empty.
void write_records_csv(std::ostream& out, std::span<const ExperimentRecord> records,
                       const Setup& setup, bool header = true);

nlohmann::json stats_json(const SummaryStats& stats);

}  // namespace infosched
