#include "infosched/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate),
                    static_cast<std::uint32_t>(replicate >> 32)};
  return std::mt19937_64(seq);
}

void check_sequence(const std::vector<Observation>& seq, std::size_t index, std::size_t states) {
  if (seq.size() < 2) {
    throw ConfigError(fmt::format("sequence {} needs at least one transition", index));
  }
  for (std::size_t k = 0; k < seq.size(); ++k) {
    if (seq[k].state >= states) {
      throw ConfigError(fmt::format("sequence {} observation {} is off the grid", index, k));
    }
    if (k > 0 && seq[k].mesh_index <= seq[k - 1].mesh_index) {
      throw ConfigError(fmt::format("sequence {} times are not strictly increasing", index));
    }
  }
}

}  // namespace

SamplePath simulate_path(const DiffusionModel& model, double theta, std::span<const double> x0,
                         double tau, double step, std::uint64_t seed, std::uint64_t replicate) {
  if (!(step > 0)) throw ConfigError("simulation step must be positive");
  if (!(tau > 0)) throw ConfigError("simulation horizon must be positive");
  const std::size_t d = model.dimension();
  if (x0.size() != d) {
    throw ConfigError(fmt::format("initial state has {} coordinates, model {} has dimension {}",
                                  x0.size(), model.name(), d));
  }
  const auto steps = static_cast<std::size_t>(std::ceil(tau / step - 1e-9));

  SamplePath path;
  path.step = step;
  path.dimension = d;
  path.theta = theta;
  path.seed = seed;
  path.replicate = replicate;
  path.states.resize((steps + 1) * d);
  std::copy(x0.begin(), x0.end(), path.states.begin());

  auto engine = replicate_engine(seed, replicate);
  std::normal_distribution<double> normal;
  const double root = std::sqrt(step);
  std::vector<double> f(d), s(d);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::span<const double> x(path.states.data() + k * d, d);
    const std::span<double> next(path.states.data() + (k + 1) * d, d);
    model.drift(x, theta, f);
    model.noise_diag(x, theta, s);
    for (std::size_t a = 0; a < d; ++a) {
      next[a] = x[a] + f[a] * step + s[a] * root * normal(engine);
      if (!std::isfinite(next[a])) {
        throw NumericError(fmt::format("model {}: path blew up at step {} (t={}) on axis {}",
                                       model.name(), k + 1, (k + 1) * step, a));
      }
    }
  }
  return path;
}

std::size_t observe(const SamplePath& path, double t, const StateGrid& grid, bool* clamped) {
  if (path.length() == 0) throw ConfigError("cannot observe an empty path");
  const auto k = std::min<long long>(std::max<long long>(std::llround(t / path.step), 0),
                                     static_cast<long long>(path.length() - 1));
  return grid.nearest(path.at(static_cast<std::size_t>(k)), clamped);
}

std::vector<double> uniform_times(int n, double tau) {
  if (n < 1) throw ConfigError("n must be >= 1");
  std::vector<double> times;
  for (int k = 1; k <= n; ++k) times.push_back(k * tau / n);
  return times;
}

std::vector<int> uniform_mesh_indices(int n, const TimeMesh& mesh) {
  std::vector<int> out;
  for (double t : uniform_times(n, mesh.horizon())) {
    out.push_back(std::min(mesh.floor_index(t), mesh.last()));
  }
  return out;
}

std::vector<LikelihoodCurve> ml_estimate(const DiffusionModel& model, const StateGrid& grid,
                                         const TimeMesh& mesh, const CandidateGrid& candidates,
                                         std::span<const std::vector<Observation>> sequences) {
  if (candidates.size() == 0) throw ConfigError("candidate grid is empty");
  struct Transition {
    std::size_t seq;
    std::size_t row;
    std::size_t to;
  };
  std::map<std::size_t, std::size_t> row_of;  // start state → row
  std::vector<std::size_t> row_state;
  std::vector<int> row_lag;
  std::vector<std::vector<Transition>> by_lag(1);
  for (std::size_t q = 0; q < sequences.size(); ++q) {
    const auto& seq = sequences[q];
    check_sequence(seq, q, grid.size());
    for (std::size_t k = 1; k < seq.size(); ++k) {
      const auto [it, added] = row_of.try_emplace(seq[k - 1].state, row_state.size());
      if (added) {
        row_state.push_back(seq[k - 1].state);
        row_lag.push_back(0);
      }
      const int lag = seq[k].mesh_index - seq[k - 1].mesh_index;
      row_lag[it->second] = std::max(row_lag[it->second], lag);
      if (by_lag.size() <= static_cast<std::size_t>(lag)) by_lag.resize(lag + 1);
      by_lag[lag].push_back({q, it->second, seq[k].state});
    }
  }

  // Rows sorted by how far they must be propagated so finished rows drop off
  // the bottom of the block.
  const std::size_t m = row_state.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row_lag[a] > row_lag[b]; });
  std::vector<std::size_t> position(m);
  for (std::size_t p = 0; p < m; ++p) position[order[p]] = p;

  const auto s_count = static_cast<Eigen::Index>(grid.size());
  std::vector<LikelihoodCurve> curves(sequences.size());
  for (auto& c : curves) c.loglik.assign(candidates.size(), 0.0);

  DenseMatrix rows(static_cast<Eigen::Index>(m), s_count);
  DenseMatrix scratch(static_cast<Eigen::Index>(m), s_count);
  const int max_lag = static_cast<int>(by_lag.size()) - 1;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto kernel = build_kernel(model, grid, candidates[c], mesh.delta());
    const DenseMatrix g = stride_power(kernel, mesh.dilation());
    rows.setZero();
    for (std::size_t p = 0; p < m; ++p) {
      rows(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(row_state[order[p]])) = 1.0;
    }
    std::size_t active = m;
    for (int lag = 1; lag <= max_lag; ++lag) {
      while (active > 0 && row_lag[order[active - 1]] < lag) --active;
      const auto a = static_cast<Eigen::Index>(active);
      scratch.topRows(a).noalias() = rows.topRows(a) * g;
      rows.topRows(a) = scratch.topRows(a);
      for (const auto& t : by_lag[lag]) {
        const double p = rows(static_cast<Eigen::Index>(position[t.row]),
                              static_cast<Eigen::Index>(t.to));
        curves[t.seq].loglik[c] += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
      }
    }
  }

  for (std::size_t q = 0; q < curves.size(); ++q) {
    auto& curve = curves[q];
    std::size_t best = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      if (curve.loglik[c] > curve.loglik[best]) best = c;
    }
    if (!std::isfinite(curve.loglik[best])) {
      throw NumericError(fmt::format(
          "sequence {} has zero likelihood under every candidate (impossible data)", q));
    }
    curve.argmax = best;
    curve.theta_hat = candidates[best];
  }
  return curves;
}

LikelihoodCurve ml_estimate(const DiffusionModel& model, const StateGrid& grid,
                            const TimeMesh& mesh, const CandidateGrid& candidates,
                            const std::vector<Observation>& sequence) {
  return ml_estimate(model, grid, mesh, candidates, std::span(&sequence, 1)).front();
}

std::string_view to_string(Design design) {
  switch (design) {
    case Design::policy:
      return "policy";
    case Design::uniform:
      return "uniform";
    case Design::averaged:
      return "averaged";
    case Design::vi:
      return "vi";
  }
  return "unknown";
}

Design parse_design(std::string_view text) {
  if (text == "policy" || text == "dp") return Design::policy;
  if (text == "uniform") return Design::uniform;
  if (text == "averaged") return Design::averaged;
  if (text == "vi") return Design::vi;
  throw ConfigError(
      fmt::format("unknown design '{}'; valid designs: policy, uniform, averaged, vi", text));
}

std::vector<Observation> schedule_path(Design design, const Setup& setup,
                                       const DesignInputs& inputs, const SamplePath& path) {
  const auto& mesh = setup.mesh;
  const int n = setup.config.n;
  std::vector<Observation> obs{{0, observe(path, 0.0, setup.grid)}};
  auto take = [&](int j) { obs.push_back({j, observe(path, mesh.time(j), setup.grid)}); };

  switch (design) {
    case Design::policy:
    case Design::averaged: {
      if (inputs.table == nullptr) {
        throw ConfigError(fmt::format("design {} needs a FITG table", to_string(design)));
      }
      for (int k = 1; k <= n && obs.back().mesh_index < mesh.last(); ++k) {
        take(next_index(*inputs.table, k, obs.back().mesh_index, obs.back().state));
      }
      break;
    }
    case Design::uniform: {
      for (int j : uniform_mesh_indices(n, mesh)) {
        if (j > obs.back().mesh_index) take(j);
      }
      break;
    }
    case Design::vi: {
      if (inputs.vi == nullptr) throw ConfigError("design vi needs a value-iteration policy");
      ViSession session;
      session.policy = *inputs.vi;
      session.prior = inputs.prior;
      session.options = inputs.vi_options;
      session.n = n;
      session.recompute = inputs.vi_recompute;
      auto step = vi_session_step(session, inputs.components, mesh, 0, obs.back().state);
      while (step.next_index) {
        take(*step.next_index);
        step = vi_session_step(session, inputs.components, mesh, obs.back().mesh_index,
                               obs.back().state);
      }
      break;
    }
  }
  return obs;
}

std::vector<ExperimentRecord> run_experiment(Design design, const Setup& setup,
                                             const DesignInputs& inputs, std::size_t replicates,
                                             std::uint64_t seed) {
  std::vector<ExperimentRecord> records(replicates);
  std::vector<std::vector<Observation>> sequences(replicates);
  const double step = setup.mesh.step() / 10.0;
  for (std::size_t r = 0; r < replicates; ++r) {
    const auto path = simulate_path(setup.model, setup.config.theta_true, setup.config.x0,
                                    setup.mesh.horizon(), step, seed, r);
    sequences[r] = schedule_path(design, setup, inputs, path);
  }
  if (replicates == 0) return records;
  auto curves = ml_estimate(setup.model, setup.grid, setup.mesh, setup.candidates, sequences);
  for (std::size_t r = 0; r < replicates; ++r) {
    records[r].replicate = r;
    records[r].design = design;
    records[r].observations = std::move(sequences[r]);
    records[r].theta_hat = curves[r].theta_hat;
    records[r].loglik = std::move(curves[r].loglik);
  }
  return records;
}

SummaryStats summarize(std::span<const double> estimates, double theta_true) {
  if (estimates.size() < 2) {
    throw ConfigError(fmt::format("summary statistics need at least 2 replicates, got {}",
                                  estimates.size()));
  }
  const auto r = static_cast<double>(estimates.size());
  SummaryStats s;
  s.replicates = estimates.size();
  s.mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / r;
  double ss = 0.0;
  for (double e : estimates) ss += (e - s.mean) * (e - s.mean);
  const double var = ss / (r - 1.0);
  s.bias = s.mean - theta_true;
  s.sd = std::sqrt(var);
  s.mse = s.bias * s.bias + var;
  return s;
}

SummaryStats summarize(std::span<const ExperimentRecord> records, double theta_true) {
  std::vector<double> estimates;
  estimates.reserve(records.size());
  for (const auto& rec : records) estimates.push_back(rec.theta_hat);
  return summarize(estimates, theta_true);
}

void write_records_csv(std::ostream& out, std::span<const ExperimentRecord> records,
                       const Setup& setup, bool header) {
  const int n = setup.config.n;
  if (header) {
    out << "replicate,design";
    for (int k = 1; k <= n; ++k) fmt::print(out, ",t_{}", k);
    for (int k = 1; k <= n; ++k) fmt::print(out, ",x_{}", k);
    out << ",theta_hat\n";
  }
  for (const auto& rec : records) {
    fmt::print(out, "{},{}", rec.replicate, to_string(rec.design));
    for (int k = 1; k <= n; ++k) {
      out << ',';
      if (static_cast<std::size_t>(k) < rec.observations.size()) {
        fmt::print(out, "{:.12g}", setup.mesh.time(rec.observations[k].mesh_index));
      }
    }
    for (int k = 1; k <= n; ++k) {
      out << ',';
      if (static_cast<std::size_t>(k) < rec.observations.size()) {
        const auto x = setup.grid.coordinates(rec.observations[k].state);
        for (std::size_t a = 0; a < x.size(); ++a) {
          fmt::print(out, "{}{:.12g}", a == 0 ? "" : ";", x[a]);
        }
      }
    }
    fmt::print(out, ",{:.12g}\n", rec.theta_hat);
  }
}

nlohmann::json stats_json(const SummaryStats& stats) {
  return {{"replicates", stats.replicates},
          {"mean", stats.mean},
          {"bias", stats.bias},
          {"sd", stats.sd},
          {"mse", stats.mse}};
}

}  // namespace infosched
