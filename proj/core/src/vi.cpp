#include "infosched/vi.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

void check_components(std::span<const ThetaComponent> components, std::size_t weights,
                      int max_lag) {
  if (components.empty()) throw ConfigError("value iteration needs at least one component");
  if (components.size() != weights) {
    throw ConfigError(fmt::format("prior has {} candidates but {} components were supplied",
                                  weights, components.size()));
  }
  const Eigen::Index s = components.front().stride.rows();
  for (const auto& c : components) {
    if (c.stride.rows() != s || c.stride.cols() != s || c.profile.values.cols() != s) {
      throw ConfigError("value iteration components disagree on the state count");
    }
    if (c.profile.max_lag() < max_lag) {
      throw ConfigError(fmt::format("information profile covers {} lags; max_lag is {}",
                                    c.profile.max_lag(), max_lag));
    }
  }
}

Prior normalized(const Prior& prior, std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericError(
        "posterior is degenerate: the observed transition has zero likelihood under every "
        "candidate with positive weight");
  }
  Prior out;
  out.values = prior.values;
  out.weights = std::move(weights);
  for (double& w : out.weights) w /= total;
  return out;
}

}  // namespace

int vi_max_lag(const TimeMesh& mesh, int n) {
  if (n < 1) throw ConfigError("n must be >= 1");
  const double lags = mesh.horizon() / n / mesh.step();
  return std::max(1, static_cast<int>(std::floor(lags + 1e-9)));
}

Vector bellman(std::span<const ThetaComponent> components, std::span<const double> weights,
               const Vector& v, double discount, int max_lag, double weight_floor,
               std::vector<int>* wait) {
  const Eigen::Index s = v.size();
  DenseMatrix q = DenseMatrix::Zero(s, max_lag);
  Vector u(s);
  Vector next(s);
  for (std::size_t c = 0; c < components.size(); ++c) {
    const double w = weights[c];
    if (!(w >= weight_floor) || w == 0.0) continue;
    const auto& g = components[c].stride;
    const auto& info = components[c].profile.values;
    u = v;
    for (int lag = 1; lag <= max_lag; ++lag) {
      next.noalias() = g * u;
      u.swap(next);
      q.col(lag - 1) += w * (info.row(lag - 1).transpose() + discount * u);
    }
  }
  Vector out = q.col(0);
  if (wait != nullptr) wait->assign(static_cast<std::size_t>(s), 1);
  for (int lag = 2; lag <= max_lag; ++lag) {
    const auto col = q.col(lag - 1);
    for (Eigen::Index x = 0; x < s; ++x) {
      if (col[x] > out[x]) {
        out[x] = col[x];
        if (wait != nullptr) (*wait)[static_cast<std::size_t>(x)] = lag;
      }
    }
  }
  return out;
}

ViPolicy value_iterate(std::span<const ThetaComponent> components, const Prior& prior,
                       const ViOptions& options, const Vector* warm_start) {
  prior.validate();
  if (!(options.discount > 0.0 && options.discount < 1.0)) {
    throw ConfigError(fmt::format("discount must lie in (0, 1), got {}", options.discount));
  }
  if (options.max_lag < 1) throw ConfigError("max_lag must be >= 1");
  check_components(components, prior.size(), options.max_lag);
  const Eigen::Index s = components.front().stride.rows();
  const double tol = options.tolerance > 0.0 ? options.tolerance : 1e-6 * static_cast<double>(s);

  ViPolicy policy;
  policy.discount = options.discount;
  policy.tolerance = tol;
  policy.max_lag = options.max_lag;

  Vector v = Vector::Zero(s);
  if (warm_start != nullptr) {
    if (warm_start->size() != s) throw ConfigError("warm start has the wrong length");
    v = *warm_start;
  }
  auto apply = [&](const Vector& x, std::vector<int>* wait) {
    return bellman(components, prior.weights, x, options.discount, options.max_lag,
                   options.weight_floor, wait);
  };

  Vector w = apply(v, &policy.wait);
  double diff = (w - v).lpNorm<1>();
  policy.sup_diffs.push_back((w - v).lpNorm<Eigen::Infinity>());
  const double first = diff;
  const int cap =
      first > tol
          ? static_cast<int>(std::ceil(std::log(tol / first) / std::log(options.discount))) + 100
          : 0;
  int iterations = 1;
  while (diff > tol) {
    if (iterations > cap) {
      throw NumericError(fmt::format(
          "value iteration did not converge within {} iterations (last L1 residual {:.6g}, "
          "tolerance {:.6g})",
          cap, diff, tol));
    }
    v.swap(w);
    w = apply(v, &policy.wait);
    const Vector delta = w - v;
    diff = delta.lpNorm<1>();
    policy.sup_diffs.push_back(delta.lpNorm<Eigen::Infinity>());
    ++iterations;
  }
  policy.value = std::move(v);
  policy.residual = diff;
  policy.iterations = iterations;
  return policy;
}

Prior posterior_update(const Prior& prior, std::size_t from, std::size_t to, int lag,
                       std::span<const DenseMatrix* const> strides) {
  prior.validate();
  if (lag < 1) throw ConfigError("posterior update needs lag >= 1");
  if (strides.size() != prior.size()) {
    throw ConfigError(fmt::format("prior has {} candidates but {} kernels were supplied",
                                  prior.size(), strides.size()));
  }
  std::vector<double> weights(prior.size(), 0.0);
  for (std::size_t c = 0; c < strides.size(); ++c) {
    if (prior.weights[c] == 0.0) continue;
    const DenseMatrix& g = *strides[c];
    const auto n = static_cast<std::size_t>(g.rows());
    if (from >= n || to >= n) throw ConfigError("posterior update: state out of range");
    // Column propagation: u = G^lag e_to, so u[from] = [G^lag]_{from,to}.
    Vector u = Vector::Zero(g.rows());
    u[static_cast<Eigen::Index>(to)] = 1.0;
    Vector next(g.rows());
    for (int k = 0; k < lag; ++k) {
      next.noalias() = g * u;
      u.swap(next);
    }
    weights[c] = prior.weights[c] * u[static_cast<Eigen::Index>(from)];
  }
  return normalized(prior, std::move(weights));
}

Prior posterior_update(const Prior& prior, std::size_t from, std::size_t to, int lag,
                       std::span<const ThetaComponent> components) {
  std::vector<const DenseMatrix*> strides;
  strides.reserve(components.size());
  for (const auto& c : components) strides.push_back(&c.stride);
  return posterior_update(prior, from, to, lag, std::span<const DenseMatrix* const>(strides));
}

Prior posterior_update(const Prior& prior, std::size_t from, std::size_t to, int lag,
                       std::span<const TransitionKernel> kernels, int stride) {
  prior.validate();
  if (lag < 1) throw ConfigError("posterior update needs lag >= 1");
  if (stride < 1) throw ConfigError("posterior update needs stride >= 1");
  if (kernels.size() != prior.size()) {
    throw ConfigError(fmt::format("prior has {} candidates but {} kernels were supplied",
                                  prior.size(), kernels.size()));
  }
  std::vector<double> weights(prior.size(), 0.0);
  for (std::size_t c = 0; c < kernels.size(); ++c) {
    if (prior.weights[c] == 0.0) continue;
    const auto n = kernels[c].size();
    if (from >= n || to >= n) throw ConfigError("posterior update: state out of range");
    Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
    e[static_cast<Eigen::Index>(from)] = 1.0;
    const Vector p = propagate(kernels[c], e, static_cast<std::int64_t>(stride) * lag);
    weights[c] = prior.weights[c] * p[static_cast<Eigen::Index>(to)];
  }
  return normalized(prior, std::move(weights));
}

ViStep vi_session_step(ViSession& session, std::span<const ThetaComponent> components,
                       const TimeMesh& mesh, int mesh_index, std::size_t state) {
  if (mesh_index < 0 || mesh_index > mesh.last()) {
    throw StateError(fmt::format("mesh index {} outside the horizon", mesh_index));
  }
  if (state >= session.policy.wait.size()) {
    throw ConfigError(fmt::format("state {} outside the grid", state));
  }
  if (session.started) {
    if (session.k >= session.n) {
      throw StateError(fmt::format("observation budget of {} is spent", session.n));
    }
    if (mesh_index <= session.mesh_index) {
      throw StateError(fmt::format("observation at t={} does not follow the previous one at t={}",
                                   mesh.time(mesh_index), mesh.time(session.mesh_index)));
    }
    session.prior = posterior_update(session.prior, session.state, state,
                                     mesh_index - session.mesh_index, components);
    ++session.k;
    if (session.recompute) {
      const Vector previous = session.policy.value;
      session.policy = value_iterate(components, session.prior, session.options, &previous);
    }
  }
  session.started = true;
  session.mesh_index = mesh_index;
  session.state = state;

  ViStep step;
  step.exhausted = session.k >= session.n;
  if (!step.exhausted && mesh_index < mesh.last()) {
    const int wait = session.policy.wait.at(state);
    step.next_index = std::min(mesh_index + wait, mesh.last());
  }
  return step;
}

}  // namespace infosched
