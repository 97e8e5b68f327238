#include "infosched/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <fmt/format.h>

#include "infosched/error.hpp"

namespace infosched {

namespace {

constexpr double kRelTol = 1e-9;

// Number of whole steps of size `step` in `span`, or throws.
std::size_t whole_steps(double span, double step, const char* what) {
  const double ratio = span / step;
  const double rounded = std::round(ratio);
  if (!(rounded >= 0) || std::abs(ratio - rounded) > kRelTol * std::max(1.0, rounded)) {
    throw ConfigError(fmt::format("{}: {} is not an integer multiple of {}", what, span, step));
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

DiffusionModel::DiffusionModel(std::string name, std::size_t dimension, Field drift,
                               Field noise_diag, ThetaDomain admits)
    : name_(std::move(name)),
      dimension_(dimension),
      drift_(std::move(drift)),
      noise_(std::move(noise_diag)),
      admits_(std::move(admits)) {
  if (dimension_ == 0) throw ConfigError("diffusion model needs dimension >= 1");
  if (!drift_ || !noise_) throw ConfigError("diffusion model needs drift and noise fields");
}

std::vector<double> evaluate_drift(const DiffusionModel& model, std::span<const double> x,
                                   double theta) {
  if (x.size() != model.dimension()) {
    throw ConfigError(fmt::format("state has {} components, model {} expects {}", x.size(),
                                  model.name(), model.dimension()));
  }
  std::vector<double> out(model.dimension());
  model.drift(x, theta, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i])) {
      throw NumericError(fmt::format("model {}: drift component {} is not finite at theta={}",
                                     model.name(), i, theta));
    }
  }
  return out;
}

std::vector<double> evaluate_noise(const DiffusionModel& model, std::span<const double> x,
                                   double theta) {
  if (x.size() != model.dimension()) {
    throw ConfigError(fmt::format("state has {} components, model {} expects {}", x.size(),
                                  model.name(), model.dimension()));
  }
  std::vector<double> out(model.dimension());
  model.noise_diag(x, theta, out);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i]) || out[i] < 0) {
      throw NumericError(fmt::format(
          "model {}: noise component {} is not a finite nonnegative value at theta={}",
          model.name(), i, theta));
    }
  }
  return out;
}

StateGrid::StateGrid(std::vector<AxisRange> axes, double spacing)
    : axes_(std::move(axes)), h_(spacing) {
  if (axes_.empty()) throw ConfigError("state grid needs at least one axis");
  if (!(h_ > 0) || !std::isfinite(h_)) throw ConfigError("state grid spacing must be positive");
  counts_.reserve(axes_.size());
  strides_.reserve(axes_.size());
  for (const auto& ax : axes_) {
    if (!(ax.hi >= ax.lo)) {
      throw ConfigError(fmt::format("grid axis [{}, {}] has hi < lo", ax.lo, ax.hi));
    }
    const std::size_t n = whole_steps(ax.hi - ax.lo, h_, "grid axis extent") + 1;
    strides_.push_back(size_);
    counts_.push_back(n);
    const double ratio = ax.lo / h_;
    const double rounded = std::round(ratio);
    aligned_.push_back(std::abs(ratio - rounded) <= kRelTol * std::max(1.0, std::abs(rounded)));
    origin_.push_back(rounded);
    size_ *= n;
  }
}

void StateGrid::coordinates(std::size_t state, std::span<double> out) const {
  for (std::size_t a = 0; a < axes_.size(); ++a) out[a] = coordinate(state, a);
}

std::vector<double> StateGrid::coordinates(std::size_t state) const {
  std::vector<double> out(axes_.size());
  coordinates(state, out);
  return out;
}

std::optional<std::size_t> StateGrid::neighbor(std::size_t state, std::size_t a, int dir) const {
  const std::size_t k = coordinate_index(state, a);
  if (dir > 0) {
    if (k + 1 >= counts_[a]) return std::nullopt;
    return state + strides_[a];
  }
  if (k == 0) return std::nullopt;
  return state - strides_[a];
}

std::size_t StateGrid::nearest(std::span<const double> x, bool* clamped) const {
  if (x.size() != axes_.size()) {
    throw ConfigError(
        fmt::format("state has {} components, grid has {} axes", x.size(), axes_.size()));
  }
  bool was_clamped = false;
  std::size_t state = 0;
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const double pos = std::floor((x[a] - axes_[a].lo) / h_ + 0.5);
    double k = pos;
    if (!(k >= 0)) {  // also catches NaN
      k = 0;
      was_clamped = true;
    } else if (k > static_cast<double>(counts_[a] - 1)) {
      k = static_cast<double>(counts_[a] - 1);
      was_clamped = true;
    }
    if (x[a] < axes_[a].lo || x[a] > axes_[a].hi) was_clamped = true;
    state += static_cast<std::size_t>(k) * strides_[a];
  }
  if (clamped) *clamped = was_clamped;
  return state;
}

bool StateGrid::contains(std::span<const double> x) const {
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    if (x[a] < axes_[a].lo || x[a] > axes_[a].hi) return false;
  }
  return true;
}

bool StateGrid::interior(std::size_t state) const {
  for (std::size_t a = 0; a < axes_.size(); ++a) {
    const std::size_t k = coordinate_index(state, a);
    if (k == 0 || k + 1 >= counts_[a]) return false;
  }
  return true;
}

TimeMesh::TimeMesh(double delta, int dilation, double horizon)
    : delta_(delta), gamma_(dilation), tau_(horizon) {
  if (!(delta_ > 0)) throw ConfigError("chain step delta must be positive");
  if (gamma_ < 1) throw ConfigError("dilation gamma must be a positive integer");
  if (!(tau_ > 0)) throw ConfigError("horizon tau must be positive");
  const std::size_t n = whole_steps(tau_, step(), "horizon tau over gamma*delta");
  if (n < 1) throw ConfigError("time mesh would be empty");
  size_ = static_cast<int>(n);
}

int TimeMesh::floor_index(double t) const {
  const double pos = std::floor(t / step() + kRelTol);
  if (!(pos >= 0)) return 0;
  return static_cast<int>(std::min<double>(pos, last()));
}

CandidateGrid::CandidateGrid(double lo, double hi, double step) {
  if (!(step > 0)) throw ConfigError("candidate grid step must be positive");
  if (!(hi >= lo)) throw ConfigError("candidate grid has hi < lo");
  const std::size_t n = whole_steps(hi - lo, step, "candidate grid extent") + 1;
  values_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) values_.push_back(lo + static_cast<double>(k) * step);
  spacing_ = n > 1 ? step : 0.0;
}

CandidateGrid::CandidateGrid(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ConfigError("candidate grid is empty");
  for (std::size_t k = 1; k < values_.size(); ++k) {
    if (!(values_[k] > values_[k - 1])) {
      throw ConfigError("candidate grid must be strictly increasing");
    }
  }
  if (values_.size() > 1) {
    spacing_ = (values_.back() - values_.front()) / static_cast<double>(values_.size() - 1);
    for (std::size_t k = 1; k < values_.size(); ++k) {
      const double gap = values_[k] - values_[k - 1];
      if (std::abs(gap - spacing_) > kRelTol * spacing_) {
        throw ConfigError("candidate grid must be uniformly spaced");
      }
    }
  }
}

std::size_t CandidateGrid::nearest(double theta) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values_.size(); ++k) {
    if (std::abs(values_[k] - theta) < std::abs(values_[best] - theta)) best = k;
  }
  return best;
}

}  // namespace infosched
