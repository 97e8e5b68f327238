#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace infosched {

/// Itô diffusion dx = f(x; θ) dt + diag(σ(x; θ)) dw with a scalar parameter θ.
///
/// Only the diagonal of σ is representable, so σσᵀ is diagonal by
/// construction. Both fields write into a caller-provided buffer of length
/// `dimension()`.
class DiffusionModel {
 public:
  using Field =
      std::function<void(std::span<const double> x, double theta, std::span<double> out)>;
  using ThetaDomain = std::function<bool(double theta)>;

  DiffusionModel(std::string name, std::size_t dimension, Field drift, Field noise_diag,
                 ThetaDomain admits = {});

  const std::string& name() const noexcept { return name_; }
  std::size_t dimension() const noexcept { return dimension_; }

  /// Unchecked evaluation, for hot loops. See evaluate_drift for the checked one.
  void drift(std::span<const double> x, double theta, std::span<double> out) const {
    drift_(x, theta, out);
  }
  void noise_diag(std::span<const double> x, double theta, std::span<double> out) const {
    noise_(x, theta, out);
  }

  /// Whether θ lies in the parameter domain (e.g. ε > 0 for a slow-fast system).
  bool admits(double theta) const { return !admits_ || admits_(theta); }

 private:
  std::string name_;
  std::size_t dimension_;
  Field drift_;
  Field noise_;
  ThetaDomain admits_;
};

/// f(x; θ), throwing NumericError naming the first non-finite component.
std::vector<double> evaluate_drift(const DiffusionModel& model, std::span<const double> x,
                                   double theta);

/// diag σ(x; θ), with the same checks as evaluate_drift plus nonnegativity.
std::vector<double> evaluate_noise(const DiffusionModel& model, std::span<const double> x,
                                   double theta);

struct AxisRange {
  double lo;
  double hi;
};

/// Rectangular lattice with uniform spacing h on every axis.
///
/// States are numbered with the first axis varying fastest.
class StateGrid {
 public:
  StateGrid(std::vector<AxisRange> axes, double spacing);

  std::size_t dimension() const noexcept { return axes_.size(); }
  std::size_t size() const noexcept { return size_; }
  double spacing() const noexcept { return h_; }
  const AxisRange& axis(std::size_t a) const { return axes_.at(a); }
  std::size_t points(std::size_t a) const { return counts_.at(a); }
  std::size_t stride(std::size_t a) const { return strides_.at(a); }

  /// Lattice coordinate k along axis a.
  std::size_t coordinate_index(std::size_t state, std::size_t a) const {
    return (state / strides_[a]) % counts_[a];
  }
  double coordinate(std::size_t state, std::size_t a) const {
    const double k = static_cast<double>(coordinate_index(state, a));
    if (aligned_[a]) return (origin_[a] + k) * h_;
    return axes_[a].lo + k * h_;
  }
  void coordinates(std::size_t state, std::span<double> out) const;
  std::vector<double> coordinates(std::size_t state) const;

  /// Neighbor one lattice step along axis a (dir = +1 or -1); empty off-grid.
  std::optional<std::size_t> neighbor(std::size_t state, std::size_t a, int dir) const;

  /// Nearest lattice state; half-way ties round toward +inf; coordinates
  /// outside the box are clamped and reported through `clamped`.
  std::size_t nearest(std::span<const double> x, bool* clamped = nullptr) const;

  /// True if x lies inside the bounding box (inclusive).
  bool contains(std::span<const double> x) const;

  /// True if the state has both neighbors on every axis.
  bool interior(std::size_t state) const;

  const std::vector<AxisRange>& axes() const noexcept { return axes_; }

 private:
  std::vector<AxisRange> axes_;
  double h_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> strides_;
  // Axes whose lower end is a whole multiple of h are indexed from zero so
  // that lattice points such as 0 and 8 come out exact.
  std::vector<double> origin_;
  std::vector<bool> aligned_;
  std::size_t size_ = 1;
};

/// Decision-time mesh T = {0, γδ, 2γδ, …, τ − γδ}.
class TimeMesh {
 public:
  TimeMesh(double delta, int dilation, double horizon);

  double delta() const noexcept { return delta_; }
  int dilation() const noexcept { return gamma_; }
  double horizon() const noexcept { return tau_; }
  double step() const noexcept { return delta_ * gamma_; }
  /// Number of mesh points, τ/(γδ).
  int size() const noexcept { return size_; }
  int last() const noexcept { return size_ - 1; }
  double time(int index) const noexcept { return index * step(); }
  /// Largest mesh index whose time does not exceed t (clamped into the mesh).
  int floor_index(double t) const;

 private:
  double delta_;
  int gamma_;
  double tau_;
  int size_;
};

/// Strictly increasing, uniformly spaced grid Φ of candidate parameter values.
class CandidateGrid {
 public:
  CandidateGrid(double lo, double hi, double step);
  explicit CandidateGrid(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }
  /// Uniform spacing (0 for a single candidate).
  double spacing() const noexcept { return spacing_; }
  /// Index of the candidate nearest to theta.
  std::size_t nearest(double theta) const;

 private:
  std::vector<double> values_;
  double spacing_ = 0.0;
};

}  // namespace infosched
