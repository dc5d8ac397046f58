#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "riccati_lab/common.hpp"
#include "riccati_lab/numkernel/time_grid.hpp"
#include "riccati_lab/tolerances.hpp"

namespace riccati_lab {

enum class QuadratureRule { trapezoid, simpson, graded };

namespace detail {

// Weights of the quadratic through (-h0, 0, h1) integrated over [0, h1].
inline std::array<double, 3> last_interval_quadratic(double h0, double h1) {
  std::array<double, 3> w{};
  for (int k = 0; k < 3; ++k) {
    const double f0 = k == 0, f1 = k == 1, f2 = k == 2;
    const double c = (h0 * (f2 - f1) + h1 * (f0 - f1)) / (h0 * h1 * (h0 + h1));
    const double b = (f2 - f1) / h1 - c * h1;
    w[k] = f1 * h1 + b * h1 * h1 / 2.0 + c * h1 * h1 * h1 / 3.0;
  }
  return w;
}

}  // namespace detail

/// Quadrature weights on the nodes of `grid`.
///
/// Simpson pairs intervals (non-uniform pairs allowed); an odd leftover
/// interval is integrated with the quadratic through its last three nodes so
/// the composite rule keeps fourth order.
inline std::vector<double> quadrature_weights(const TimeGrid& grid, QuadratureRule rule) {
  const std::size_t n = grid.size();
  require(n >= 2, "quadrature needs at least 2 nodes");
  std::vector<double> w(n, 0.0);
  if (rule == QuadratureRule::graded)
    throw PreconditionError("graded quadrature chooses its own nodes; use GradedRule");
  if (rule == QuadratureRule::trapezoid || n == 2) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = grid[i + 1] - grid[i];
      w[i] += h / 2.0;
      w[i + 1] += h / 2.0;
    }
    return w;
  }
  const std::size_t intervals = n - 1;
  const std::size_t paired = intervals - intervals % 2;
  for (std::size_t i = 0; i + 2 <= paired; i += 2) {
    const double h0 = grid[i + 1] - grid[i];
    const double h1 = grid[i + 2] - grid[i + 1];
    const double s = h0 + h1;
    w[i] += s / 6.0 * (2.0 - h1 / h0);
    w[i + 1] += s / 6.0 * s * s / (h0 * h1);
    w[i + 2] += s / 6.0 * (2.0 - h0 / h1);
  }
  if (paired < intervals) {
    const std::size_t i = n - 3;
    const auto lw = detail::last_interval_quadratic(grid[i + 1] - grid[i], grid[i + 2] - grid[i + 1]);
    for (int k = 0; k < 3; ++k) w[i + k] += lw[k];
  }
  return w;
}

/// Weighted sum of samples (double, Vector or Matrix).
template <class T>
T integrate_weighted(const std::vector<double>& weights, const std::vector<T>& samples) {
  require(weights.size() == samples.size(), "quadrature: sample count does not match nodes");
  require(!samples.empty(), "quadrature: no samples");
  T acc = weights[0] * samples[0];
  for (std::size_t i = 1; i < samples.size(); ++i) acc += weights[i] * samples[i];
  return acc;
}

inline void check_finite_sample(double v) { require(!std::isnan(v), "quadrature: NaN sample"); }
inline void check_finite_sample(const Matrix& v) { require(!v.hasNaN(), "quadrature: NaN sample"); }
inline void check_finite_sample(const Vector& v) { require(!v.hasNaN(), "quadrature: NaN sample"); }

/// Integral of node samples over the grid span.
template <class T>
T quadrature(const TimeGrid& grid, const std::vector<T>& samples, QuadratureRule rule) {
  for (const auto& s : samples) check_finite_sample(s);
  return integrate_weighted(quadrature_weights(grid, rule), samples);
}

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int points) {
  require(points >= 1, "gauss_legendre: points >= 1");
  Matrix j = Matrix::Zero(points, points);
  for (int k = 1; k < points; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    j(k, k - 1) = b;
    j(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  std::vector<double> x(points), w(points);
  for (int k = 0; k < points; ++k) {
    x[k] = es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    w[k] = 2.0 * v * v;
  }
  return {x, w};
}

struct GradedOptions {
  int levels = tol::kGradedLevels;
  double ratio = tol::kGradedRatio;
  int points_per_level = tol::kGradedPointsPerLevel;
  /// Extra levels are added until the innermost cell is at most this wide.
  double max_inner_width = std::numeric_limits<double>::infinity();
};

/// Geometrically graded Gauss-Legendre rule on [a, b], refined toward a.
///
/// Level k covers [a + (b-a) r^{k+1}, a + (b-a) r^k]. The remaining cell
/// [a, a + (b-a) r^L] is filled by a geometric extrapolation from the two
/// innermost level integrals, which is exact for integrands ~ c (t-a)^{-g}.
class GradedRule {
 public:
  GradedRule(double a, double b, GradedOptions opts = {}) : a_(a), b_(b), opts_(opts) {
    require(b > a, "graded rule needs b > a");
    require(opts.ratio > 0.0 && opts.ratio < 1.0, "graded ratio must lie in (0, 1)");
    require(opts.levels >= 2, "graded rule needs at least 2 levels");
    require(opts.points_per_level >= 1, "graded rule needs points per level");
    int levels = opts.levels;
    if (std::isfinite(opts.max_inner_width) && opts.max_inner_width > 0.0) {
      const double need = std::log(opts.max_inner_width / (b - a)) / std::log(opts.ratio);
      levels = std::max(levels, static_cast<int>(std::ceil(need)));
    }
    levels_ = levels;
    const auto [gx, gw] = gauss_legendre(opts.points_per_level);
    const int p = opts.points_per_level;
    nodes_.resize(static_cast<std::size_t>(levels) * p);
    weights_.resize(nodes_.size());
    // innermost level first so nodes are increasing
    std::size_t idx = 0;
    for (int k = levels - 1; k >= 0; --k) {
      const double hi = a + (b - a) * std::pow(opts.ratio, k);
      const double lo = a + (b - a) * std::pow(opts.ratio, k + 1);
      for (int i = 0; i < p; ++i, ++idx) {
        nodes_[idx] = lo + (hi - lo) * (gx[i] + 1.0) / 2.0;
        weights_[idx] = (hi - lo) / 2.0 * gw[i];
      }
    }
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return nodes_.size(); }
  int levels() const { return levels_; }
  TimeGrid grid() const { return TimeGrid(nodes_); }

  double integrate(const std::vector<double>& samples) const {
    require(samples.size() == nodes_.size(), "graded rule: sample count mismatch");
    for (double v : samples) check_finite_sample(v);
    const int p = opts_.points_per_level;
    double total = 0.0, inner = 0.0, next = 0.0;
    for (int level = 0; level < levels_; ++level) {
      double s = 0.0;
      for (int i = 0; i < p; ++i) {
        const std::size_t idx = static_cast<std::size_t>(level) * p + i;
        s += weights_[idx] * samples[idx];
      }
      if (level == 0) inner = s;
      if (level == 1) next = s;
      total += s;
    }
    return total + tail(inner, next);
  }

  template <class F>
  double integrate_function(F&& f) const {
    std::vector<double> s(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) s[i] = f(nodes_[i]);
    return integrate(s);
  }

 private:
  double tail(double inner, double next) const {
    if (inner == 0.0) return 0.0;
    const double rho = next != 0.0 ? inner / next : 0.0;
    if (rho > 0.0 && rho < 1.0) return inner * rho / (1.0 - rho);
    return inner * opts_.ratio / (1.0 - opts_.ratio);
  }

  double a_, b_;
  GradedOptions opts_;
  int levels_ = 0;
  std::vector<double> nodes_, weights_;
};

template <class F>
double integrate_graded(F&& f, double a, double b, GradedOptions opts = {}) {
  return GradedRule(a, b, opts).integrate_function(std::forward<F>(f));
}

}  // namespace riccati_lab
