#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "riccati_lab/common.hpp"
#include "riccati_lab/numkernel/time_grid.hpp"
#include "riccati_lab/random.hpp"

namespace riccati_lab {

/// Control u(.) on a time grid, one column per node.
///
/// piecewise_constant: column i holds u on [t_i, t_{i+1}); the last column is
/// ignored for integration. sampled: column i is u(t_i), linear in between.
struct ControlPath {
  enum class Kind { piecewise_constant, sampled };

  TimeGrid grid;
  Matrix values;
  Kind kind = Kind::piecewise_constant;

  ControlPath() = default;
  ControlPath(TimeGrid g, Matrix v, Kind k = Kind::piecewise_constant)
      : grid(std::move(g)), values(std::move(v)), kind(k) {
    require(static_cast<std::size_t>(values.cols()) == grid.size(), "control path: one column per grid node");
    require(values.allFinite(), "control path: values must be finite");
  }

  static ControlPath zero(const TimeGrid& g, Eigen::Index m) {
    return ControlPath(g, Matrix::Zero(m, static_cast<Eigen::Index>(g.size())));
  }

  static ControlPath constant(const TimeGrid& g, const Vector& value) {
    Matrix v(value.size(), static_cast<Eigen::Index>(g.size()));
    v.colwise() = value;
    return ControlPath(g, v);
  }

  /// Seeded piecewise-constant control with N(0, scale^2) cell values.
  static ControlPath random(const TimeGrid& g, Eigen::Index m, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix v = scale * rng.gaussian_matrix(m, static_cast<Eigen::Index>(g.size()));
    if (g.size() > 1) v.col(v.cols() - 1) = v.col(v.cols() - 2);
    return ControlPath(g, v);
  }

  Eigen::Index dim() const { return values.rows(); }
  double start() const { return grid.front(); }
  double end() const { return grid.back(); }

  /// Value on cell i (piecewise constant) or at node i (sampled).
  Vector node(std::size_t i) const { return values.col(static_cast<Eigen::Index>(i)); }

  Vector at(double t) const {
    require(grid.contains(t, 1e-12), "control path: t outside the path span");
    if (grid.size() == 1) return node(0);
    const std::size_t c = grid.cell_of(t);
    if (kind == Kind::piecewise_constant) return node(c);
    const double th = (t - grid[c]) / (grid[c + 1] - grid[c]);
    return (1.0 - th) * node(c) + th * node(c + 1);
  }

  /// L^p norm; exact for piecewise-constant paths, trapezoid for sampled ones.
  double lp_norm(double p) const {
    require(p >= 1.0, "lp_norm: p >= 1");
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
      const double h = grid[i + 1] - grid[i];
      if (kind == Kind::piecewise_constant)
        s += h * std::pow(node(i).norm(), p);
      else
        s += 0.5 * h * (std::pow(node(i).norm(), p) + std::pow(node(i + 1).norm(), p));
    }
    return std::pow(s, 1.0 / p);
  }

  ControlPath scaled(double a) const { return ControlPath(grid, a * values, kind); }
};

inline ControlPath operator+(const ControlPath& a, const ControlPath& b) {
  require(a.grid == b.grid && a.kind == b.kind, "control paths must share grid and kind");
  return ControlPath(a.grid, a.values + b.values, a.kind);
}

/// State path y(.) with optional controls and accumulated cost.
struct Trajectory {
  TimeGrid grid;
  Matrix states;  // n x grid.size()
  std::optional<ControlPath> controls;
  std::optional<double> cost;
  std::vector<double> running_cost;  // cumulative cost per node, empty if not tracked

  Vector state(std::size_t i) const { return states.col(static_cast<Eigen::Index>(i)); }
  Vector final_state() const { return states.col(states.cols() - 1); }
};

}  // namespace riccati_lab
