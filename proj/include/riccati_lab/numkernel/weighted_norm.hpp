#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "riccati_lab/common.hpp"
#include "riccati_lab/numkernel/quadrature.hpp"
#include "riccati_lab/numkernel/time_grid.hpp"

namespace riccati_lab {

/// sup_t e^{-rt} ||y(t)||  or  ( int e^{-rt p} ||y(t)||^p dt )^{1/p}.
struct WeightedNorm {
  enum class Mode { sup, lp };

  double rate = 0.0;
  Mode mode = Mode::sup;
  double p = 2.0;

  static WeightedNorm sup(double rate) { return {rate, Mode::sup, 2.0}; }
  static WeightedNorm lp(double rate, double p) { return {rate, Mode::lp, p}; }
};

/// Weighted norm of a path sampled on `grid` (one column per node). When
/// `domain_map` is given, each sample is measured as ||domain_map * y(t)||,
/// e.g. (-A)^eps for the D(A^eps) norm.
inline double weighted_norm(const TimeGrid& grid, const Matrix& path, const WeightedNorm& w,
                            const std::optional<Matrix>& domain_map = std::nullopt) {
  require(path.cols() > 0, "weighted_norm: empty path");
  require(static_cast<std::size_t>(path.cols()) == grid.size(), "weighted_norm: path/grid mismatch");
  require(w.rate >= 0.0, "weighted_norm: rate must be >= 0");
  require(w.mode == WeightedNorm::Mode::sup || w.p >= 1.0, "weighted_norm: p must be >= 1");
  std::vector<double> values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double n = domain_map ? (*domain_map * path.col(static_cast<Eigen::Index>(i))).norm()
                                : path.col(static_cast<Eigen::Index>(i)).norm();
    values[i] = std::exp(-w.rate * grid[i]) * n;
  }
  if (w.mode == WeightedNorm::Mode::sup) {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
  }
  if (grid.size() == 1) return 0.0;
  for (double& v : values) v = std::pow(v, w.p);
  return std::pow(quadrature(grid, values, QuadratureRule::trapezoid), 1.0 / w.p);
}

}  // namespace riccati_lab
