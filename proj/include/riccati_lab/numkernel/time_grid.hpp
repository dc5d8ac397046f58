#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "riccati_lab/common.hpp"

namespace riccati_lab {

/// Strictly increasing time axis.
class TimeGrid {
 public:
  TimeGrid() = default;

  explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
    require(!nodes_.empty(), "time grid needs at least one node");
    for (double t : nodes_) require(std::isfinite(t), "time grid nodes must be finite");
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      require(nodes_[i] > nodes_[i - 1], "time grid must be strictly increasing");
  }

  static TimeGrid uniform(double a, double b, std::size_t steps) {
    require(steps >= 1, "uniform grid needs at least one step");
    require(b > a, "uniform grid needs b > a");
    std::vector<double> nodes(steps + 1);
    const double h = (b - a) / static_cast<double>(steps);
    for (std::size_t i = 0; i <= steps; ++i) nodes[i] = a + h * static_cast<double>(i);
    nodes[steps] = b;
    return TimeGrid(std::move(nodes));
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t steps() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }
  double operator[](std::size_t i) const { return nodes_[i]; }
  double front() const { return nodes_.front(); }
  double back() const { return nodes_.back(); }
  const std::vector<double>& nodes() const { return nodes_; }

  bool is_uniform(double rel_tol = 1e-9) const {
    if (nodes_.size() < 3) return true;
    const double h = (back() - front()) / static_cast<double>(steps());
    for (std::size_t i = 1; i < nodes_.size(); ++i)
      if (std::abs((nodes_[i] - nodes_[i - 1]) - h) > rel_tol * h) return false;
    return true;
  }

  /// Uniform step; throws on non-uniform grids.
  double step() const {
    require(nodes_.size() >= 2, "grid has no step");
    require(is_uniform(), "grid is not uniform");
    return (back() - front()) / static_cast<double>(steps());
  }

  bool contains(double t, double slack = 0.0) const {
    return t >= front() - slack && t <= back() + slack;
  }

  /// Node index within `tol` of t, if any.
  std::optional<std::size_t> index_of(double t, double tol = 1e-9) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - tol);
    if (it != nodes_.end() && std::abs(*it - t) <= tol)
      return static_cast<std::size_t>(it - nodes_.begin());
    return std::nullopt;
  }

  std::size_t nearest_index(double t) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
    if (it == nodes_.end()) return nodes_.size() - 1;
    std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
    if (i > 0 && std::abs(nodes_[i - 1] - t) < std::abs(nodes_[i] - t)) return i - 1;
    return i;
  }

  /// Cell index i with t in [t_i, t_{i+1}); the last node maps to the last cell.
  std::size_t cell_of(double t) const {
    require(size() >= 2, "grid has no cells");
    auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    std::size_t i = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
    return std::min(i, steps() - 1);
  }

  /// Indices of nodes lying in [a, b] (inclusive within tol).
  std::pair<std::size_t, std::size_t> index_range(double a, double b, double tol = 1e-9) const {
    auto lo = std::lower_bound(nodes_.begin(), nodes_.end(), a - tol);
    auto hi = std::upper_bound(nodes_.begin(), nodes_.end(), b + tol);
    return {static_cast<std::size_t>(lo - nodes_.begin()), static_cast<std::size_t>(hi - nodes_.begin())};
  }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::vector<double> nodes_;
};

}  // namespace riccati_lab
