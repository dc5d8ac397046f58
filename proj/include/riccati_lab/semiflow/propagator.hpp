#pragma once

#include <cmath>
#include <map>
#include <mutex>

#include "riccati_lab/models.hpp"
#include "riccati_lab/numkernel/spectral.hpp"
#include "riccati_lab/semiflow/paths.hpp"

namespace riccati_lab {

/// Exact one-cell propagation of y' = Ay + Bu with u constant or linear on
/// the cell. Per-step matrices are cached by step length.
class CellPropagator {
 public:
  struct Step {
    Matrix E;     // e^{A tau}
    Matrix phi1;  // tau phi_1(tau A) B
    Matrix phi2;  // tau phi_2(tau A) B
  };

  CellPropagator(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
    require(a_.rows() == a_.cols() && b_.rows() == a_.rows(), "propagator: dimension mismatch");
  }

  explicit CellPropagator(const LqModel& m) : CellPropagator(m.A, m.B) {}

  const Step& step(double tau) const {
    require(tau > 0.0, "propagator: step must be positive");
    std::lock_guard lock(mutex_);
    auto it = cache_.lower_bound(tau * (1.0 - 1e-13));
    if (it != cache_.end() && it->first <= tau * (1.0 + 1e-13)) return it->second;
    const auto phi = phi_functions(a_, tau, 2);
    Step s{phi[0], tau * phi[1] * b_, tau * phi[2] * b_};
    return cache_.emplace(tau, std::move(s)).first->second;
  }

  /// y(c + tau) from y(c) with u(c + s) = u0 + (u1 - u0) s / tau.
  Vector advance(const Vector& y, double tau, const Vector& u0, const Vector& u1) const {
    if (tau <= 0.0) return y;
    const Step& s = step(tau);
    Vector out = s.E * y;
    if (b_.cols() > 0) out += s.phi1 * u0 + s.phi2 * (u1 - u0);
    return out;
  }

  Vector advance(const Vector& y, double tau, const Vector& u) const { return advance(y, tau, u, u); }

  /// State at t starting from y(s) = x0 under control path u.
  Vector evolve(const Vector& x0, double s, const ControlPath& u, double t) const {
    require(s <= t, "evolve: need s <= t");
    require(u.grid.contains(s, 1e-12) && u.grid.contains(t, 1e-12), "evolve: time outside the control grid span");
    require(u.dim() == b_.cols(), "evolve: control dimension mismatch");
    Vector y = x0;
    if (t == s) return y;
    std::size_t c = u.grid.cell_of(s);
    double left = s;
    while (left < t) {
      const double right = std::min(t, u.grid[c + 1]);
      if (u.kind == ControlPath::Kind::piecewise_constant)
        y = advance(y, right - left, u.node(c));
      else
        y = advance(y, right - left, u.at(left), u.at(right));
      left = right;
      ++c;
      if (c + 1 >= u.grid.size()) break;
    }
    return y;
  }

  /// States at every grid node of u from index `first` on, starting at x0.
  Matrix sweep(const Vector& x0, const ControlPath& u, std::size_t first = 0) const {
    require(u.dim() == b_.cols(), "sweep: control dimension mismatch");
    const std::size_t count = u.grid.size() - first;
    Matrix states(a_.rows(), static_cast<Eigen::Index>(count));
    states.col(0) = x0;
    for (std::size_t k = 1; k < count; ++k) {
      const std::size_t i = first + k - 1;
      const double tau = u.grid[i + 1] - u.grid[i];
      const Vector prev = states.col(static_cast<Eigen::Index>(k - 1));
      if (u.kind == ControlPath::Kind::piecewise_constant)
        states.col(static_cast<Eigen::Index>(k)) = advance(prev, tau, u.node(i));
      else
        states.col(static_cast<Eigen::Index>(k)) = advance(prev, tau, u.node(i), u.node(i + 1));
    }
    return states;
  }

  const Matrix& A() const { return a_; }
  const Matrix& B() const { return b_; }

 private:
  Matrix a_, b_;
  mutable std::map<double, Step> cache_;
  mutable std::mutex mutex_;
};

}  // namespace riccati_lab
