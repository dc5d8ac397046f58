#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "riccati_lab/models.hpp"
#include "riccati_lab/numkernel.hpp"
#include "riccati_lab/parallel.hpp"
#include "riccati_lab/random.hpp"

namespace riccati_lab {

enum class DreIntegrator { rk4, implicit_midpoint };

inline std::string to_string(DreIntegrator i) { return i == DreIntegrator::rk4 ? "rk4" : "implicit-midpoint"; }

inline DreIntegrator parse_integrator(const std::string& s) {
  if (s == "rk4") return DreIntegrator::rk4;
  if (s == "implicit-midpoint" || s == "implicit_midpoint" || s == "midpoint") return DreIntegrator::implicit_midpoint;
  throw PreconditionError("unknown integrator: " + s);
}

/// A'P + PA - PSP + Q: the derivative of P in reversed time T - t.
inline Matrix riccati_map(const Matrix& a, const Matrix& s, const Matrix& q, const Matrix& p) {
  const Matrix ap = a.transpose() * p;
  return ap + ap.transpose() - p * s * p + q;
}

struct DreSolution {
  std::string model_id;
  DreIntegrator integrator = DreIntegrator::rk4;
  TimeGrid grid;
  std::vector<Matrix> P;   // per node
  std::vector<Matrix> K;   // B'P per node
  std::vector<Matrix> dP;  // dP/dt per node (may be empty after CSV load)

  double T() const { return grid.back(); }
  std::size_t size() const { return grid.size(); }
  Eigen::Index n() const { return P.front().rows(); }

  /// P at any t in [0,T]: cubic Hermite on the node values and derivatives,
  /// linear when derivatives are not available.
  Matrix P_at(double t) const {
    require(grid.contains(t, 1e-12), "DreSolution: t outside [0,T]");
    if (auto i = grid.index_of(t, 1e-12 * std::max(1.0, T()))) return P[*i];
    const std::size_t c = grid.cell_of(t);
    const double h = grid[c + 1] - grid[c];
    const double s = (t - grid[c]) / h;
    if (dP.size() != P.size()) return (1 - s) * P[c] + s * P[c + 1];
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * P[c] + h10 * h * dP[c] + h01 * P[c + 1] + h11 * h * dP[c + 1];
  }
};

/// Recomputes K = B'P and dP/dt from the stored P path.
inline void attach_derivatives(DreSolution& sol, const LqModel& model) {
  const Matrix s = model.BBt(), q = model.RtR();
  sol.K.resize(sol.P.size());
  sol.dP.resize(sol.P.size());
  for (std::size_t i = 0; i < sol.P.size(); ++i) {
    sol.K[i] = model.B.transpose() * sol.P[i];
    sol.dP[i] = -riccati_map(model.A, s, q, sol.P[i]);
  }
}

namespace detail {

inline Matrix rk4_step(const Matrix& a, const Matrix& s, const Matrix& q, const Matrix& p, double h) {
  const Matrix k1 = riccati_map(a, s, q, p);
  const Matrix k2 = riccati_map(a, s, q, p + 0.5 * h * k1);
  const Matrix k3 = riccati_map(a, s, q, p + 0.5 * h * k2);
  const Matrix k4 = riccati_map(a, s, q, p + h * k3);
  return p + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
}

/// Midpoint rule P+ = P + h g((P + P+)/2) solved for M = (P + P+)/2 by Newton;
/// each Newton step is a Lyapunov solve with the shifted closed-loop matrix.
inline Matrix midpoint_step(const Matrix& a, const Matrix& s, const Matrix& q, const Matrix& p, double h) {
  const Eigen::Index n = a.rows();
  Matrix m = p + 0.5 * h * riccati_map(a, s, q, p);
  for (int it = 0; it < 30; ++it) {
    const Matrix g = m - p - 0.5 * h * riccati_map(a, s, q, m);
    if (g.norm() <= 1e-15 * std::max(1.0, m.norm())) break;
    const Matrix shifted = a - s * m - Matrix::Identity(n, n) / h;
    const Matrix delta = solve_lyapunov(shifted, -(2.0 / h) * symmetrize(g));
    m += delta;
    if (delta.norm() <= 1e-15 * std::max(1.0, m.norm())) break;
  }
  return 2.0 * m - p;
}

inline double spectral_radius_bound(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace detail

/// Integrates the Riccati equation backward from P(T) = 0 on a uniform grid.
inline DreSolution solve_dre(const LqModel& model, std::size_t steps, DreIntegrator integrator = DreIntegrator::rk4) {
  require(model.finite_horizon(), "solve_dre: model must have a finite horizon");
  require(steps >= 2, "solve_dre: need at least 2 steps");
  const double T = model.T();
  const Eigen::Index n = model.n();
  const Matrix s = model.BBt(), q = model.RtR();
  DreSolution sol;
  sol.model_id = model.model_id;
  sol.integrator = integrator;
  sol.grid = TimeGrid::uniform(0.0, T, steps);
  sol.P.assign(sol.grid.size(), Matrix::Zero(n, n));
  const double rho_a = detail::spectral_radius_bound(model.A);
  const double s_norm = s.norm();
  Matrix p = Matrix::Zero(n, n);
  for (std::size_t k = steps; k-- > 0;) {
    const double h = sol.grid[k + 1] - sol.grid[k];
    if (integrator == DreIntegrator::rk4) {
      // keep h times the Lyapunov-operator radius inside RK4's stability region
      const double rho = 2.0 * (rho_a + s_norm * p.norm());
      const int sub = std::max(1, static_cast<int>(std::ceil(h * rho / 2.5)));
      for (int j = 0; j < sub; ++j) p = symmetrize(detail::rk4_step(model.A, s, q, p, h / sub));
    } else {
      p = symmetrize(detail::midpoint_step(model.A, s, q, p, h));
    }
    if (!p.allFinite() || p.norm() > tol::kBlowUp)
      throw NumericalError("solve_dre: blow-up detected at t = " + std::to_string(sol.grid[k]));
    sol.P[k] = p;
  }
  attach_derivatives(sol, model);
  return sol;
}

// ---------------------------------------------------------------------------
// Integral forms

namespace detail {

/// Break points of [s,t]: s, the grid's interior nodes, t.
inline std::vector<double> subgrid_nodes(const TimeGrid& grid, double s, double t) {
  std::vector<double> nodes{s};
  const double gap = 1e-9 * std::max(1.0, std::abs(grid.back()));
  for (double v : grid.nodes())
    if (v > s + gap && v < t - gap) nodes.push_back(v);
  nodes.push_back(t);
  return nodes;
}

/// Composite Simpson on the break points of [s,t].
inline std::pair<std::vector<double>, std::vector<double>> subgrid_rule(const TimeGrid& grid, double s, double t) {
  auto nodes = subgrid_nodes(grid, s, t);
  auto w = quadrature_weights(TimeGrid(nodes), QuadratureRule::simpson);
  return {std::move(nodes), std::move(w)};
}

/// Four-point Gauss-Legendre in every cell between break points of [s,t].
inline std::pair<std::vector<double>, std::vector<double>> subgrid_gauss_rule(const TimeGrid& grid, double s,
                                                                              double t) {
  const auto breaks = subgrid_nodes(grid, s, t);
  const auto [gx, gw] = gauss_legendre(4);
  std::vector<double> nodes, weights;
  for (std::size_t c = 0; c + 1 < breaks.size(); ++c) {
    const double a = breaks[c], h = breaks[c + 1] - breaks[c];
    for (std::size_t k = 0; k < gx.size(); ++k) {
      nodes.push_back(a + h * (gx[k] + 1.0) / 2.0);
      weights.push_back(h / 2.0 * gw[k]);
    }
  }
  return {nodes, weights};
}

}  // namespace detail

/// e^{A'(t-s)} Q(t) e^{A(t-s)} - Q(s) + int_s^t e^{A'(r-s)} (R'R - Q B B' Q) e^{A(r-s)} dr.
inline Matrix ire_defect_matrix(const DreSolution& sol, const LqModel& model, double s, double t) {
  require(s <= t, "ire: need s <= t");
  require(s >= sol.grid.front() - 1e-12 && t <= sol.T() + 1e-12, "ire: times outside [0,T]");
  const Eigen::Index n = model.n();
  if (t == s) return Matrix::Zero(n, n);
  const Semigroup sg(model.A);
  const Matrix bbt = model.BBt(), rtr = model.RtR();
  const auto [nodes, w] = detail::subgrid_gauss_rule(sol.grid, s, t);
  std::vector<Matrix> terms(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t i) {
    const Matrix e = sg.at(nodes[i] - s);
    const Matrix qr = sol.P_at(nodes[i]);
    terms[i] = w[i] * (e.transpose() * (rtr - qr * bbt * qr) * e);
  });
  const Matrix phi = sg.at(t - s);
  Matrix d = phi.transpose() * sol.P_at(t) * phi - sol.P_at(s);
  for (const Matrix& m : terms) d += m;
  return d;
}

/// Scalar integral Riccati residual for the pair (x, y).
inline double ire_residual(const DreSolution& sol, const LqModel& model, double s, double t, const Vector& x,
                           const Vector& y) {
  require(x.allFinite() && y.allFinite(), "ire_residual: x and y must be finite");
  require(x.size() == model.n() && y.size() == model.n(), "ire_residual: dimension mismatch");
  if (s == t) return 0.0;
  return std::abs(x.dot(ire_defect_matrix(sol, model, s, t) * y));
}

/// Operator-form residual (spectral norm of the defect matrix).
inline double ire_strong_residual(const DreSolution& sol, const LqModel& model, double s, double t) {
  if (s == t) return 0.0;
  return spectral_norm(ire_defect_matrix(sol, model, s, t));
}

// ---------------------------------------------------------------------------
// Optimal-cost representation

struct OpricCheck {
  double residual = 0.0;           // max_x ||P(t)x - int_t^T e^{A'(r-t)} R'R Phi(r,t)x dr||
  double evolution_defect = 0.0;   // ||Phi(T,sigma)Phi(sigma,t)x - Phi(T,t)x|| with sigma off-grid
};

namespace detail {

/// Closed-loop propagation y' = (A - BB'P(r)) y with RK4 on the nodes of
/// [from, to] plus the endpoints, substepped so that h * rho <= 0.1. Returns
/// every substep node and state.
inline std::pair<std::vector<double>, std::vector<Vector>> closed_loop_path(const DreSolution& sol,
                                                                           const LqModel& model, double from,
                                                                           double to, const Vector& x) {
  const auto nodes = subgrid_nodes(sol.grid, from, to);
  const Matrix s = model.BBt();
  auto f = [&](double r, const Vector& y) -> Vector { return model.A * y - s * (sol.P_at(r) * y); };
  const double rho = spectral_radius_bound(model.A) + s.norm() * sol.P_at(from).norm();
  std::vector<double> ts{nodes.front()};
  std::vector<Vector> ys{x};
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const double H = nodes[i + 1] - nodes[i];
    const int sub = std::max(1, static_cast<int>(std::ceil(H * rho / 0.1)));
    const double h = H / sub;
    Vector y = ys.back();
    for (int j = 0; j < sub; ++j) {
      const double r = nodes[i] + j * h;
      const Vector k1 = f(r, y), k2 = f(r + h / 2, y + h / 2 * k1), k3 = f(r + h / 2, y + h / 2 * k2),
                   k4 = f(r + h, y + h * k3);
      y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      ts.push_back(j + 1 == sub ? nodes[i + 1] : r + h);
      ys.push_back(y);
    }
  }
  return {ts, ys};
}

}  // namespace detail

inline OpricCheck opric_selfconsistency(const DreSolution& sol, const LqModel& model, double t, std::size_t probes,
                                        std::uint64_t seed) {
  require(t >= sol.grid.front() - 1e-12 && t <= sol.T() + 1e-12, "opric: t outside [0,T]");
  OpricCheck out;
  if (t >= sol.T() - 1e-12) return out;
  const Semigroup adj(model.A.transpose());
  const Matrix rtr = model.RtR();
  const Matrix pt = sol.P_at(t);
  // an off-grid split point inside the first half of [t, T]
  double sigma = t + 0.37 * (sol.T() - t);
  if (sol.grid.index_of(sigma, 1e-9)) sigma += 0.25 * (sol.grid[1] - sol.grid[0]);
  const std::vector<Vector> xs = [&] {
    std::vector<Vector> v;
    for (std::size_t i = 0; i < std::max<std::size_t>(probes, 1); ++i) v.push_back(Rng(sub_seed(seed, i)).unit_vector(model.n()));
    return v;
  }();
  std::vector<OpricCheck> per(xs.size());
  parallel_for(xs.size(), [&](std::size_t k) {
    const auto [nodes, ys] = detail::closed_loop_path(sol, model, t, sol.T(), xs[k]);
    const auto w = quadrature_weights(TimeGrid(nodes), QuadratureRule::simpson);
    Vector integral = Vector::Zero(model.n());
    for (std::size_t i = 0; i < nodes.size(); ++i) integral += w[i] * adj.apply(nodes[i] - t, rtr * ys[i]);
    per[k].residual = (pt * xs[k] - integral).norm();
    const Vector mid = detail::closed_loop_path(sol, model, t, sigma, xs[k]).second.back();
    const Vector two = detail::closed_loop_path(sol, model, sigma, sol.T(), mid).second.back();
    per[k].evolution_defect = (two - ys.back()).norm();
  });
  for (const auto& c : per) {
    out.residual = std::max(out.residual, c.residual);
    out.evolution_defect = std::max(out.evolution_defect, c.evolution_defect);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Uniqueness machinery

/// Difference path Q = P1 - P on the shared grid.
inline std::vector<Matrix> difference_path(const DreSolution& p1, const DreSolution& p) {
  require(p1.grid == p.grid, "uniqueness: grid mismatch");
  std::vector<Matrix> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) q[i] = p1.P[i] - p.P[i];
  return q;
}

/// -int_s^T e^{A'(r-s)} [P1 BB' Q + Q BB' P](r) e^{A(r-s)} dr on the nodes from s.
inline Matrix uniqueness_map_apply(const std::vector<Matrix>& qpath, const DreSolution& p, const DreSolution& p1,
                                   const LqModel& model, double s) {
  require(p.grid == p1.grid && qpath.size() == p.size(), "uniqueness: grid mismatch");
  const auto idx = p.grid.index_of(s, 1e-9 * std::max(1.0, p.T()));
  require(idx.has_value(), "uniqueness_map_apply: s must be a grid node");
  const Eigen::Index n = model.n();
  if (*idx + 1 >= p.size()) return Matrix::Zero(n, n);
  std::vector<double> nodes(p.grid.nodes().begin() + static_cast<std::ptrdiff_t>(*idx), p.grid.nodes().end());
  const auto w = quadrature_weights(TimeGrid(nodes), QuadratureRule::simpson);
  const Semigroup sg(model.A);
  const Matrix bbt = model.BBt();
  std::vector<Matrix> terms(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t k) {
    const std::size_t i = *idx + k;
    const Matrix e = sg.at(nodes[k] - nodes[0]);
    const Matrix g = p1.P[i] * bbt * qpath[i] + qpath[i] * bbt * p.P[i];
    terms[k] = w[k] * (e.transpose() * g * e);
  });
  Matrix v = Matrix::Zero(n, n);
  for (const Matrix& m : terms) v -= m;
  return v;
}

struct ContractionOptions {
  std::size_t power_iterations = 8;
  std::optional<double> epsilon;  // defaults to the model's epsilon
};

/// Lower estimate of the norm of Q -> uniqueness map on paths supported in
/// [T - delta, T], measured by sup_s ||B'Q(s)(-A)^{-eps}||.
inline double uniqueness_contraction_estimate(const DreSolution& p, const DreSolution& p1, const LqModel& model,
                                              double delta, std::size_t probes, std::uint64_t seed,
                                              const ContractionOptions& opts = {}) {
  require(p.grid == p1.grid, "uniqueness: grid mismatch");
  require(delta > 0.0 && delta <= p.T() * (1 + 1e-12), "contraction: need 0 < delta <= T");
  if (model.m() == 0 || model.B.norm() == 0.0) return 0.0;
  const Eigen::Index n = model.n();
  const double eps = opts.epsilon.value_or(model.assumption.epsilon);
  const Matrix gain_right = model.B.transpose();
  const Matrix frac = eps == 0.0 ? Matrix::Identity(n, n) : FractionalPowers(model.A).power(-eps);
  const Matrix bbt = model.BBt();
  // window nodes: first index with t >= T - delta
  std::size_t first = 0;
  while (first + 1 < p.size() && p.grid[first] < p.T() - delta - 1e-12 * std::max(1.0, p.T())) ++first;
  const std::size_t count = p.size() - first;
  if (count < 2) return 0.0;
  const Semigroup sg(model.A);

  auto norm_of = [&](const std::vector<Matrix>& q) {
    double v = 0.0;
    for (const Matrix& m : q) v = std::max(v, spectral_norm(gain_right * m * frac));
    return v;
  };
  // backward trapezoid recursion for V(s_k) = -int_{s_k}^T e^{A'(r-s_k)} G(r) e^{A(r-s_k)} dr
  auto apply = [&](const std::vector<Matrix>& q) {
    std::vector<Matrix> v(count, Matrix::Zero(n, n));
    auto g = [&](std::size_t k) {
      const std::size_t i = first + k;
      return Matrix(p1.P[i] * bbt * q[k] + q[k] * bbt * p.P[i]);
    };
    Matrix g_next = g(count - 1);
    for (std::size_t k = count - 1; k-- > 0;) {
      const double h = p.grid[first + k + 1] - p.grid[first + k];
      const Matrix e = sg.at(h);
      const Matrix g_here = g(k);
      v[k] = e.transpose() * (v[k + 1] - 0.5 * h * g_next) * e - 0.5 * h * g_here;
      g_next = g_here;
    }
    return v;
  };

  std::vector<double> best(probes + 1, 0.0);
  parallel_for(probes + 1, [&](std::size_t j) {
    Rng rng(sub_seed(seed, j));
    std::vector<Matrix> q(count);
    if (j == probes) {
      const Matrix c = rng.symmetric_matrix(n);  // constant-in-time probe
      for (auto& m : q) m = c;
    } else {
      for (auto& m : q) m = rng.symmetric_matrix(n);
    }
    double qn = norm_of(q);
    for (std::size_t it = 0; it <= opts.power_iterations && qn > 0.0; ++it) {
      std::vector<Matrix> lq = apply(q);
      const double ln = norm_of(lq);
      best[j] = std::max(best[j], ln / qn);
      if (ln == 0.0) break;
      for (auto& m : lq) m /= ln;
      q = std::move(lq);
      qn = 1.0;
    }
  });
  return *std::max_element(best.begin(), best.end());
}

// ---------------------------------------------------------------------------
// Class Q_T membership

struct ClassQtReport {
  bool continuous = false;
  bool symmetric = false;
  bool psd = false;
  bool terminal_zero = false;
  bool gain_bounded = false;
  double max_jump = 0.0;
  double max_asymmetry = 0.0;
  double min_eigenvalue = 0.0;
  double terminal_norm = 0.0;
  double gain_sup = 0.0;

  bool ok() const { return continuous && symmetric && psd && terminal_zero && gain_bounded; }
};

inline ClassQtReport check_class_QT(const DreSolution& sol, const LqModel& model) {
  ClassQtReport r;
  const Eigen::Index n = model.n();
  const Matrix frac = FractionalPowers(model.A).power(-model.assumption.epsilon);
  double max_rate = 0.0;
  r.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sol.size(); ++i) {
    const Matrix& p = sol.P[i];
    r.max_asymmetry = std::max(r.max_asymmetry, (p - p.transpose()).cwiseAbs().maxCoeff());
    r.min_eigenvalue = std::min(r.min_eigenvalue, n > 0 ? min_eigenvalue_symmetric(symmetrize(p)) : 0.0);
    r.gain_sup = std::max(r.gain_sup, spectral_norm(model.B.transpose() * p * frac));
    if (i + 1 < sol.size()) {
      const double jump = (sol.P[i + 1] - p).norm();
      r.max_jump = std::max(r.max_jump, jump);
      max_rate = std::max(max_rate, jump / (sol.grid[i + 1] - sol.grid[i]));
    }
  }
  double deriv_bound = 0.0;
  for (const Matrix& d : sol.dP) deriv_bound = std::max(deriv_bound, d.norm());
  r.terminal_norm = sol.P.back().norm();
  r.continuous = sol.dP.empty() ? std::isfinite(max_rate) : max_rate <= 2.0 * deriv_bound + 1e-12;
  r.symmetric = r.max_asymmetry <= tol::kSymmetry * std::max(1.0, sol.P.front().norm());
  r.psd = r.min_eigenvalue >= tol::kPsdFloor;
  r.terminal_zero = r.terminal_norm == 0.0;
  r.gain_bounded = std::isfinite(r.gain_sup);
  return r;
}

}  // namespace riccati_lab
