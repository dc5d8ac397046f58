#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "riccati_lab/dre.hpp"
#include "riccati_lab/models.hpp"
#include "riccati_lab/numkernel.hpp"

namespace riccati_lab {

struct AreSolution {
  Matrix P;
  Matrix K;    // B'P
  Matrix A_P;  // A - BB'P
  std::string method;
  int iterations = 0;
  double residual = 0.0;  // ||A'P + PA - PBB'P + R'R||_2

  double closed_loop_abscissa() const { return spectral_abscissa(A_P); }
};

inline double are_residual_norm(const LqModel& model, const Matrix& p) {
  return spectral_norm(riccati_map(model.A, model.BBt(), model.RtR(), p));
}

/// Residual scale: ||A'P|| + ||PA|| + ||PBB'P|| + ||R'R||, floored at 1.
inline double are_residual_scale(const LqModel& model, const Matrix& p) {
  const double ap = spectral_norm(model.A.transpose() * p);
  return std::max(1.0, 2.0 * ap + spectral_norm(p * model.BBt() * p) + spectral_norm(model.RtR()));
}

inline AreSolution make_are_solution(const LqModel& model, Matrix p, std::string method, int iterations) {
  AreSolution s;
  s.P = std::move(p);
  s.K = model.B.transpose() * s.P;
  s.A_P = model.A - model.B * s.K;
  s.method = std::move(method);
  s.iterations = iterations;
  s.residual = are_residual_norm(model, s.P);
  return s;
}

namespace detail {

inline void require_infinite_horizon_stable(const LqModel& model, const char* who) {
  require(!model.finite_horizon(), std::string(who) + ": horizon mismatch (model is finite-horizon)");
  require(model.n() > 0 && model.A.rows() == model.A.cols(), std::string(who) + ": bad A");
  require(spectral_abscissa(model.A) < 0.0, std::string(who) + ": A must be exponentially stable");
}

}  // namespace detail

/// Newton-Kleinman from P0 = 0.
inline AreSolution solve_are_newton(const LqModel& model, double tolerance = 1e-14) {
  detail::require_infinite_horizon_stable(model, "solve_are_newton");
  const Eigen::Index n = model.n();
  const Matrix s = model.BBt(), q = model.RtR();
  Matrix p = Matrix::Zero(n, n);
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= tol::kNewtonMaxIterations; ++k) {
    Matrix next;
    try {
      next = symmetrize(solve_lyapunov(model.A - s * p, q + p * s * p));
    } catch (const NumericalError&) {
      throw NumericalError("solve_are_newton: closed loop lost stability at iteration " + std::to_string(k));
    }
    const double step = (next - p).norm();
    p = std::move(next);
    const double scale = std::max(1.0, p.norm());
    if (step <= tolerance * scale) return make_are_solution(model, p, "newton-kleinman", k);
    // round-off floor: the step stopped shrinking once already tiny
    if (step <= 1e-10 * scale && step >= 0.5 * previous) return make_are_solution(model, p, "newton-kleinman", k);
    previous = step;
  }
  throw NumericalError("solve_are_newton: no convergence within 100 iterations");
}

namespace detail {

/// Moves every diagonal entry of the upper-triangular T with Re < 0 to the
/// leading block by adjacent Givens swaps, updating U so that H = U T U*.
inline void reorder_stable_first(ComplexMatrix& t, ComplexMatrix& u) {
  const Eigen::Index n = t.rows();
  Eigen::Index filled = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (t(j, j).real() >= 0.0) continue;
    for (Eigen::Index k = j; k > filled; --k) {
      // swap positions k-1 and k
      const std::complex<double> a = t(k - 1, k - 1), b = t(k, k), c = t(k - 1, k);
      std::complex<double> v1 = c, v2 = b - a;
      const double nv = std::hypot(std::abs(v1), std::abs(v2));
      if (nv == 0.0) continue;
      v1 /= nv;
      v2 /= nv;
      Eigen::Matrix2cd g;
      g << v1, -std::conj(v2), v2, std::conj(v1);
      t.middleCols(k - 1, 2) = t.middleCols(k - 1, 2) * g;
      t.middleRows(k - 1, 2) = g.adjoint() * t.middleRows(k - 1, 2);
      u.middleCols(k - 1, 2) = u.middleCols(k - 1, 2) * g;
      t(k, k - 1) = 0.0;
    }
    ++filled;
  }
}

}  // namespace detail

/// Stable invariant subspace [X; Y] of the Hamiltonian, P = Re(Y X^{-1}).
inline AreSolution solve_are_spectral(const LqModel& model) {
  detail::require_infinite_horizon_stable(model, "solve_are_spectral");
  const Eigen::Index n = model.n();
  Matrix h(2 * n, 2 * n);
  h << model.A, -model.BBt(), -model.RtR(), -model.A.transpose();
  Eigen::ComplexSchur<ComplexMatrix> schur(h.cast<std::complex<double>>());
  if (schur.info() != Eigen::Success) throw NumericalError("solve_are_spectral: Schur decomposition failed");
  ComplexMatrix t = schur.matrixT(), u = schur.matrixU();
  const double axis_tol = tol::kImaginaryAxis * std::max(1.0, h.norm());
  int stable = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (std::abs(t(i, i).real()) <= axis_tol)
      throw NumericalError("solve_are_spectral: Hamiltonian eigenvalue on the imaginary axis");
    if (t(i, i).real() < 0.0) ++stable;
  }
  if (stable != n) throw NumericalError("solve_are_spectral: stable subspace has wrong dimension");
  detail::reorder_stable_first(t, u);
  const ComplexMatrix x = u.topLeftCorner(n, n), y = u.bottomLeftCorner(n, n);
  Eigen::JacobiSVD<ComplexMatrix> svd(x);
  const auto& sv = svd.singularValues();
  if (!(sv(n - 1) > 1e-12 * sv(0))) throw NumericalError("solve_are_spectral: X is singular");
  const ComplexMatrix pc = x.transpose().partialPivLu().solve(y.transpose()).transpose();  // Y X^{-1}
  return make_are_solution(model, symmetrize(pc.real()), "hamiltonian-schur", 0);
}

// ---------------------------------------------------------------------------
// Verification

/// Integral form of the ARE over [s,t] for the pair (x,y), Gauss-Legendre on
/// cells of width <= step.
inline double are_integral_residual(const AreSolution& sol, const LqModel& model, double s, double t, const Vector& x,
                                    const Vector& y, double step = 1e-3) {
  require(s <= t, "are_integral_residual: need s <= t");
  require(s >= 0.0, "are_integral_residual: need s >= 0");
  require(x.size() == model.n() && y.size() == model.n(), "are_integral_residual: dimension mismatch");
  if (s == t) return 0.0;
  const double len = t - s;
  const auto cells = static_cast<std::size_t>(std::ceil(len / step - 1e-9));
  const double h = len / static_cast<double>(cells);
  const auto [gx, gw] = gauss_legendre(4);
  const Semigroup sg(model.A);
  const Matrix e_h = sg.at(h);
  std::vector<Matrix> e_nodes;
  for (double g : gx) e_nodes.push_back(sg.at(h * (g + 1.0) / 2.0));
  Vector vx = x, vy = y;
  double integral = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t k = 0; k < gx.size(); ++k) {
      const Vector ex = e_nodes[k] * vx, ey = e_nodes[k] * vy;
      integral += h / 2.0 * gw[k] * ((model.R * ex).dot(model.R * ey) - (sol.K * ex).dot(sol.K * ey));
    }
    vx = e_h * vx;
    vy = e_h * vy;
  }
  return std::abs(vx.dot(sol.P * vy) - x.dot(sol.P * y) + integral);
}

/// ||A(I - A^{-1}BB'P) - (A - BB'P)||_2.
inline double generator_identity_check(const AreSolution& sol, const LqModel& model) {
  const Eigen::Index n = model.n();
  const Matrix sp = model.BBt() * sol.P;
  const Matrix lhs = model.A * (Matrix::Identity(n, n) - model.A.partialPivLu().solve(sp));
  return spectral_norm(lhs - (model.A - sp));
}

/// Smallest T with ||e^{A T}|| <= level, by doubling then bisection.
inline double decay_horizon(const Matrix& a, double level = tol::kTruncation) {
  require(spectral_abscissa(a) < 0.0, "decay_horizon: matrix must be stable");
  const Semigroup sg(a);
  auto norm_at = [&](double t) { return spectral_norm(sg.at(t)); };
  double hi = 1.0;
  while (norm_at(hi) > level) {
    hi *= 2.0;
    require(hi < 1e8, "decay_horizon: decay too slow");
  }
  double lo = 0.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (norm_at(mid) > level ? lo : hi) = mid;
  }
  return hi;
}

struct SandwichResult {
  double upper_gap = 0.0;  // J(u_hat) - (Qx,x)
  double lower_gap = 0.0;  // (Qx,x) - J(u_Q)
  double tail_bound = 0.0;  // bound on the cost beyond T_trunc, both branches
  double J_optimal = 0.0;
  double J_candidate = 0.0;

  bool passes(double tolerance) const {
    return upper_gap >= -(tolerance + tail_bound) && lower_gap <= tolerance + tail_bound;
  }
};

namespace detail {

/// Cell Gramian int_0^h e^{A's} W e^{As} ds from one block exponential (Van Loan).
inline Matrix cell_gramian(const Matrix& a, const Matrix& w, double h) {
  const Eigen::Index n = a.rows();
  Matrix block = Matrix::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = -a.transpose() * h;
  block.topRightCorner(n, n) = w * h;
  block.bottomRightCorner(n, n) = a * h;
  const Matrix e = expm(block);
  return symmetrize(e.bottomRightCorner(n, n).transpose() * e.topRightCorner(n, n));
}

/// Truncated cost int_0^T y'(R'R + F'F)y dt along y' = (A - B F) y, y(0) = x.
/// Each cell contributes y_c' G_h y_c with the exact cell Gramian G_h.
inline double truncated_feedback_cost(const LqModel& model, const Matrix& gain, const Vector& x, double T,
                                      std::size_t steps, Vector* final_state = nullptr) {
  const Matrix acl = model.A - model.B * gain;
  const double h = T / static_cast<double>(steps);
  const Matrix g = cell_gramian(acl, model.RtR() + gain.transpose() * gain, h);
  const Matrix e_h = Semigroup(acl).at(h);
  Vector y = x;
  double cost = 0.0;
  for (std::size_t c = 0; c < steps; ++c) {
    cost += y.dot(g * y);
    y = e_h * y;
  }
  if (final_state) *final_state = y;
  return cost;
}

/// Cost-to-go matrix of the closed loop: solves A_cl'X + X A_cl + R'R + F'F = 0.
inline Matrix closed_loop_cost_matrix(const LqModel& model, const Matrix& gain) {
  return solve_lyapunov(model.A - model.B * gain, model.RtR() + gain.transpose() * gain);
}

}  // namespace detail

/// Two-sided comparison of (Qx,x) with the optimal feedback cost and with the
/// cost of the candidate's own feedback u_Q = -B'Q y.
inline SandwichResult value_sandwich_test(const Matrix& q, const LqModel& model, const Vector& x, double T_trunc,
                                          std::size_t grid_steps) {
  require(q.rows() == model.n() && q.cols() == model.n(), "value_sandwich_test: dimension mismatch");
  require((q - q.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, q.norm()),
          "value_sandwich_test: candidate must be symmetric");
  require(min_eigenvalue_symmetric(symmetrize(q)) >= tol::kPsdFloor * std::max(1.0, q.norm()),
          "value_sandwich_test: candidate must be PSD");
  require(grid_steps >= 1 && T_trunc > 0.0, "value_sandwich_test: bad truncation grid");
  require(spectral_norm(matrix_exponential_apply(model.A, T_trunc, Matrix::Identity(model.n(), model.n()))) <=
              tol::kTruncation,
          "value_sandwich_test: T_trunc too short for ||e^{A T}|| <= 1e-6");
  const Matrix acl_q = model.A - model.BBt() * q;
  if (spectral_abscissa(acl_q) >= 0.0) throw NumericalError("candidate outside admissible closed-loop set");

  const AreSolution ref = solve_are_newton(model);
  SandwichResult r;
  Vector y_opt, y_q;
  r.J_optimal = detail::truncated_feedback_cost(model, ref.K, x, T_trunc, grid_steps, &y_opt);
  const Matrix kq = model.B.transpose() * q;
  r.J_candidate = detail::truncated_feedback_cost(model, kq, x, T_trunc, grid_steps, &y_q);
  const double tail_opt = y_opt.squaredNorm() * spectral_norm(detail::closed_loop_cost_matrix(model, ref.K));
  const double tail_q = y_q.squaredNorm() * spectral_norm(detail::closed_loop_cost_matrix(model, kq));
  r.tail_bound = std::max(tail_opt, tail_q);
  const double qxx = x.dot(q * x);
  r.upper_gap = r.J_optimal - qxx;
  r.lower_gap = qxx - r.J_candidate;
  return r;
}

/// Class-Q membership: symmetric, PSD, gain bounded on D((-A)^eps).
struct ClassQReport {
  bool symmetric = false;
  bool psd = false;
  bool gain_bounded = false;
  double gain_norm = 0.0;
  bool ok() const { return symmetric && psd && gain_bounded; }
};

inline ClassQReport check_class_Q(const Matrix& p, const LqModel& model) {
  ClassQReport r;
  r.symmetric = (p - p.transpose()).cwiseAbs().maxCoeff() <= tol::kSymmetry * std::max(1.0, p.norm());
  r.psd = min_eigenvalue_symmetric(symmetrize(p)) >= tol::kPsdFloor;
  r.gain_norm = spectral_norm(model.B.transpose() * p * FractionalPowers(model.A).power(-model.assumption.epsilon));
  r.gain_bounded = std::isfinite(r.gain_norm);
  return r;
}

// ---------------------------------------------------------------------------
// Horizon limit

struct HorizonLimitStudy {
  std::vector<double> horizons;
  std::vector<double> gaps;          // ||P_T(0) - P||_2
  std::vector<double> min_gap_eigs;  // lambda_min(P - P_T(0)), >= 0 up to round-off
  double closed_loop_rate = 0.0;     // -abscissa(A_P)
};

inline HorizonLimitStudy horizon_limit_study(const LqModel& model, const std::vector<double>& horizons,
                                             std::size_t steps_per_unit = 200) {
  const LqModel inf = model.with_horizon(std::nullopt);
  const AreSolution are = solve_are_newton(inf);
  HorizonLimitStudy st;
  st.horizons = horizons;
  st.closed_loop_rate = -are.closed_loop_abscissa();
  for (double T : horizons) {
    const auto steps = static_cast<std::size_t>(std::ceil(T * static_cast<double>(steps_per_unit)));
    const Matrix p0 = solve_dre(model.with_horizon(T), steps).P.front();
    st.gaps.push_back(spectral_norm(are.P - p0));
    st.min_gap_eigs.push_back(min_eigenvalue_symmetric(symmetrize(are.P - p0)));
  }
  return st;
}

}  // namespace riccati_lab
