#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "riccati_lab/are.hpp"
#include "riccati_lab/dre.hpp"
#include "riccati_lab/semiflow/paths.hpp"
#include "riccati_lab/semiflow/propagator.hpp"

namespace riccati_lab {

// ---------------------------------------------------------------------------
// Gain sources

/// Q(t) in the feedback u = -B'Q(t) y: a DRE path or a constant matrix.
class GainSource {
 public:
  static GainSource constant(Matrix q) {
    GainSource g;
    g.constant_ = std::move(q);
    return g;
  }

  static GainSource from(const DreSolution& sol) {
    GainSource g;
    g.path_ = std::make_shared<const DreSolution>(sol);
    return g;
  }

  static GainSource from(const AreSolution& sol) { return constant(sol.P); }

  bool time_varying() const { return path_ != nullptr; }
  Eigen::Index n() const { return path_ ? path_->n() : constant_.rows(); }

  bool covers(double a, double b) const {
    if (!path_) return true;
    return path_->grid.contains(a, 1e-12) && path_->grid.contains(b, 1e-12);
  }

  Matrix Q(double t) const { return path_ ? path_->P_at(t) : constant_; }

  /// dQ/dt; derivative of the Hermite interpolant for DRE paths.
  Matrix dQ(double t) const {
    if (!path_) return Matrix::Zero(constant_.rows(), constant_.cols());
    const DreSolution& s = *path_;
    require(s.dP.size() == s.P.size(), "gain source: DRE path lacks derivatives");
    if (auto i = s.grid.index_of(t, 1e-12 * std::max(1.0, s.T()))) return s.dP[*i];
    const std::size_t c = s.grid.cell_of(t);
    const double h = s.grid[c + 1] - s.grid[c];
    const double x = (t - s.grid[c]) / h;
    const double d00 = 6 * x * (x - 1) / h, d10 = (1 - x) * (1 - 3 * x);
    const double d01 = -d00, d11 = x * (3 * x - 2);
    return d00 * s.P[c] + d10 * s.dP[c] + d01 * s.P[c + 1] + d11 * s.dP[c + 1];
  }

  /// Set only by verified_gain after the integral-equation precheck.
  bool verified() const { return verified_; }

 private:
  friend GainSource verified_gain(const DreSolution&, const LqModel&, double);
  friend GainSource verified_gain(const AreSolution&, const LqModel&, double);

  Matrix constant_;
  std::shared_ptr<const DreSolution> path_;
  bool verified_ = false;
};

/// DRE path admitted as a gain source only if its strong integral residual on
/// [0,T] is below tolerance (relative to max(1,||P(0)||)).
inline GainSource verified_gain(const DreSolution& sol, const LqModel& model, double tolerance = 1e-6) {
  DreSolution s = sol;
  if (s.dP.size() != s.P.size() || s.K.size() != s.P.size()) attach_derivatives(s, model);
  const double scale = std::max(1.0, spectral_norm(s.P.front()));
  const double res = ire_strong_residual(s, model, s.grid.front(), s.T());
  if (!(res <= tolerance * scale) || spectral_norm(s.P.back()) > tolerance * scale)
    throw NumericalError("Q failed its integral-equation precheck (residual " + std::to_string(res) + ")");
  GainSource g = GainSource::from(s);
  g.verified_ = true;
  return g;
}

/// ARE candidate admitted if its algebraic residual is small; on this class the
/// algebraic and integral forms coincide.
inline GainSource verified_gain(const AreSolution& sol, const LqModel& model, double tolerance = 1e-8) {
  const double res = are_residual_norm(model, sol.P);
  if (!(res <= tolerance * are_residual_scale(model, sol.P)))
    throw NumericalError("Q failed its integral-equation precheck (residual " + std::to_string(res) + ")");
  GainSource g = GainSource::from(sol);
  g.verified_ = true;
  return g;
}

namespace detail {

/// (-A)^eps for the weighted norm; shifted when A is not stable.
inline Matrix domain_weight(const LqModel& model) {
  const double eps = model.assumption.epsilon;
  const double abscissa = spectral_abscissa(model.A);
  const Eigen::Index n = model.n();
  if (abscissa < 0.0) return FractionalPowers(model.A).power(eps);
  return FractionalPowers(model.A - (abscissa + 1.0) * Matrix::Identity(n, n)).power(eps);
}

/// Exact propagation over one cell for a cubic control
/// u(s) = c0 + c1 s + c2 s^2 + c3 s^3, using phi_1..phi_4.
class CubicPropagator {
 public:
  CubicPropagator(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {}

  Vector advance(const Vector& y, double tau, const Vector& u0, const Vector& du0, const Vector& u1,
                 const Vector& du1) const {
    const auto& w = weights(tau);
    const Vector c2 = (3.0 * (u1 - u0) / tau - 2.0 * du0 - du1) / tau;
    const Vector c3 = (du0 + du1 - 2.0 * (u1 - u0) / tau) / (tau * tau);
    return w[0] * y + w[1] * u0 + w[2] * du0 + w[3] * c2 + w[4] * c3;
  }

 private:
  const std::vector<Matrix>& weights(double tau) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.lower_bound(tau * (1.0 - 1e-13));
    if (it != cache_.end() && it->first <= tau * (1.0 + 1e-13)) return it->second;
    const auto phi = phi_functions(a_, tau, 4);
    std::vector<Matrix> w{phi[0]};
    double fact = 1.0;
    for (int j = 0; j < 4; ++j) {
      if (j > 0) fact *= j;
      w.push_back(fact * std::pow(tau, j + 1) * phi[j + 1] * b_);
    }
    return cache_.emplace(tau, std::move(w)).first->second;
  }

  Matrix a_, b_;
  mutable std::map<double, std::vector<Matrix>> cache_;
  mutable std::mutex mutex_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Closed loop

struct FixedPointOptions {
  double tolerance = 1e-12;
  std::size_t max_iter = 500;
  bool keep_iterates = false;  // otherwise only the final iterate is kept
};

struct FixedPointTrace {
  std::vector<Trajectory> iterates;
  std::vector<double> differences;          // ||y_{k+1} - y_k||_{X,r}
  std::vector<double> contraction_factors;  // successive difference ratios
  double r = 0.0;
  bool converged = false;

  const Trajectory& limit() const { return iterates.back(); }

  /// Median over the first `count` factors (all when count is 0).
  double median_factor(std::size_t count = 0) const {
    if (contraction_factors.empty()) return 0.0;
    const std::size_t k = count == 0 ? contraction_factors.size() : std::min(count, contraction_factors.size());
    std::vector<double> f(contraction_factors.begin(), contraction_factors.begin() + static_cast<long>(k));
    std::nth_element(f.begin(), f.begin() + static_cast<long>(f.size() / 2), f.end());
    return f[f.size() / 2];
  }
};

/// Picard iteration y_{k+1} = e^{A.}x - L B'Q y_k on a grid. The feedback term
/// is a cubic Hermite in each cell and propagated exactly. Differences are
/// measured in sup_t e^{-rt} ||(-A)^eps y(t)||.
inline FixedPointTrace closed_loop_fixed_point(const LqModel& model, const GainSource& gain, const Vector& x,
                                               const TimeGrid& grid, double r, const FixedPointOptions& opts = {}) {
  require(r >= 0.0, "closed_loop_fixed_point: r must be >= 0");
  require(x.size() == model.n() && x.allFinite(), "closed_loop_fixed_point: bad initial state");
  require(grid.size() >= 2, "closed_loop_fixed_point: grid needs a cell");
  require(gain.covers(grid.front(), grid.back()), "closed_loop_fixed_point: gain does not cover the grid span");
  const std::size_t N = grid.size();
  const Eigen::Index n = model.n(), m = model.m();
  const Matrix weight = detail::domain_weight(model);
  const Matrix bt = model.B.transpose();
  std::vector<Matrix> q(N), dq(N);
  for (std::size_t i = 0; i < N; ++i) q[i] = gain.Q(grid[i]), dq[i] = gain.dQ(grid[i]);

  const detail::CubicPropagator prop(model.A, model.B);
  const CellPropagator free(model.A, Matrix::Zero(n, 0));

  auto weighted_norm = [&](const Matrix& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      s = std::max(s, std::exp(-r * (grid[i] - grid.front())) * (weight * d.col(static_cast<Eigen::Index>(i))).norm());
    return s;
  };

  FixedPointTrace trace;
  trace.r = r;
  Matrix y(n, static_cast<Eigen::Index>(N));
  y.col(0) = x;
  for (std::size_t i = 0; i + 1 < N; ++i)
    y.col(static_cast<Eigen::Index>(i + 1)) = free.step(grid[i + 1] - grid[i]).E * y.col(static_cast<Eigen::Index>(i));
  Matrix u_prev = Matrix::Zero(m, static_cast<Eigen::Index>(N));

  auto as_trajectory = [&](const Matrix& states) { return Trajectory{grid, states, std::nullopt, std::nullopt, {}}; };
  if (opts.keep_iterates) trace.iterates.push_back(as_trajectory(y));

  for (std::size_t k = 0; k < opts.max_iter; ++k) {
    Matrix u(m, static_cast<Eigen::Index>(N)), du(m, static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      const Vector yi = y.col(c);
      const Vector dyi = model.A * yi + model.B * u_prev.col(c);
      u.col(c) = -bt * (q[i] * yi);
      du.col(c) = -bt * (dq[i] * yi + q[i] * dyi);
    }
    Matrix next(n, static_cast<Eigen::Index>(N));
    next.col(0) = x;
    for (std::size_t i = 0; i + 1 < N; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      next.col(c + 1) =
          prop.advance(next.col(c), grid[i + 1] - grid[i], u.col(c), du.col(c), u.col(c + 1), du.col(c + 1));
    }
    const double diff = weighted_norm(next - y);
    if (!trace.differences.empty() && trace.differences.back() > 0.0)
      trace.contraction_factors.push_back(diff / trace.differences.back());
    trace.differences.push_back(diff);
    y = std::move(next);
    u_prev = std::move(u);
    if (opts.keep_iterates) trace.iterates.push_back(as_trajectory(y));
    if (!std::isfinite(diff)) break;
    if (diff <= opts.tolerance) {
      trace.converged = true;
      break;
    }
  }
  if (!opts.keep_iterates) trace.iterates.push_back(as_trajectory(y));
  return trace;
}

/// RK4 for y' = (A - BB'Q(t)) y with stiffness-driven substeps. The returned
/// controls are u = -B'Q(t_i) y(t_i) sampled at the nodes.
inline Trajectory closed_loop_ode(const LqModel& model, const GainSource& gain, const Vector& x, const TimeGrid& grid) {
  require(x.size() == model.n() && x.allFinite(), "closed_loop_ode: bad initial state");
  require(grid.size() >= 2, "closed_loop_ode: grid needs a cell");
  require(gain.covers(grid.front(), grid.back()), "closed_loop_ode: gain grid does not cover the requested span");
  const Matrix bbt = model.BBt(), bt = model.B.transpose();
  const std::size_t N = grid.size();
  double qmax = 0.0;
  for (std::size_t i = 0; i < N; ++i) qmax = std::max(qmax, spectral_norm(gain.Q(grid[i])));
  const double rho = detail::spectral_radius_bound(model.A) + spectral_norm(bbt) * qmax;
  auto f = [&](double t, const Vector& y) -> Vector { return model.A * y - bbt * (gain.Q(t) * y); };

  Trajectory out{grid, Matrix(model.n(), static_cast<Eigen::Index>(N)), std::nullopt, std::nullopt, {}};
  Matrix u(model.m(), static_cast<Eigen::Index>(N));
  Vector y = x;
  out.states.col(0) = y;
  u.col(0) = -bt * (gain.Q(grid[0]) * y);
  for (std::size_t i = 0; i + 1 < N; ++i) {
    const double H = grid[i + 1] - grid[i];
    const auto sub = static_cast<std::size_t>(std::max(1.0, std::ceil(H * rho / 0.1)));
    const double h = H / static_cast<double>(sub);
    for (std::size_t j = 0; j < sub; ++j) {
      const double t = grid[i] + static_cast<double>(j) * h;
      const Vector k1 = f(t, y);
      const Vector k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
      const Vector k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
      const Vector k4 = f(t + h, y + h * k3);
      y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    out.states.col(static_cast<Eigen::Index>(i + 1)) = y;
    u.col(static_cast<Eigen::Index>(i + 1)) = -bt * (gain.Q(grid[i + 1]) * y);
  }
  out.controls = ControlPath(grid, u, ControlPath::Kind::sampled);
  return out;
}

struct ClosedLoopComparison {
  double gap = 0.0;          // max |fixed point limit - ODE| on the grid nodes
  double grid_error = 0.0;   // Richardson estimate of the fixed point's own grid error
  bool converged = false;

  /// Agreement up to max(tolerance, twice the grid-error estimate).
  double allowance(double tolerance) const { return std::max(tolerance, 2.0 * grid_error); }
};

/// Fixed-point limit (r = 1) against the RK4 closed loop. The grid error is
/// estimated from a second solve on the grid with all midpoints inserted.
inline ClosedLoopComparison compare_fixed_point_to_ode(const LqModel& model, const GainSource& gain, const Vector& x,
                                                       const TimeGrid& grid) {
  ClosedLoopComparison c;
  const auto coarse = closed_loop_fixed_point(model, gain, x, grid, 1.0);
  if (!coarse.converged) return c;
  c.gap = (coarse.limit().states - closed_loop_ode(model, gain, x, grid).states).cwiseAbs().maxCoeff();
  std::vector<double> nodes;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i > 0) nodes.push_back(0.5 * (grid[i - 1] + grid[i]));
    nodes.push_back(grid[i]);
  }
  const auto fine = closed_loop_fixed_point(model, gain, x, TimeGrid(std::move(nodes)), 1.0);
  if (!fine.converged) return c;
  const Matrix& a = coarse.limit().states;
  const Matrix& b = fine.limit().states;
  double diff = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) diff = std::max(diff, (a.col(i) - b.col(2 * i)).cwiseAbs().maxCoeff());
  c.grid_error = diff * 16.0 / 15.0;
  c.converged = true;
  return c;
}

// ---------------------------------------------------------------------------
// Open-loop simulation and cost

namespace detail {

/// Augmented generator for [y; u] (piecewise constant) or [y; u; u'] (linear).
inline Matrix augmented_generator(const LqModel& model, bool linear) {
  const Eigen::Index n = model.n(), m = model.m();
  const Eigen::Index size = n + (linear ? 2 : 1) * m;
  Matrix g = Matrix::Zero(size, size);
  g.topLeftCorner(n, n) = model.A;
  g.block(0, n, n, m) = model.B;
  if (linear) g.block(n, n + m, m, m).setIdentity();
  return g;
}

/// Augmented state at the start of cell i.
inline Vector augmented_state(const ControlPath& u, std::size_t i, const Vector& y) {
  const Eigen::Index n = y.size(), m = u.dim();
  const bool linear = u.kind == ControlPath::Kind::sampled;
  Vector z(n + (linear ? 2 : 1) * m);
  z.head(n) = y;
  z.segment(n, m) = u.node(i);
  if (linear) z.tail(m) = (u.node(i + 1) - u.node(i)) / (u.grid[i + 1] - u.grid[i]);
  return z;
}

/// Per-step-length cache of exact cell Gramians for a quadratic running cost.
class CellCostCache {
 public:
  CellCostCache(Matrix generator, Matrix weight) : gen_(std::move(generator)), w_(std::move(weight)) {}

  const Matrix& at(double tau) {
    auto it = cache_.lower_bound(tau * (1.0 - 1e-13));
    if (it != cache_.end() && it->first <= tau * (1.0 + 1e-13)) return it->second;
    return cache_.emplace(tau, cell_gramian(gen_, w_, tau)).first->second;
  }

 private:
  Matrix gen_, w_;
  std::map<double, Matrix> cache_;
};

}  // namespace detail

/// y = e^{A.}x + L u with exact per-cell propagation, and the running cost
/// int (||Ry||^2 + ||u||^2) integrated exactly cell by cell.
inline Trajectory simulate(const LqModel& model, const ControlPath& u, const Vector& x) {
  require(x.size() == model.n() && x.allFinite(), "simulate: bad initial state");
  require(u.dim() == model.m(), "simulate: control dimension mismatch");
  require(u.grid.size() >= 2, "simulate: control grid needs a cell");
  const Eigen::Index n = model.n(), m = model.m();
  const bool linear = u.kind == ControlPath::Kind::sampled;
  const CellPropagator prop(model);
  Trajectory out{u.grid, prop.sweep(x, u), u, std::nullopt, {}};

  Matrix w = Matrix::Zero(n + (linear ? 2 : 1) * m, n + (linear ? 2 : 1) * m);
  w.topLeftCorner(n, n) = model.RtR();
  w.block(n, n, m, m).setIdentity();
  detail::CellCostCache cells(detail::augmented_generator(model, linear), w);
  out.running_cost.assign(u.grid.size(), 0.0);
  for (std::size_t i = 0; i + 1 < u.grid.size(); ++i) {
    const Vector z = detail::augmented_state(u, i, out.state(i));
    out.running_cost[i + 1] = out.running_cost[i] + z.dot(cells.at(u.grid[i + 1] - u.grid[i]) * z);
  }
  out.cost = out.running_cost.back();
  return out;
}

// ---------------------------------------------------------------------------
// Fundamental identity

struct IdentityTerms {
  double lhs = 0.0;     // (Q(t)y(t),y(t)) - (Q(s)x,x)
  double cost = 0.0;    // int_s^t ||Ry||^2 + ||u||^2
  double square = 0.0;  // int_s^t ||u + B'Q y||^2
  double residual() const { return std::abs(lhs - (square - cost)); }
};

/// Both sides of the cost identity along the open-loop trajectory from y(s) = x.
/// s and t must be nodes of the control grid. The square term is exact for a
/// constant Q and uses 4-point Gauss-Legendre per cell for a DRE path.
inline IdentityTerms fundamental_identity_terms(const GainSource& gain, const LqModel& model, const ControlPath& u,
                                                const Vector& x, double s, double t) {
  require(gain.verified(), "fundamental identity: gain source has not passed its integral-equation precheck");
  require(s <= t, "fundamental identity: need s <= t");
  require(gain.covers(s, t), "fundamental identity: [s,t] outside the solution span");
  const auto is = u.grid.index_of(s, 1e-12 * std::max(1.0, std::abs(s)));
  const auto it = u.grid.index_of(t, 1e-12 * std::max(1.0, std::abs(t)));
  require(is && it, "fundamental identity: s and t must be control grid nodes");
  IdentityTerms out;
  if (*is == *it) return out;

  std::vector<double> nodes(u.grid.nodes().begin() + static_cast<long>(*is),
                            u.grid.nodes().begin() + static_cast<long>(*it) + 1);
  Matrix values = u.values.middleCols(static_cast<Eigen::Index>(*is), static_cast<Eigen::Index>(nodes.size()));
  const ControlPath window(TimeGrid(nodes), values, u.kind);
  const Trajectory traj = simulate(model, window, x);

  const Vector yt = traj.final_state();
  out.lhs = yt.dot(gain.Q(t) * yt) - x.dot(gain.Q(s) * x);
  out.cost = *traj.cost;

  const Eigen::Index n = model.n(), m = model.m();
  const Matrix bt = model.B.transpose();
  if (!gain.time_varying()) {
    const bool linear = window.kind == ControlPath::Kind::sampled;
    const Matrix k = bt * gain.Q(s);
    Matrix w = Matrix::Zero(n + (linear ? 2 : 1) * m, n + (linear ? 2 : 1) * m);
    w.topLeftCorner(n, n) = k.transpose() * k;
    w.block(0, n, n, m) = k.transpose();
    w.block(n, 0, m, n) = k;
    w.block(n, n, m, m).setIdentity();
    detail::CellCostCache cells(detail::augmented_generator(model, linear), w);
    for (std::size_t i = 0; i + 1 < window.grid.size(); ++i) {
      const Vector z = detail::augmented_state(window, i, traj.state(i));
      out.square += z.dot(cells.at(window.grid[i + 1] - window.grid[i]) * z);
    }
    return out;
  }

  const auto [gx, gw] = gauss_legendre(4);
  const CellPropagator prop(model);
  for (std::size_t i = 0; i + 1 < window.grid.size(); ++i) {
    const double a = window.grid[i], h = window.grid[i + 1] - a;
    for (std::size_t j = 0; j < gx.size(); ++j) {
      const double tau = h * (gx[j] + 1.0) / 2.0;
      const Vector u_end = window.at(a + tau);
      const Vector yj = window.kind == ControlPath::Kind::sampled ? prop.advance(traj.state(i), tau, window.node(i), u_end)
                                                                  : prop.advance(traj.state(i), tau, window.node(i));
      const Vector uj = window.kind == ControlPath::Kind::sampled ? u_end : window.node(i);
      out.square += h / 2.0 * gw[j] * (uj + bt * (gain.Q(a + tau) * yj)).squaredNorm();
    }
  }
  return out;
}

inline double fundamental_identity_residual(const GainSource& gain, const LqModel& model, const ControlPath& u,
                                            const Vector& x, double s, double t) {
  return fundamental_identity_terms(gain, model, u, x, s, t).residual();
}

// ---------------------------------------------------------------------------
// Feedback synthesis

struct FeedbackResult {
  ControlPath u_hat;    // -K(t_i) y_hat(t_i), linear between nodes
  Trajectory y_hat;     // closed-loop RK4 trajectory
  Trajectory realized;  // simulate(u_hat): the open-loop response to u_hat
  double J_hat = 0.0;
};

inline FeedbackResult feedback_synthesis(const LqModel& model, const GainSource& gain, const Vector& x,
                                         const TimeGrid& grid) {
  FeedbackResult r;
  r.y_hat = closed_loop_ode(model, gain, x, grid);
  r.u_hat = *r.y_hat.controls;
  r.realized = simulate(model, r.u_hat, x);
  r.J_hat = *r.realized.cost;
  return r;
}

// ---------------------------------------------------------------------------
// Discrete dynamic programming oracle

struct DiscreteDp {
  TimeGrid grid;
  std::vector<Matrix> P;  // value matrices at grid nodes, P.back() = 0
  double value(const Vector& x, std::size_t k = 0) const { return x.dot(P[k] * x); }
};

/// Backward Riccati difference recursion for the sampled system
/// y+ = F y + G u with stage cost dt (||Ry||^2 + ||u||^2).
inline DiscreteDp discrete_dp_oracle(const LqModel& model, double T, double dt) {
  require(dt > 0.0, "discrete_dp_oracle: dt must be positive");
  require(T > 0.0, "discrete_dp_oracle: T must be positive");
  const double steps_real = T / dt;
  const auto steps = static_cast<std::size_t>(std::llround(steps_real));
  require(steps >= 1 && std::abs(steps_real - static_cast<double>(steps)) <= 1e-9 * steps_real,
          "discrete_dp_oracle: dt must divide T");
  const auto phi = phi_functions(model.A, dt, 1);
  const Matrix f = phi[0], g = dt * phi[1] * model.B;
  const Matrix stage = dt * model.RtR();
  const Eigen::Index m = model.m();
  DiscreteDp out;
  out.grid = TimeGrid::uniform(0.0, T, steps);
  out.P.assign(steps + 1, Matrix::Zero(model.n(), model.n()));
  for (std::size_t k = steps; k-- > 0;) {
    const Matrix& p = out.P[k + 1];
    const Matrix gp = g.transpose() * p;
    const Matrix gain = (dt * Matrix::Identity(m, m) + gp * g).ldlt().solve(gp * f);
    out.P[k] = symmetrize(stage + f.transpose() * p * f - (gp * f).transpose() * gain);
  }
  return out;
}

}  // namespace riccati_lab
