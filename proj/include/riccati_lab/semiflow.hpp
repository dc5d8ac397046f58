#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "riccati_lab/models.hpp"
#include "riccati_lab/numkernel.hpp"
#include "riccati_lab/parallel.hpp"
#include "riccati_lab/semiflow/paths.hpp"
#include "riccati_lab/semiflow/propagator.hpp"

namespace riccati_lab {

// ---------------------------------------------------------------------------
// Input-to-state map

/// (L_s u)(t) = int_s^t e^{A(t-r)} B u(r) dr, exact for piecewise-constant
/// and piecewise-linear controls.
inline Vector input_to_state(const LqModel& model, double s, const ControlPath& u, double t) {
  require(s <= t, "input_to_state: need s <= t");
  require(u.grid.contains(s, 1e-12) && u.grid.contains(t, 1e-12), "input_to_state: t outside the control grid span");
  require(u.dim() == model.m(), "input_to_state: control dimension mismatch");
  if (model.m() == 0 || t == s) return Vector::Zero(model.n());
  return CellPropagator(model).evolve(Vector::Zero(model.n()), s, u, t);
}

/// Response at every grid node from index `first` on, zero initial state.
inline Matrix input_to_state_sweep(const LqModel& model, const ControlPath& u, std::size_t first = 0) {
  require(u.dim() == model.m(), "input_to_state: control dimension mismatch");
  return CellPropagator(model).sweep(Vector::Zero(model.n()), u, first);
}

inline GradedOptions kernel_graded_options(const Matrix& a, int points_per_level = tol::kGradedPointsPerLevel) {
  GradedOptions g;
  g.points_per_level = points_per_level;
  double rho = 0.0;
  if (a.size() > 0) rho = a.cwiseAbs().rowwise().sum().maxCoeff();
  g.max_inner_width = 1e-3 / std::max(1.0, rho);
  return g;
}

struct RegularityProbeOptions {
  std::size_t steps = 200;
  std::optional<double> epsilon;  // defaults to the model's epsilon
};

/// Seeded unit-L^{q'} piecewise-constant controls on a uniform grid over [s,T].
inline std::vector<ControlPath> regularity_probe_samples(const LqModel& model, double s, double T,
                                                         std::size_t samples, std::uint64_t seed,
                                                         std::size_t steps = 200) {
  const TimeGrid grid = TimeGrid::uniform(s, T, steps);
  const double qc = model.assumption.q_conjugate();
  std::vector<ControlPath> out;
  out.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    ControlPath u = ControlPath::random(grid, model.m(), sub_seed(seed, i));
    const double nrm = u.lp_norm(qc);
    out.push_back(nrm > 0.0 ? u.scaled(1.0 / nrm) : u);
  }
  return out;
}

/// max over samples of sup_t ||(-A)^eps (L_s u)(t)|| / ||u||_{L^{q'}}.
inline double improved_regularity_probe(const LqModel& model, const std::vector<ControlPath>& samples,
                                        std::optional<double> epsilon = std::nullopt) {
  const double eps = epsilon.value_or(model.assumption.epsilon);
  const Matrix frac = eps == 0.0 ? Matrix::Identity(model.n(), model.n()) : FractionalPowers(model.A).power(eps);
  const double qc = model.assumption.q_conjugate();
  std::vector<double> ratio(samples.size(), 0.0);
  parallel_for(samples.size(), [&](std::size_t i) {
    const ControlPath& u = samples[i];
    const double nrm = u.lp_norm(qc);
    if (nrm == 0.0 || model.m() == 0) return;
    const Matrix y = input_to_state_sweep(model, u);
    ratio[i] = (frac * y).colwise().norm().maxCoeff() / nrm;
  });
  return samples.empty() ? 0.0 : *std::max_element(ratio.begin(), ratio.end());
}

inline double improved_regularity_probe(const LqModel& model, double s, double T, std::size_t samples,
                                        std::uint64_t seed, const RegularityProbeOptions& opts = {}) {
  require(model.finite_horizon(), "improved_regularity_probe: model must be finite-horizon");
  require(samples >= 1, "improved_regularity_probe: need at least one sample");
  require(s < T && T <= model.T() * (1 + 1e-12), "improved_regularity_probe: need s < T <= horizon");
  return improved_regularity_probe(model, regularity_probe_samples(model, s, T, samples, seed, opts.steps),
                                   opts.epsilon);
}

/// (int_0^{T-s} ||e^{A r} B||^q dr)^{1/q}: bounds sup_t ||(L_s u)(t)|| for
/// unit u in L^{q'} by Hoelder's inequality.
inline double input_to_state_holder_bound(const LqModel& model, double s, double T) {
  require(s < T, "holder bound: need s < T");
  if (model.m() == 0) return 0.0;
  const double q = model.assumption.q;
  const Semigroup sg(model.A);
  const double integral = integrate_graded(
      [&](double r) { return std::pow(spectral_norm(sg.apply(r, model.B)), q); }, 0.0, T - s,
      kernel_graded_options(model.A));
  return std::pow(integral, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Probing helpers

/// Seeded Gaussian unit probes followed by the canonical basis.
inline std::vector<Vector> unit_probes(Eigen::Index n, std::size_t probes, std::uint64_t seed) {
  std::vector<Vector> out;
  out.reserve(probes + static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < probes; ++i) {
    Rng rng(sub_seed(seed, i));
    out.push_back(rng.unit_vector(n));
  }
  for (Eigen::Index k = 0; k < n; ++k) out.push_back(Vector::Unit(n, k));
  return out;
}

namespace detail {

/// Sampled kernels K_i (rows: control, cols: state) on a graded rule.
struct SampledKernel {
  GradedRule rule;
  std::vector<Matrix> k;

  /// Right singular vector of the weight-stacked kernels: the maximiser of
  /// the discretised L^2 form, a strong extra probe.
  Vector dominant_direction() const {
    const Eigen::Index n = k.front().cols(), m = k.front().rows();
    Matrix gram = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < k.size(); ++i) gram += rule.weights()[i] * k[i].transpose() * k[i];
    if (m == 0 || gram.norm() == 0.0) return Vector::Unit(n, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(gram));
    return es.eigenvectors().col(n - 1);
  }

  double lq(const Vector& x, double q) const {
    std::vector<double> s(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) s[i] = std::pow((k[i] * x).norm(), q);
    return rule.integrate(s);
  }
};

inline SampledKernel sample_kernel(const Matrix& a, const Matrix& b, double horizon, double delta,
                                   const Matrix& right, int points_per_level) {
  SampledKernel sk{GradedRule(0.0, horizon, kernel_graded_options(a, points_per_level)), {}};
  const Semigroup sg(a);
  const auto& nodes = sk.rule.nodes();
  sk.k.resize(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t i) {
    sk.k[i] = std::exp(delta * nodes[i]) * sg.apply(nodes[i], b).transpose() * right;
  });
  return sk;
}

inline double max_over_probes(const SampledKernel& sk, const std::vector<Vector>& probes, double q) {
  std::vector<double> v(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) { v[i] = sk.lq(probes[i], q); });
  return *std::max_element(v.begin(), v.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Admissibility

struct AdmissibilityOptions {
  int points_per_level = tol::kGradedPointsPerLevel;
};

/// max over unit probes x of int_0^T ||B' e^{A't} x||^2 dt.
inline double admissibility_constant(const LqModel& model, double T, std::size_t probes, std::uint64_t seed,
                                     const AdmissibilityOptions& opts = {}) {
  require(T > 0.0, "admissibility_constant: T must be > 0");
  if (model.m() == 0 || model.B.norm() == 0.0) return 0.0;
  const auto sk = detail::sample_kernel(model.A, model.B, T, 0.0, Matrix::Identity(model.n(), model.n()),
                                        opts.points_per_level);
  auto xs = unit_probes(model.n(), probes, seed);
  xs.push_back(sk.dominant_direction());
  return detail::max_over_probes(sk, xs, 2.0);
}

// ---------------------------------------------------------------------------
// Singular decay

struct SingularDecayFit {
  double gamma_hat = 0.0;
  double N_hat = 0.0;
  double fit_residual = 0.0;  // RMS of the log-space residuals
};

/// Least-squares fit of log f(t) = log N - gamma log t on log-spaced nodes.
inline SingularDecayFit fit_power_law(const std::function<double(double)>& f, double t_min, double t_max,
                                      std::size_t nodes) {
  require(t_min > 0.0 && t_min < t_max, "singular decay: need 0 < t_min < t_max");
  require(nodes >= 8, "singular decay: need at least 8 nodes");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(nodes), 2);
  Vector rhs(static_cast<Eigen::Index>(nodes));
  bool any_zero = false;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double t = t_min * std::pow(t_max / t_min, static_cast<double>(i) / static_cast<double>(nodes - 1));
    const double v = f(t);
    if (!(v > 0.0)) {
      any_zero = true;
      break;
    }
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    design(r, 1) = -std::log(t);
    rhs(r) = std::log(v);
  }
  if (any_zero) throw NumericalError("no singular component");
  const Vector coef = design.colPivHouseholderQr().solve(rhs);
  const Vector res = design * coef - rhs;
  return {coef(1), std::exp(coef(0)), std::sqrt(res.squaredNorm() / static_cast<double>(nodes))};
}

/// Fit of ||F(t)|| with F the singular part of B' e^{A't}.
inline SingularDecayFit estimate_singular_decay(const LqModel& model, double t_min, double t_max,
                                                std::size_t nodes) {
  const AdjointKernel kernel(model);
  return fit_power_law([&](double t) { return spectral_norm(kernel.split(t).first); }, t_min, t_max, nodes);
}

// ---------------------------------------------------------------------------
// Weighted kernel norms

/// max over unit probes x of || e^{delta t} B' e^{A't} ((-A)')^eps x ||_{L^q(0,horizon)}.
inline double weighted_kernel_Lq(const LqModel& model, double delta, double q, double eps, double horizon,
                                 std::size_t probes, std::uint64_t seed) {
  require(q > 1.0 && q < 2.0, "weighted_kernel_Lq: q must lie in (1,2)");
  require(horizon > 0.0 && std::isfinite(horizon), "weighted_kernel_Lq: horizon must be positive and finite");
  if (!model.finite_horizon())
    require(delta < std::min(model.assumption.omega, model.assumption.eta),
            "weighted_kernel_Lq: delta must be below min(omega, eta) for infinite horizon");
  if (model.m() == 0 || model.B.norm() == 0.0) return 0.0;
  const Matrix at = model.A.transpose();
  const Matrix right = eps == 0.0 ? Matrix::Identity(model.n(), model.n()) : FractionalPowers(at).power(eps);
  const auto sk = detail::sample_kernel(model.A, model.B, horizon, delta, right, tol::kGradedPointsPerLevel);
  auto xs = unit_probes(model.n(), probes, seed);
  xs.push_back(sk.dominant_direction());
  return std::pow(detail::max_over_probes(sk, xs, q), 1.0 / q);
}

// ---------------------------------------------------------------------------
// Adjoint representations

struct DualityResidual {
  double res_S = 0.0;
  double res_T = 0.0;
};

/// Pairs S*h with z and T*g with w against the forward kernels Sz, Tw on
/// the same grid and composite rule. The adjoint sums run through the A
/// semigroup and (-A)^{+-eps}; the forward kernels through the A' semigroup
/// and ((-A)')^{+-eps}.
inline DualityResidual adjoint_duality_residual(const LqModel& model, double delta, const ControlPath& h,
                                                const Trajectory& g, const Vector& z, const Vector& w,
                                                double horizon, std::optional<double> epsilon = std::nullopt) {
  const auto& as = model.assumption;
  require(delta > 0.0 && delta < std::min(as.omega, as.eta), "duality: delta must lie in (0, min(omega, eta))");
  const TimeGrid& grid = h.grid;
  require(std::abs(grid.front()) <= 1e-12 && std::abs(grid.back() - horizon) <= 1e-9 * std::max(1.0, horizon),
          "duality: grid mismatch between paths and horizon");
  require(g.grid == grid, "duality: grid mismatch between h and g");
  require(h.dim() == model.m() && g.states.rows() == model.n(), "duality: path dimension mismatch");
  require(z.size() == model.n() && w.size() == model.m(), "duality: probe dimension mismatch");
  const double eps = epsilon.value_or(as.epsilon);

  const std::vector<double> wq = quadrature_weights(grid, QuadratureRule::simpson);
  const Semigroup fwd(model.A), adj(model.A.transpose());
  const FractionalPowers pa(model.A), pat(model.A.transpose());
  const Matrix a_pos = pa.power(eps), a_neg = pa.power(-eps);
  const Matrix at_pos = pat.power(eps), at_neg = pat.power(-eps);
  const Vector at_pos_z = at_pos * z;
  const Matrix b_w = model.B * w;

  const std::size_t count = grid.size();
  std::vector<Vector> s_star(count), t_star(count);
  std::vector<double> pair_s(count), pair_t(count);
  parallel_for(count, [&](std::size_t i) {
    const double t = grid[i];
    const double e = std::exp(delta * t);
    const Vector hi = h.node(i), gi = g.state(i);
    s_star[i] = wq[i] * e * (a_pos * fwd.apply(t, model.B * hi));
    const Vector sz = e * model.B.transpose() * adj.apply(t, at_pos_z);
    pair_s[i] = wq[i] * hi.dot(sz);
    t_star[i] = wq[i] * e * (model.B.transpose() * adj.apply(t, at_neg * gi));
    const Vector tw = e * (a_neg * fwd.apply(t, b_w));
    pair_t[i] = wq[i] * gi.dot(tw);
  });
  Vector s_sum = Vector::Zero(model.n()), t_sum = Vector::Zero(model.m());
  double ps = 0.0, pt = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    s_sum += s_star[i];
    t_sum += t_star[i];
    ps += pair_s[i];
    pt += pair_t[i];
  }
  return {std::abs(s_sum.dot(z) - ps), std::abs(t_sum.dot(w) - pt)};
}

// ---------------------------------------------------------------------------
// Assumption report

struct AssumptionReport {
  std::string model_id;
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  double N_hat = std::numeric_limits<double>::quiet_NaN();
  double admissibility_C = 0.0;
  double weighted_Lq = 0.0;
  std::vector<std::pair<std::string, double>> fit_residuals;
  std::size_t probes = tol::kDefaultProbes;
  std::uint64_t seed = 0;
  std::string note;  // e.g. "no singular component"
};

struct AssumptionReportOptions {
  double t_min = 1e-4;
  double t_max = 1e-1;
  std::size_t nodes = 40;
  std::size_t probes = tol::kDefaultProbes;
  std::uint64_t seed = 1;
  double admissibility_T = 1.0;
  double Lq_horizon = 1.0;
};

inline AssumptionReport measure_assumptions(const LqModel& model, const AssumptionReportOptions& o = {}) {
  AssumptionReport r;
  r.model_id = model.model_id;
  r.probes = o.probes;
  r.seed = o.seed;
  try {
    const auto fit = estimate_singular_decay(model, o.t_min, o.t_max, o.nodes);
    r.gamma_hat = fit.gamma_hat;
    r.N_hat = fit.N_hat;
    r.fit_residuals.emplace_back("singular_decay", fit.fit_residual);
  } catch (const NumericalError& e) {
    r.note = e.what();
  }
  r.admissibility_C = admissibility_constant(model, o.admissibility_T, o.probes, o.seed);
  const auto& as = model.assumption;
  r.weighted_Lq = weighted_kernel_Lq(model, as.delta, as.q, as.epsilon, o.Lq_horizon, o.probes, o.seed);
  return r;
}

}  // namespace riccati_lab
