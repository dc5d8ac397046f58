#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riccati_lab/are.hpp"
#include "riccati_lab/config.hpp"
#include "riccati_lab/dre.hpp"
#include "riccati_lab/report.hpp"
#include "riccati_lab/synthesis.hpp"

namespace riccati_lab {

// Verification suites over a stored solution. Every check yields a residual
// and a tolerance; the check passes iff residual <= tolerance.

inline const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> table{
      {"precheck", 1e-6},          {"ire", 1e-6},
      {"ire_strong", 1e-6},        {"are_residual", 1e-9},
      {"are_integral", 1e-6},      {"generator_identity", 1e-10},
      {"fundamental_identity", 1e-5}, {"closed_loop", 1e-6},
      {"contraction", 1e-12},      {"uniqueness", 1.0 - 1e-9},
      {"uniqueness_window", 1e-12}, {"value_sandwich", 1e-6},
      {"self_consistency", 1e-5},  {"evolution", 1e-6},
      {"class_QT", 1e-9},          {"class_Q", 1e-9},
      {"feedback_value", 1e-6},
  };
  return table;
}

inline const std::vector<std::string>& dre_check_names() {
  static const std::vector<std::string> names{
      "class_QT",   "closed_loop", "contraction",      "evolution",  "feedback_value", "fundamental_identity",
      "ire",        "ire_strong",  "self_consistency", "uniqueness", "uniqueness_window"};
  return names;
}

inline const std::vector<std::string>& are_check_names() {
  static const std::vector<std::string> names{
      "are_integral",   "are_residual",         "class_Q",           "closed_loop",   "contraction",
      "feedback_value", "fundamental_identity", "generator_identity", "value_sandwich"};
  return names;
}

struct VerifyOptions {
  std::size_t tuples = 10;
  std::size_t controls = 50;
  std::size_t probes = 8;
  std::uint64_t seed = 1;
  std::size_t control_steps = 4000;
  double t_trunc = 40.0;  // infinite-horizon window for the identity
  std::map<std::string, double> tolerances;

  double tolerance(const std::string& name) const {
    if (auto it = tolerances.find(name); it != tolerances.end()) return it->second;
    return default_tolerances().at(name);
  }
};

namespace detail {

struct Measured {
  double residual = 0.0;
  std::string note;
  std::optional<double> tolerance;  // replaces the configured one when set
};

using CheckFn = std::function<Measured()>;

/// Expands "all", rejects names outside `known`, and sorts.
inline std::vector<std::string> resolve_checks(const std::vector<std::string>& requested,
                                               const std::vector<std::string>& known, const std::string& problem) {
  std::vector<std::string> out;
  for (const auto& name : requested) {
    if (name == "all") {
      out.insert(out.end(), known.begin(), known.end());
      continue;
    }
    if (name == "precheck") continue;
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError("check '" + name + "' is not available for " + problem + " solutions");
    out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline CheckResult timed(const std::string& name, double tolerance, const CheckFn& fn) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult c;
  c.name = name;
  c.tolerance = tolerance;
  try {
    const Measured m = fn();
    c.residual = m.residual;
    c.note = m.note;
    if (m.tolerance) c.tolerance = *m.tolerance;
  } catch (const std::exception& e) {
    c.residual = std::numeric_limits<double>::infinity();
    c.note = e.what();
  }
  c.runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

inline Vector seeded_unit(Eigen::Index n, std::uint64_t seed, std::uint64_t tag) {
  return Rng(sub_seed(seed, tag)).unit_vector(n);
}

/// Max over seeded controls of the identity residual scaled by 1 + |x|^2 + |u|^2.
inline double identity_sweep(const GainSource& gain, const LqModel& model, double T, const VerifyOptions& o) {
  const TimeGrid g = TimeGrid::uniform(0.0, T, std::max<std::size_t>(o.control_steps, 1));
  std::vector<double> scaled(o.controls, 0.0);
  parallel_for(o.controls, [&](std::size_t k) {
    const ControlPath u = ControlPath::random(g, model.m(), sub_seed(o.seed, 1000 + k));
    const Vector x = Rng(sub_seed(o.seed, 2000 + k)).gaussian_matrix(model.n(), 1);
    scaled[k] = fundamental_identity_residual(gain, model, u, x, 0.0, T) /
                (1.0 + x.squaredNorm() + std::pow(u.lp_norm(2.0), 2));
  });
  return scaled.empty() ? 0.0 : *std::max_element(scaled.begin(), scaled.end());
}

/// Fixed point vs RK4 closed loop; the tolerance widens to the grid-error
/// allowance when that is larger.
inline Measured closed_loop_gap(const LqModel& model, const GainSource& gain, const TimeGrid& g, const Vector& x,
                                double tolerance, const std::string& where) {
  const auto cmp = compare_fixed_point_to_ode(model, gain, x, g);
  if (!cmp.converged) throw NumericalError("Picard iteration did not converge");
  return {cmp.gap, where + "grid error estimate " + io::format_double(cmp.grid_error), cmp.allowance(tolerance)};
}

inline Measured contraction_ordering(const LqModel& model, const GainSource& gain, const TimeGrid& g, const Vector& x) {
  std::vector<FixedPointTrace> traces;
  std::size_t common = std::numeric_limits<std::size_t>::max();
  for (double r : {1.0, 2.0, 4.0, 8.0}) {
    traces.push_back(closed_loop_fixed_point(model, gain, x, g, r));
    if (!traces.back().converged) return {std::numeric_limits<double>::infinity(), "no convergence at r=" + std::to_string(r)};
    common = std::min(common, traces.back().contraction_factors.size());
  }
  double increase = 0.0;
  std::string note = "median factors:";
  for (std::size_t k = 0; k < traces.size(); ++k) {
    note += " " + io::format_double(traces[k].median_factor(common));
    if (k > 0) increase = std::max(increase, traces[k].median_factor(common) - traces[k - 1].median_factor(common));
  }
  return {increase, note};
}

}  // namespace detail

/// Runs the requested checks on a finite-horizon solution.
inline std::vector<CheckResult> verify_dre(const LqModel& model, DreSolution sol,
                                           const std::vector<std::string>& requested, const VerifyOptions& o) {
  require(model.finite_horizon(), "horizon mismatch: DRE verification needs a finite-horizon model");
  require(sol.n() == model.n(), "verify: solution dimension does not match the model");
  require(std::abs(sol.T() - model.T()) <= 1e-9 * std::max(1.0, model.T()), "verify: solution horizon does not match the model");
  if (sol.dP.size() != sol.P.size() || sol.K.size() != sol.P.size()) attach_derivatives(sol, model);
  const auto names = detail::resolve_checks(requested, dre_check_names(), "DRE");
  std::vector<CheckResult> out;
  if (names.empty()) return out;
  const double T = sol.T();
  const double scale = std::max(1.0, spectral_norm(sol.P.front()));

  std::optional<GainSource> gain;
  std::string precheck_error;
  const bool needs_gain = std::any_of(names.begin(), names.end(), [](const std::string& n) {
    return n == "fundamental_identity" || n == "closed_loop" || n == "contraction" || n == "feedback_value";
  });
  if (needs_gain) {
    out.push_back(detail::timed("precheck", o.tolerance("precheck"), [&]() -> detail::Measured {
      const double res = ire_strong_residual(sol, model, 0.0, T) / scale;
      try {
        gain = verified_gain(sol, model, o.tolerance("precheck"));
      } catch (const NumericalError& e) {
        precheck_error = e.what();
      }
      return {res, "strong integral residual on [0,T]"};
    }));
  }
  auto with_gain = [&](const std::function<detail::Measured(const GainSource&)>& f) -> detail::CheckFn {
    return [&, f]() -> detail::Measured {
      if (!gain) return {std::numeric_limits<double>::infinity(), "skipped: precheck failed (" + precheck_error + ")"};
      return f(*gain);
    };
  };
  std::optional<DreSolution> other;
  auto second_solution = [&]() -> const DreSolution& {
    if (!other) {
      const auto alt = sol.integrator == DreIntegrator::rk4 ? DreIntegrator::implicit_midpoint : DreIntegrator::rk4;
      if (sol.grid.is_uniform()) other = solve_dre(model, sol.grid.steps(), alt);
      else throw PreconditionError("uniqueness checks need a uniform solution grid");
    }
    return *other;
  };

  std::map<std::string, detail::CheckFn> fns;
  fns["ire"] = [&]() -> detail::Measured {
    std::vector<double> r(o.tuples, 0.0);
    parallel_for(o.tuples, [&](std::size_t k) {
      Rng rng(sub_seed(o.seed, 3000 + k));
      double s = rng.uniform(0.0, T), t = rng.uniform(0.0, T);
      if (s > t) std::swap(s, t);
      const Vector x = rng.unit_vector(model.n()), y = rng.unit_vector(model.n());
      r[k] = ire_residual(sol, model, s, t, x, y) / scale;
    });
    return {r.empty() ? 0.0 : *std::max_element(r.begin(), r.end()), std::to_string(o.tuples) + " random (s,t,x,y)"};
  };
  fns["ire_strong"] = [&]() -> detail::Measured {
    double worst = ire_strong_residual(sol, model, 0.0, T);
    for (std::size_t k = 0; k < o.tuples; ++k) {
      Rng rng(sub_seed(o.seed, 4000 + k));
      double s = rng.uniform(0.0, T), t = rng.uniform(0.0, T);
      if (s > t) std::swap(s, t);
      worst = std::max(worst, ire_strong_residual(sol, model, s, t));
    }
    return {worst / scale, ""};
  };
  fns["fundamental_identity"] = with_gain([&](const GainSource& g) -> detail::Measured {
    return {detail::identity_sweep(g, model, T, o), std::to_string(o.controls) + " seeded controls on [0,T]"};
  });
  fns["closed_loop"] = with_gain([&](const GainSource& g) -> detail::Measured {
    return detail::closed_loop_gap(model, g, sol.grid, detail::seeded_unit(model.n(), o.seed, 5000),
                                   o.tolerance("closed_loop"), "");
  });
  fns["contraction"] = with_gain([&](const GainSource& g) -> detail::Measured {
    return detail::contraction_ordering(model, g, sol.grid, detail::seeded_unit(model.n(), o.seed, 5001));
  });
  fns["feedback_value"] = with_gain([&](const GainSource& g) -> detail::Measured {
    const Vector x = detail::seeded_unit(model.n(), o.seed, 5002);
    const auto fb = feedback_synthesis(model, g, x, sol.grid);
    const Vector yT = fb.realized.final_state();
    return {std::abs(fb.J_hat + yT.dot(sol.P.back() * yT) - x.dot(sol.P.front() * x)), "|J_hat - (P(0)x,x)|"};
  });
  fns["self_consistency"] = [&]() -> detail::Measured {
    return {opric_selfconsistency(sol, model, 0.0, o.probes, o.seed).residual / scale, ""};
  };
  fns["evolution"] = [&]() -> detail::Measured {
    return {opric_selfconsistency(sol, model, 0.0, o.probes, o.seed).evolution_defect, ""};
  };
  fns["class_QT"] = [&]() -> detail::Measured {
    const auto r = check_class_QT(sol, model);
    const double v = std::max({r.max_asymmetry / scale, -std::min(0.0, r.min_eigenvalue) / scale, r.terminal_norm / scale,
                               r.ok() ? 0.0 : std::numeric_limits<double>::infinity()});
    return {v, r.ok() ? "" : "class membership failed"};
  };
  std::vector<double> rhos;
  auto window = [&]() -> const std::vector<double>& {
    if (rhos.empty()) {
      const DreSolution& p1 = second_solution();
      for (double frac : {1.0, 0.5, 0.25, 0.125})
        rhos.push_back(uniqueness_contraction_estimate(sol, p1, model, frac * T, o.probes, o.seed));
    }
    return rhos;
  };
  fns["uniqueness"] = [&]() -> detail::Measured {
    const auto& r = window();
    std::string note = "rho(delta) for delta = T, T/2, T/4, T/8:";
    for (double v : r) note += " " + io::format_double(v);
    return {*std::min_element(r.begin(), r.end()), note};
  };
  fns["uniqueness_window"] = [&]() -> detail::Measured {
    const auto& r = window();
    double inc = 0.0;
    for (std::size_t k = 1; k < r.size(); ++k) inc = std::max(inc, r[k] - r[k - 1]);
    return {inc, "largest increase of rho as delta halves"};
  };

  for (const auto& name : names) out.push_back(detail::timed(name, o.tolerance(name), fns.at(name)));
  return out;
}

/// Runs the requested checks on an infinite-horizon solution.
inline std::vector<CheckResult> verify_are(const LqModel& model, const AreSolution& sol,
                                           const std::vector<std::string>& requested, const VerifyOptions& o) {
  require(!model.finite_horizon(), "horizon mismatch: ARE verification needs an infinite-horizon model");
  require(sol.P.rows() == model.n(), "verify: solution dimension does not match the model");
  const auto names = detail::resolve_checks(requested, are_check_names(), "ARE");
  std::vector<CheckResult> out;
  if (names.empty()) return out;
  const double scale = std::max(1.0, spectral_norm(sol.P));

  std::optional<GainSource> gain;
  std::string precheck_error;
  const bool needs_gain = std::any_of(names.begin(), names.end(), [](const std::string& n) {
    return n == "fundamental_identity" || n == "closed_loop" || n == "contraction" || n == "feedback_value";
  });
  if (needs_gain) {
    out.push_back(detail::timed("precheck", o.tolerance("precheck"), [&]() -> detail::Measured {
      const double res = are_residual_norm(model, sol.P) / are_residual_scale(model, sol.P);
      try {
        gain = verified_gain(sol, model);
      } catch (const NumericalError& e) {
        precheck_error = e.what();
      }
      return {res, "relative algebraic residual"};
    }));
  }
  auto with_gain = [&](const std::function<detail::Measured(const GainSource&)>& f) -> detail::CheckFn {
    return [&, f]() -> detail::Measured {
      if (!gain) return {std::numeric_limits<double>::infinity(), "skipped: precheck failed (" + precheck_error + ")"};
      return f(*gain);
    };
  };
  const TimeGrid loop_grid = TimeGrid::uniform(0.0, 10.0, 2000);

  std::map<std::string, detail::CheckFn> fns;
  fns["are_residual"] = [&]() -> detail::Measured {
    return {are_residual_norm(model, sol.P) / are_residual_scale(model, sol.P), ""};
  };
  fns["are_integral"] = [&]() -> detail::Measured {
    std::vector<double> r(o.tuples, 0.0);
    parallel_for(o.tuples, [&](std::size_t k) {
      Rng rng(sub_seed(o.seed, 6000 + k));
      const double s = rng.uniform(0.0, 5.0);
      const Vector x = rng.gaussian_matrix(model.n(), 1), y = rng.gaussian_matrix(model.n(), 1);
      r[k] = are_integral_residual(sol, model, s, s + 5.0, x, y) / (1.0 + x.norm() * y.norm());
    });
    return {r.empty() ? 0.0 : *std::max_element(r.begin(), r.end()), std::to_string(o.tuples) + " random tuples, t - s = 5"};
  };
  fns["generator_identity"] = [&]() -> detail::Measured {
    return {generator_identity_check(sol, model) / std::max(1.0, spectral_norm(model.A)), ""};
  };
  fns["fundamental_identity"] = with_gain([&](const GainSource& g) -> detail::Measured {
    return {detail::identity_sweep(g, model, o.t_trunc, o), std::to_string(o.controls) + " seeded controls on [0,t_trunc]"};
  });
  fns["closed_loop"] = with_gain([&](const GainSource& g) -> detail::Measured {
    return detail::closed_loop_gap(model, g, loop_grid, detail::seeded_unit(model.n(), o.seed, 5000),
                                   o.tolerance("closed_loop"), "window [0,10], ");
  });
  fns["contraction"] = with_gain([&](const GainSource& g) -> detail::Measured {
    return detail::contraction_ordering(model, g, loop_grid, detail::seeded_unit(model.n(), o.seed, 5001));
  });
  fns["feedback_value"] = with_gain([&](const GainSource& g) -> detail::Measured {
    const Vector x = detail::seeded_unit(model.n(), o.seed, 5002);
    const double T = decay_horizon(model.A - model.BBt() * sol.P, 1e-8);
    const auto fb = feedback_synthesis(model, g, x, TimeGrid::uniform(0.0, T, 20000));
    return {std::abs(fb.J_hat - x.dot(sol.P * x)), "|J_hat - (Px,x)|"};
  });
  fns["value_sandwich"] = [&]() -> detail::Measured {
    const Vector x = detail::seeded_unit(model.n(), o.seed, 5003);
    const Matrix acl = model.A - model.BBt() * sol.P;
    if (!(spectral_abscissa(acl) < 0.0)) return {std::numeric_limits<double>::infinity(), "candidate closed loop unstable"};
    const double T = std::max(decay_horizon(model.A), decay_horizon(acl));
    const auto r = value_sandwich_test(sol.P, model, x, T, 4000);
    const double gap = std::max({0.0, -r.upper_gap - r.tail_bound, r.lower_gap - r.tail_bound});
    return {gap, "upper_gap " + io::format_double(r.upper_gap) + ", lower_gap " + io::format_double(r.lower_gap)};
  };
  fns["class_Q"] = [&]() -> detail::Measured {
    const auto r = check_class_Q(sol.P, model);
    const double asym = (sol.P - sol.P.transpose()).cwiseAbs().maxCoeff() / scale;
    const double neg = -std::min(0.0, min_eigenvalue_symmetric(symmetrize(sol.P))) / scale;
    return {std::max({asym, neg, r.ok() ? 0.0 : std::numeric_limits<double>::infinity()}), ""};
  };

  for (const auto& name : names) out.push_back(detail::timed(name, o.tolerance(name), fns.at(name)));
  return out;
}

}  // namespace riccati_lab
