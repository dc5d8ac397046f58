#pragma once

#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "riccati_lab/config.hpp"
#include "riccati_lab/parallel.hpp"
#include "riccati_lab/semiflow.hpp"

namespace riccati_lab {

inline constexpr const char* kToolVersion = "0.1.0";

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  double runtime = 0.0;  // seconds
  std::string note;
};

namespace detail {

/// JSON has no inf/nan; those become null.
inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(number_or_null(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

struct VerificationReport {
  std::string model_id;
  std::vector<CheckResult> checks;
  nlohmann::json environment;
  nlohmann::json config;
  nlohmann::json solution;  // optional summary written by solve

  /// Each name may appear once; pass is recomputed from residual and tolerance.
  void add(CheckResult c) {
    for (const auto& existing : checks)
      if (existing.name == c.name) throw PreconditionError("duplicate check in report: " + c.name);
    c.pass = std::isfinite(c.residual) && c.residual <= c.tolerance;
    checks.push_back(std::move(c));
  }

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["model_id"] = model_id;
    nlohmann::json cs = nlohmann::json::object();  // keys come out sorted
    for (const auto& c : checks) {
      nlohmann::json e{{"residual", detail::number_or_null(c.residual)},
                       {"tolerance", c.tolerance},
                       {"pass", c.pass},
                       {"runtime", c.runtime}};
      if (!c.note.empty()) e["note"] = c.note;
      cs[c.name] = e;
    }
    j["checks"] = cs;
    j["pass"] = all_pass();
    j["environment"] = environment;
    j["config"] = config;
    if (!solution.is_null()) j["solution"] = solution;
    return j;
  }
};

inline nlohmann::json environment_stamp() {
  nlohmann::json e;
  e["tool"] = "riccati-lab";
  e["version"] = kToolVersion;
#if defined(__clang__)
  e["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  e["compiler"] = std::string("gcc ") + __VERSION__;
#else
  e["compiler"] = "unknown";
#endif
  e["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  e["cxx_standard"] = static_cast<long>(__cplusplus);
  e["threads"] = worker_count();
  return e;
}

inline nlohmann::json config_echo(const Config& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [section, keys] : c.table())
    for (const auto& [key, value] : keys) j[section][key] = value;
  return j;
}

/// Assumption report body. gamma_hat and N_hat carry the note text when no
/// singular component was found.
inline nlohmann::json assumption_report_json(const AssumptionReport& r) {
  nlohmann::json j;
  j["model_id"] = r.model_id;
  if (std::isfinite(r.gamma_hat)) {
    j["gamma_hat"] = r.gamma_hat;
    j["N_hat"] = r.N_hat;
  } else {
    j["gamma_hat"] = r.note.empty() ? "no singular component" : r.note;
    j["N_hat"] = nlohmann::json();
  }
  j["admissibility_C"] = detail::number_or_null(r.admissibility_C);
  j["weighted_Lq"] = detail::number_or_null(r.weighted_Lq);
  nlohmann::json fits = nlohmann::json::object();
  for (const auto& [name, value] : r.fit_residuals) fits[name] = detail::number_or_null(value);
  j["fit_residuals"] = fits;
  j["probes"] = r.probes;
  j["seed"] = r.seed;
  return j;
}

}  // namespace riccati_lab
