#pragma once

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "riccati_lab/are.hpp"
#include "riccati_lab/config.hpp"
#include "riccati_lab/dre.hpp"
#include "riccati_lab/io/are_csv.hpp"
#include "riccati_lab/io/dre_csv.hpp"
#include "riccati_lab/io/model_file.hpp"
#include "riccati_lab/io/trajectory_csv.hpp"
#include "riccati_lab/models.hpp"
#include "riccati_lab/report.hpp"
#include "riccati_lab/semiflow.hpp"
#include "riccati_lab/synthesis.hpp"
#include "riccati_lab/verify.hpp"

namespace riccati_lab::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kPass = 0, kFail = 1, kUsage = 2 };

inline ConfigSchema config_schema() {
  ConfigSchema s{
      {"model",
       {"source", "path", "kind", "n", "beta", "n_h", "n_p", "kappa", "damping", "controls", "m", "p", "margin", "a",
        "b", "r", "seed", "horizon"}},
      {"grid", {"steps", "t_trunc", "control_steps"}},
      {"solve", {"problem", "integrator", "method", "trajectory"}},
      {"verify", {"checks", "solution", "tuples", "controls", "probes"}},
      {"assumptions", {"probes", "t_min", "t_max", "nodes", "admissibility_T", "Lq_horizon", "plot_csv", "duality_steps"}},
      {"run", {"seed"}},
  };
  for (const auto& [name, value] : default_tolerances()) s["tolerances"].insert(name);
  return s;
}

// Generator parameters accepted per kind; anything else in [model] is rejected.
inline const std::map<std::string, std::set<std::string>>& generator_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"heat", {"n", "beta"}},
      {"composite", {"n_h", "n_p", "kappa", "damping", "controls", "beta", "seed"}},
      {"random", {"n", "m", "p", "margin", "seed"}},
      {"scalar", {"a", "b", "r"}},
  };
  return keys;
}

inline std::optional<double> parse_horizon(const Config& c) {
  const std::string h = c.get_string("model", "horizon", "1");
  if (h == "inf" || h == "infinite") return std::nullopt;
  const double T = c.get_double("model", "horizon", 1.0);
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("model.horizon must be positive or 'inf'");
  return T;
}

inline int checked_int(const Config& c, const std::string& key, long fallback) {
  const long v = c.get_int("model", key, fallback);
  if (v < 0 || v > 100000) throw ConfigError("model." + key + " out of range");
  return static_cast<int>(v);
}

inline LqModel build_model(const Config& c) {
  const bool has_path = c.has("model", "path");
  const std::string source = c.get_string("model", "source", has_path ? "file" : "generator");
  if (source == "file") {
    if (!has_path) throw ConfigError("model.source = file needs model.path");
    for (const auto& [key, value] : c.table().at("model"))
      if (key != "source" && key != "path" && key != "horizon")
        throw ConfigError("model." + key + " does not apply to a model file");
    const fs::path path = c.require_string("model", "path");
    if (!fs::exists(path)) throw ConfigError("model file not found: " + path.string());
    LqModel m = io::load_model(path);
    if (c.has("model", "horizon")) m = m.with_horizon(parse_horizon(c));
    return m;
  }
  if (source != "generator") throw ConfigError("model.source must be 'generator' or 'file'");
  if (has_path) throw ConfigError("model.path needs model.source = file");
  const std::string kind = c.require_string("model", "kind");
  const auto it = generator_keys().find(kind);
  if (it == generator_keys().end()) throw ConfigError("model.kind must be heat, composite, random or scalar");
  for (const auto& [key, value] : c.table().at("model"))
    if (key != "source" && key != "kind" && key != "horizon" && !it->second.count(key))
      throw ConfigError("model." + key + " does not apply to kind " + kind);
  const auto horizon = parse_horizon(c);
  const std::uint64_t seed = c.get_seed("model", "seed", 1);
  if (kind == "heat") return heat_boundary_surrogate(checked_int(c, "n", 16), c.get_double("model", "beta", 0.5), horizon);
  if (kind == "composite")
    return composite_surrogate(checked_int(c, "n_h", 8), checked_int(c, "n_p", 8), c.get_double("model", "kappa", 0.5),
                               c.get_double("model", "damping", 0.1), seed, horizon, checked_int(c, "controls", 1),
                               c.get_double("model", "beta", 0.25));
  if (kind == "random")
    return random_stable(checked_int(c, "n", 4), checked_int(c, "m", 1), checked_int(c, "p", 1), seed,
                         c.get_double("model", "margin", 0.5), horizon);
  return scalar_model(c.get_double("model", "a", -1.0), c.get_double("model", "b", 1.0), c.get_double("model", "r", 1.0),
                      horizon);
}

inline VerifyOptions verify_options(const Config& c) {
  VerifyOptions o;
  o.tuples = c.get_count("verify", "tuples", o.tuples);
  o.controls = c.get_count("verify", "controls", o.controls);
  o.probes = c.get_count("verify", "probes", o.probes);
  o.control_steps = c.get_count("grid", "control_steps", o.control_steps);
  o.t_trunc = c.get_double("grid", "t_trunc", o.t_trunc);
  o.seed = c.get_seed("run", "seed", o.seed);
  if (o.probes == 0) throw ConfigError("verify.probes must be >= 1");
  if (o.control_steps == 0) throw ConfigError("grid.control_steps must be >= 1");
  if (!(o.t_trunc > 0.0)) throw ConfigError("grid.t_trunc must be positive");
  if (c.table().count("tolerances"))
    for (const auto& [name, value] : c.table().at("tolerances")) {
      const double v = c.get_double("tolerances", name, 0.0);
      if (!(v > 0.0)) throw ConfigError("tolerances." + name + " must be positive");
      o.tolerances[name] = v;
    }
  return o;
}

struct Context {
  Config config;
  fs::path out_dir;
  std::ostream& out;
  std::ostream& err;
};

/// Refuses to overwrite an input file.
inline void write_output(const Context& ctx, const fs::path& path, const std::string& content,
                         const std::vector<fs::path>& inputs) {
  for (const auto& in : inputs)
    if (fs::exists(in) && fs::exists(path) && fs::equivalent(in, path))
      throw PreconditionError("refusing to overwrite input file " + in.string());
  fs::create_directories(ctx.out_dir);
  io::write_file_atomic(path, content);
}

inline std::vector<fs::path> input_files(const Config& c) {
  std::vector<fs::path> v;
  if (auto p = c.find("model", "path")) v.emplace_back(*p);
  if (auto p = c.find("verify", "solution")) v.emplace_back(*p);
  return v;
}

inline VerificationReport new_report(const Context& ctx, const std::string& model_id) {
  VerificationReport r;
  r.model_id = model_id;
  r.environment = environment_stamp();
  r.config = config_echo(ctx.config);
  return r;
}

inline void print_checks(const Context& ctx, const VerificationReport& r) {
  for (const auto& c : r.checks) {
    std::ostringstream line;
    line << std::setprecision(4) << (c.pass ? "PASS " : "FAIL ") << c.name << " residual=" << c.residual
         << " tolerance=" << c.tolerance << (c.note.empty() ? "" : "  (" + c.note + ")") << "\n";
    ctx.out << line.str();
  }
}

inline int cmd_gen(const Context& ctx) {
  const LqModel m = build_model(ctx.config);
  write_output(ctx, ctx.out_dir / "model.txt", io::write_model(m), input_files(ctx.config));
  ctx.out << m.model_id << "\n";
  return kPass;
}

inline int cmd_solve(const Context& ctx, std::string problem) {
  const Config& c = ctx.config;
  const LqModel model = build_model(c);
  if (problem.empty()) problem = c.get_string("solve", "problem", "auto");
  if (problem == "auto") problem = model.finite_horizon() ? "dre" : "are";
  if (problem != "dre" && problem != "are") throw ConfigError("solve.problem must be dre, are or auto");
  if (problem == "dre" && !model.finite_horizon())
    throw PreconditionError("horizon mismatch: solve dre needs a finite horizon, model has T = inf");
  if (problem == "are" && model.finite_horizon())
    throw PreconditionError("horizon mismatch: solve are needs an infinite horizon, model has T = " +
                            io::format_double(model.T()));
  const VerifyOptions vo = verify_options(c);
  const auto inputs = input_files(c);
  VerificationReport report = new_report(ctx, model.model_id);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  const bool trajectory = c.get_bool("solve", "trajectory", false);
  const Vector x0 = detail::seeded_unit(model.n(), vo.seed, 7000);
  std::optional<GainSource> gain;

  if (problem == "dre") {
    const std::size_t steps = c.get_count("grid", "steps", 2000);
    if (steps == 0) throw ConfigError("grid.steps must be >= 1");
    const DreIntegrator integ = parse_integrator(c.get_string("solve", "integrator", "rk4"));
    DreSolution sol = solve_dre(model, steps, integ);
    attach_derivatives(sol, model);
    const double scale = std::max(1.0, spectral_norm(sol.P.front()));
    report.add({"ire_strong", ire_strong_residual(sol, model, 0.0, sol.T()) / scale, vo.tolerance("ire_strong"), false,
                elapsed(), "solver residual on [0,T]"});
    report.solution = {{"problem", "dre"},
                       {"integrator", to_string(integ)},
                       {"steps", steps},
                       {"T", sol.T()},
                       {"P0", detail::matrix_json(sol.P.front())},
                       {"P0_norm", spectral_norm(sol.P.front())}};
    write_output(ctx, ctx.out_dir / "solution.csv", io::write_dre_csv(sol), inputs);
    if (trajectory) gain = GainSource::from(sol);
    if (trajectory) {
      const auto fb = feedback_synthesis(model, *gain, x0, sol.grid);
      report.solution["J_hat"] = fb.J_hat;
      write_output(ctx, ctx.out_dir / "trajectory.csv", io::write_trajectory_csv(fb.realized, model.model_id), inputs);
    }
    ctx.out << "P(0) norm " << io::format_double(spectral_norm(sol.P.front())) << "\n";
  } else {
    const std::string method = c.get_string("solve", "method", "newton");
    AreSolution sol;
    if (method == "newton") sol = solve_are_newton(model);
    else if (method == "spectral") sol = solve_are_spectral(model);
    else throw ConfigError("solve.method must be newton or spectral");
    report.add({"are_residual", are_residual_norm(model, sol.P) / are_residual_scale(model, sol.P),
                vo.tolerance("are_residual"), false, elapsed(), sol.method});
    report.solution = {{"problem", "are"},
                       {"method", sol.method},
                       {"iterations", sol.iterations},
                       {"P", detail::matrix_json(sol.P)},
                       {"closed_loop_abscissa", sol.closed_loop_abscissa()}};
    write_output(ctx, ctx.out_dir / "solution.csv", io::write_are_csv(sol, model.model_id), inputs);
    if (trajectory) {
      gain = GainSource::from(sol);
      const double T = decay_horizon(sol.A_P, 1e-8);
      const auto fb = feedback_synthesis(model, *gain, x0, TimeGrid::uniform(0.0, T, c.get_count("grid", "steps", 2000)));
      report.solution["J_hat"] = fb.J_hat;
      write_output(ctx, ctx.out_dir / "trajectory.csv", io::write_trajectory_csv(fb.realized, model.model_id), inputs);
    }
    if (sol.P.size() == 1) ctx.out << "P = " << io::format_double(sol.P(0, 0)) << "\n";
    else ctx.out << "P norm " << io::format_double(spectral_norm(sol.P)) << "\n";
  }
  write_output(ctx, ctx.out_dir / "solve_report.json", report.to_json().dump(2) + "\n", inputs);
  print_checks(ctx, report);
  return report.all_pass() ? kPass : kFail;
}

inline int cmd_verify(const Context& ctx) {
  const Config& c = ctx.config;
  const LqModel model = build_model(c);
  const fs::path sol_path = c.get_string("verify", "solution", (ctx.out_dir / "solution.csv").string());
  if (!fs::exists(sol_path)) throw ConfigError("solution file not found: " + sol_path.string());
  const std::string text = io::read_file(sol_path);
  const VerifyOptions vo = verify_options(c);
  const auto checks = c.get_list("verify", "checks", {"all"});
  VerificationReport report = new_report(ctx, model.model_id);
  const bool is_dre = text.find("# integrator") != std::string::npos;
  std::vector<CheckResult> results;
  if (is_dre) {
    DreSolution sol = io::read_dre_csv(text);
    if (sol.model_id != model.model_id)
      throw PreconditionError("solution belongs to model " + sol.model_id + ", config describes " + model.model_id);
    results = verify_dre(model, std::move(sol), checks, vo);
  } else {
    const auto rec = io::read_are_csv(text);
    if (rec.model_id != model.model_id)
      throw PreconditionError("solution belongs to model " + rec.model_id + ", config describes " + model.model_id);
    if (rec.P.rows() != model.n()) throw PreconditionError("solution dimension does not match the model");
    results = verify_are(model, make_are_solution(model, rec.P, rec.method, 0), checks, vo);
  }
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (auto& r : results) report.add(std::move(r));
  write_output(ctx, ctx.out_dir / "verify_report.json", report.to_json().dump(2) + "\n", input_files(c));
  print_checks(ctx, report);
  ctx.out << (report.all_pass() ? "all checks pass" : "verification failed") << " (" << report.checks.size()
          << " checks)\n";
  return report.all_pass() ? kPass : kFail;
}

inline int cmd_assumptions(const Context& ctx) {
  const Config& c = ctx.config;
  const LqModel model = build_model(c);
  AssumptionReportOptions o;
  o.probes = c.get_count("assumptions", "probes", o.probes);
  o.t_min = c.get_double("assumptions", "t_min", o.t_min);
  o.t_max = c.get_double("assumptions", "t_max", o.t_max);
  o.nodes = c.get_count("assumptions", "nodes", o.nodes);
  o.admissibility_T = c.get_double("assumptions", "admissibility_T", o.admissibility_T);
  o.Lq_horizon = c.get_double("assumptions", "Lq_horizon", o.Lq_horizon);
  o.seed = c.get_seed("run", "seed", o.seed);
  const AssumptionReport r = measure_assumptions(model, o);
  nlohmann::json j = assumption_report_json(r);

  // Duality residuals on [0,1] with seeded paths.
  const std::size_t dsteps = c.get_count("assumptions", "duality_steps", 1000);
  if (dsteps < 2 || dsteps % 2) throw ConfigError("assumptions.duality_steps must be even and >= 2");
  const TimeGrid g = TimeGrid::uniform(0.0, 1.0, dsteps);
  const double delta = 0.5 * std::min(model.assumption.omega, model.assumption.eta);
  Rng rng(sub_seed(o.seed, 8000));
  const Trajectory path{g, rng.gaussian_matrix(model.n(), static_cast<Eigen::Index>(g.size())), std::nullopt,
                        std::nullopt, {}};
  const Vector z = rng.unit_vector(model.n());
  const Vector w = model.m() > 0 ? Vector(rng.unit_vector(model.m())) : Vector(0);
  const auto d = adjoint_duality_residual(model, delta, ControlPath::random(g, model.m(), sub_seed(o.seed, 8001)), path,
                                          z, w, 1.0);
  j["duality_residuals"] = {{"S", d.res_S}, {"T", d.res_T}, {"delta", delta}, {"grid_step", g.step()}};
  j["config"] = config_echo(c);

  const auto inputs = input_files(c);
  write_output(ctx, ctx.out_dir / "assumptions.json", j.dump(2) + "\n", inputs);
  if (c.get_bool("assumptions", "plot_csv", false)) {
    const AdjointKernel kernel(model);
    std::ostringstream os;
    os << "# model_id = " << model.model_id << "\nt,F_norm,fit\n";
    for (std::size_t i = 0; i < o.nodes; ++i) {
      const double t =
          o.t_min * std::pow(o.t_max / o.t_min, static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(o.nodes - 1, 1)));
      os << io::format_double(t) << "," << io::format_double(spectral_norm(kernel.split(t).first)) << ",";
      if (std::isfinite(r.gamma_hat)) os << io::format_double(r.N_hat * std::pow(t, -r.gamma_hat));
      os << "\n";
    }
    write_output(ctx, ctx.out_dir / "kernel_norm.csv", os.str(), inputs);
  }
  ctx.out << "gamma_hat " << (std::isfinite(r.gamma_hat) ? io::format_double(r.gamma_hat) : r.note) << "\n";
  return kPass;
}

/// Entry point; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"riccati-lab: LQ Riccati solvers and verification suites", "riccati-lab"};
  std::string command, problem, config_path, out_dir = ".";
  std::vector<std::string> overrides;
  app.add_option("command", command, "gen | solve | verify | assumptions")
      ->required()
      ->check(CLI::IsMember({"gen", "solve", "verify", "assumptions"}));
  app.add_option("problem", problem, "solve only: dre | are")->check(CLI::IsMember({"dre", "are", "auto"}));
  app.add_option("--config", config_path, "config file")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", overrides, "override, section.key=value")->allow_extra_args(false);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kUsage;
  }
  try {
    if (!problem.empty() && command != "solve") throw ConfigError("only solve takes a problem argument");
    if (!fs::exists(config_path)) throw ConfigError("config file not found: " + config_path);
    Config config = Config::parse(io::read_file(config_path), config_path);
    for (const auto& s : overrides) config.set(s);
    config.validate(config_schema());
    Context ctx{std::move(config), out_dir, out, err};
    if (command == "gen") return cmd_gen(ctx);
    if (command == "solve") return cmd_solve(ctx, problem);
    if (command == "verify") return cmd_verify(ctx);
    return cmd_assumptions(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const io::FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kFail;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFail;
  }
}

}  // namespace riccati_lab::cli
