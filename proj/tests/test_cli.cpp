#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "riccati_lab/cli.hpp"

using namespace riccati_lab;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("riccati_lab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  CliRun run(std::vector<std::string> args) const {
    std::vector<const char*> argv{"riccati-lab"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }

  CliRun run_in(const fs::path& cfg, const std::string& cmd, const std::string& out, std::vector<std::string> extra = {}) const {
    std::vector<std::string> args{cmd, "--config", cfg.string(), "--out", (dir_ / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }

  nlohmann::json read_json(const fs::path& p) const { return nlohmann::json::parse(io::read_file(p)); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenWritesModelAndPrintsId) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = heat\nn = 16\nbeta = 0.5\n");
  const CliRun r = run_in(cfg, "gen", "o");
  ASSERT_EQ(r.code, 0) << r.err;
  const LqModel m = io::load_model(dir_ / "o" / "model.txt");
  EXPECT_EQ(m.n(), 16);
  EXPECT_EQ(r.out, m.model_id + "\n");
}

TEST_F(CliTest, GenIsByteIdenticalAcrossRuns) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = random\nn = 6\nm = 2\np = 2\nseed = 42\n");
  ASSERT_EQ(run_in(cfg, "gen", "a").code, 0);
  ASSERT_EQ(run_in(cfg, "gen", "b").code, 0);
  EXPECT_EQ(io::read_file(dir_ / "a" / "model.txt"), io::read_file(dir_ / "b" / "model.txt"));
}

TEST_F(CliTest, GenCompositeWithoutCouplingRecordsBlockSpectrum) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = composite\nkappa = 0\n");
  ASSERT_EQ(run_in(cfg, "gen", "o").code, 0);
  EXPECT_EQ(io::load_model(dir_ / "o" / "model.txt").metadata.at("spectrum_block_diagonal"), "true");
}

TEST_F(CliTest, SetOverridesConfigValues) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = heat\nn = 16\n");
  ASSERT_EQ(run_in(cfg, "gen", "o", {"--set", "model.n=12"}).code, 0);
  EXPECT_EQ(io::load_model(dir_ / "o" / "model.txt").n(), 12);
}

TEST_F(CliTest, UsageAndConfigErrorsExitTwo) {
  const auto good = write_config("good.cfg", "[model]\nkind = heat\n");
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate", "--config", good.string()}).code, 2);
  EXPECT_EQ(run({"gen"}).code, 2);
  EXPECT_EQ(run({"gen", "--config", (dir_ / "missing.cfg").string()}).code, 2);
  EXPECT_EQ(run_in(good, "gen", "o", {"--set", "model.nn=3"}).code, 2);
  EXPECT_EQ(run_in(good, "gen", "o", {"--set", "novel.key=3"}).code, 2);
  EXPECT_EQ(run_in(good, "gen", "o", {"--set", "model.kappa=0.3"}).code, 2);
  EXPECT_EQ(run_in(good, "gen", "o", {"--set", "model.n=abc"}).code, 2);
  EXPECT_EQ(run_in(good, "gen", "o", {"--set", "model.beta=1.5"}).code, 2);
  EXPECT_EQ(run_in(good, "gen", "o", {"--set", "model.kind=spline"}).code, 2);
  EXPECT_EQ(run_in(write_config("dup.cfg", "[model]\nkind = heat\nkind = heat\n"), "gen", "o").code, 2);
  EXPECT_EQ(run_in(write_config("orphan.cfg", "kind = heat\n"), "gen", "o").code, 2);
}

TEST_F(CliTest, UnknownKeyMessageNamesTheKey) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = heat\n[grid]\nstepz = 10\n");
  const CliRun r = run_in(cfg, "gen", "o");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("grid.stepz"), std::string::npos) << r.err;
}

TEST_F(CliTest, NonPositiveToleranceIsRejected) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = scalar\nhorizon = inf\n[tolerances]\nare_residual = 0\n");
  EXPECT_EQ(run_in(cfg, "solve", "o").code, 2);
}

TEST_F(CliTest, SolveScalarAreReportsClosedForm) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = scalar\nhorizon = inf\n");
  const CliRun r = run_in(cfg, "solve", "o", {"--set", "solve.problem=are"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0.41421356"), std::string::npos) << r.out;
  const auto j = read_json(dir_ / "o" / "solve_report.json");
  EXPECT_NEAR(j["solution"]["P"][0][0].get<double>(), std::sqrt(2.0) - 1.0, 1e-12);
  EXPECT_TRUE(j["checks"]["are_residual"]["pass"].get<bool>());
  const auto rec = io::read_are_csv(io::read_file(dir_ / "o" / "solution.csv"));
  EXPECT_NEAR(rec.P(0, 0), std::sqrt(2.0) - 1.0, 1e-12);
}

TEST_F(CliTest, SolveBothMethodsAgree) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = random\nn = 8\nm = 2\np = 3\nhorizon = inf\n");
  ASSERT_EQ(run_in(cfg, "solve", "n", {"--set", "solve.method=newton"}).code, 0);
  ASSERT_EQ(run_in(cfg, "solve", "s", {"--set", "solve.method=spectral"}).code, 0);
  const auto a = io::read_are_csv(io::read_file(dir_ / "n" / "solution.csv"));
  const auto b = io::read_are_csv(io::read_file(dir_ / "s" / "solution.csv"));
  EXPECT_LE((a.P - b.P).norm() / a.P.norm(), 1e-9);
  EXPECT_EQ(b.method, "hamiltonian-schur");
}

TEST_F(CliTest, SolveProblemMustMatchHorizon) {
  const auto fin = write_config("f.cfg", "[model]\nkind = scalar\nhorizon = 1\n");
  const CliRun r = run({"solve", "are", "--config", fin.string(), "--out", (dir_ / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("horizon mismatch"), std::string::npos) << r.err;
  const auto inf = write_config("i.cfg", "[model]\nkind = scalar\nhorizon = inf\n[solve]\nproblem = dre\n");
  const CliRun r2 = run_in(inf, "solve", "o");
  EXPECT_EQ(r2.code, 2);
  EXPECT_NE(r2.err.find("horizon mismatch"), std::string::npos) << r2.err;
}

TEST_F(CliTest, SolveDreReportsFourthOrderConvergence) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = scalar\nhorizon = 1\n");
  std::vector<double> p0;
  for (int steps : {10, 20, 40, 2000, 4000}) {
    const std::string out = "s" + std::to_string(steps);
    ASSERT_EQ(run_in(cfg, "solve", out, {"--set", "grid.steps=" + std::to_string(steps), "--set", "tolerances.ire_strong=1"}).code, 0);
    p0.push_back(read_json(dir_ / out / "solve_report.json")["solution"]["P0"][0][0].get<double>());
  }
  const double ratio = (p0[0] - p0[1]) / (p0[1] - p0[2]);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
  EXPECT_LE(std::abs(p0[3] - p0[4]), 1e-12);
}

TEST_F(CliTest, SolveWritesTrajectoryWhenAsked) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = scalar\n[solve]\ntrajectory = true\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  const std::string csv = io::read_file(dir_ / "o" / "trajectory.csv");
  EXPECT_NE(csv.find("t,y_0,u_0,running_cost"), std::string::npos);
  const auto j = read_json(dir_ / "o" / "solve_report.json");
  const double p0 = j["solution"]["P0"][0][0].get<double>();
  // unit initial state in one dimension: J_hat = P(0)
  EXPECT_NEAR(j["solution"]["J_hat"].get<double>(), p0, 1e-6);
}

TEST_F(CliTest, VerifyReferenceSolutionsPass) {
  for (const std::string model : {"kind = scalar\nhorizon = inf", "kind = random\nn = 4\nhorizon = inf",
                                  "kind = scalar\nhorizon = 1", "kind = random\nn = 4\nm = 2\np = 2\nhorizon = 1"}) {
    const auto cfg = write_config("c.cfg", "[model]\n" + model + "\n");
    ASSERT_EQ(run_in(cfg, "solve", "o").code, 0) << model;
    const CliRun r = run_in(cfg, "verify", "o");
    EXPECT_EQ(r.code, 0) << model << "\n" << r.out << r.err;
    const auto j = read_json(dir_ / "o" / "verify_report.json");
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_TRUE(j["checks"].contains("precheck"));
    for (const auto& [name, c] : j["checks"].items())
      EXPECT_EQ(c["pass"].get<bool>(), c["residual"].get<double>() <= c["tolerance"].get<double>()) << name;
  }
}

TEST_F(CliTest, VerifyEmptyCheckListPasses) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = scalar\nhorizon = inf\n[verify]\nchecks =\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  const CliRun r = run_in(cfg, "verify", "o");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(read_json(dir_ / "o" / "verify_report.json")["checks"].empty());
}

TEST_F(CliTest, VerifyPerturbedAreSolutionFailsSandwich) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = random\nn = 4\nhorizon = inf\n[verify]\nchecks = value_sandwich\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  ASSERT_EQ(run_in(cfg, "verify", "o").code, 0);
  const LqModel m = cli::build_model(Config::parse(io::read_file(cfg)));
  auto rec = io::read_are_csv(io::read_file(dir_ / "o" / "solution.csv"));
  const auto bad = make_are_solution(m, rec.P + 0.1 * Matrix::Identity(4, 4), rec.method, 0);
  io::write_file_atomic(dir_ / "o" / "solution.csv", io::write_are_csv(bad, m.model_id));
  const CliRun r = run_in(cfg, "verify", "o");
  EXPECT_EQ(r.code, 1) << r.out;
  const auto j = read_json(dir_ / "o" / "verify_report.json");
  EXPECT_FALSE(j["checks"]["value_sandwich"]["pass"].get<bool>());
  EXPECT_GE(j["checks"]["value_sandwich"]["residual"].get<double>(), 1e-4);
}

TEST_F(CliTest, VerifyFailedPrecheckIsReportedSeparately) {
  const auto cfg =
      write_config("c.cfg", "[model]\nkind = scalar\nhorizon = inf\n[verify]\nchecks = fundamental_identity\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  const LqModel m = cli::build_model(Config::parse(io::read_file(cfg)));
  const auto bad = make_are_solution(m, Matrix::Constant(1, 1, 0.5), "newton-kleinman", 0);
  io::write_file_atomic(dir_ / "o" / "solution.csv", io::write_are_csv(bad, m.model_id));
  EXPECT_EQ(run_in(cfg, "verify", "o").code, 1);
  const auto j = read_json(dir_ / "o" / "verify_report.json");
  EXPECT_FALSE(j["checks"]["precheck"]["pass"].get<bool>());
  EXPECT_FALSE(j["checks"]["fundamental_identity"]["pass"].get<bool>());
  EXPECT_NE(j["checks"]["fundamental_identity"]["note"].get<std::string>().find("precheck"), std::string::npos);
}

TEST_F(CliTest, VerifyRejectsInapplicableOrUnknownChecks) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = scalar\nhorizon = inf\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  EXPECT_EQ(run_in(cfg, "verify", "o", {"--set", "verify.checks=ire"}).code, 2);
  EXPECT_EQ(run_in(cfg, "verify", "o", {"--set", "verify.checks=magic"}).code, 2);
}

TEST_F(CliTest, VerifyRejectsForeignSolutionAndMissingFile) {
  const auto a = write_config("a.cfg", "[model]\nkind = scalar\nhorizon = inf\n");
  const auto b = write_config("b.cfg", "[model]\nkind = scalar\na = -2\nhorizon = inf\n");
  ASSERT_EQ(run_in(a, "solve", "o").code, 0);
  EXPECT_EQ(run_in(b, "verify", "o").code, 2);
  EXPECT_EQ(run_in(a, "verify", "empty").code, 2);
}

TEST_F(CliTest, VerifyReportIsReproducibleFromEchoedConfig) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = random\nn = 3\nhorizon = 1\n[grid]\nsteps = 400\n"
                                         "[verify]\nchecks = ire, fundamental_identity\ncontrols = 5\n[run]\nseed = 9\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  ASSERT_EQ(run_in(cfg, "verify", "o").code, 0);
  auto first = read_json(dir_ / "o" / "verify_report.json");
  std::string echoed;
  for (const auto& [section, keys] : first["config"].items()) {
    echoed += "[" + section + "]\n";
    for (const auto& [k, v] : keys.items()) echoed += k + " = " + v.get<std::string>() + "\n";
  }
  ASSERT_EQ(run_in(write_config("echo.cfg", echoed), "verify", "o").code, 0);
  auto second = read_json(dir_ / "o" / "verify_report.json");
  for (const auto& [name, c] : first["checks"].items())
    EXPECT_NEAR(c["residual"].get<double>(), second["checks"][name]["residual"].get<double>(), 1e-12) << name;
}

TEST_F(CliTest, ThreadCapDoesNotChangeResiduals) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = random\nn = 3\nhorizon = 1\n[grid]\nsteps = 400\n"
                                         "[verify]\nchecks = ire, fundamental_identity\ncontrols = 6\n");
  ASSERT_EQ(run_in(cfg, "solve", "o").code, 0);
  const std::string sol = "verify.solution=" + (dir_ / "o" / "solution.csv").string();
  ::setenv("RICCATI_LAB_THREADS", "1", 1);
  ASSERT_EQ(run_in(cfg, "verify", "one", {"--set", sol}).code, 0);
  ::setenv("RICCATI_LAB_THREADS", "4", 1);
  ASSERT_EQ(run_in(cfg, "verify", "four", {"--set", sol}).code, 0);
  const auto a = read_json(dir_ / "one" / "verify_report.json"), b = read_json(dir_ / "four" / "verify_report.json");
  for (const auto& [name, c] : a["checks"].items())
    EXPECT_EQ(c["residual"].get<double>(), b["checks"][name]["residual"].get<double>()) << name;
  ::unsetenv("RICCATI_LAB_THREADS");
}

TEST_F(CliTest, OutputsNeverOverwriteInputs) {
  const auto gen = write_config("g.cfg", "[model]\nkind = heat\nn = 4\n");
  ASSERT_EQ(run_in(gen, "gen", "o").code, 0);
  const std::string before = io::read_file(dir_ / "o" / "model.txt");
  const auto cfg = write_config("c.cfg", "[model]\npath = " + (dir_ / "o" / "model.txt").string() + "\n");
  EXPECT_EQ(run_in(cfg, "gen", "o").code, 2);
  EXPECT_EQ(io::read_file(dir_ / "o" / "model.txt"), before);
}

TEST_F(CliTest, ModelFileSourceWithHorizonOverride) {
  const auto gen = write_config("g.cfg", "[model]\nkind = scalar\n");
  ASSERT_EQ(run_in(gen, "gen", "m").code, 0);
  const auto cfg = write_config("c.cfg", "[model]\nsource = file\npath = " + (dir_ / "m" / "model.txt").string() +
                                             "\nhorizon = inf\n");
  const CliRun r = run_in(cfg, "solve", "o");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0.41421356"), std::string::npos);
  EXPECT_EQ(run_in(write_config("bad.cfg", "[model]\npath = " + (dir_ / "m" / "model.txt").string() + "\nn = 3\n"),
                   "solve", "o")
                .code,
            2);
}

TEST_F(CliTest, AssumptionsHeatExponent) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = heat\nn = 64\nbeta = 0.5\n[assumptions]\nplot_csv = true\n");
  const CliRun r = run_in(cfg, "assumptions", "o");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(dir_ / "o" / "assumptions.json");
  EXPECT_NEAR(j["gamma_hat"].get<double>(), 0.75, 0.05);
  for (const char* key : {"model_id", "gamma_hat", "N_hat", "admissibility_C", "weighted_Lq", "fit_residuals", "probes", "seed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_LE(j["duality_residuals"]["S"].get<double>(), 1e-8);
  EXPECT_LE(j["duality_residuals"]["T"].get<double>(), 1e-8);
  EXPECT_NE(io::read_file(dir_ / "o" / "kernel_norm.csv").find("t,F_norm,fit"), std::string::npos);
}

TEST_F(CliTest, AssumptionsWithoutControlsAreZero) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = random\nn = 3\nm = 0\n");
  const CliRun r = run_in(cfg, "assumptions", "o");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = read_json(dir_ / "o" / "assumptions.json");
  EXPECT_EQ(j["admissibility_C"].get<double>(), 0.0);
  EXPECT_EQ(j["weighted_Lq"].get<double>(), 0.0);
  EXPECT_EQ(j["gamma_hat"].get<std::string>(), "no singular component");
}

TEST_F(CliTest, AssumptionsAreDeterministic) {
  const auto cfg = write_config("c.cfg", "[model]\nkind = heat\nn = 16\n[run]\nseed = 5\n");
  ASSERT_EQ(run_in(cfg, "assumptions", "a").code, 0);
  ASSERT_EQ(run_in(cfg, "assumptions", "b").code, 0);
  EXPECT_EQ(io::read_file(dir_ / "a" / "assumptions.json"), io::read_file(dir_ / "b" / "assumptions.json"));
}
