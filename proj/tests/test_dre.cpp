#include <cmath>

#include <gtest/gtest.h>

#include "riccati_lab/dre.hpp"
#include "riccati_lab/io/dre_csv.hpp"
#include "riccati_lab/models.hpp"
#include "test_oracles.hpp"

using namespace riccati_lab;

namespace {

double scalar_reference_p0() {
  // p' = p^2 + 2p - 1, p(1) = 0, integrated backward with 1e6 RK4 steps
  return oracle::rk4_scalar([](double, double p) { return p * p + 2 * p - 1; }, 1.0, 0.0, 0.0, 1000000);
}

}  // namespace

TEST(SolveDre, ZeroObservationGivesZero) {
  LqModel m = random_stable(4, 2, 2, 3, 0.5, 1.0);
  m.R.setZero();
  for (auto integ : {DreIntegrator::rk4, DreIntegrator::implicit_midpoint}) {
    const auto sol = solve_dre(m, 50, integ);
    for (const Matrix& p : sol.P) EXPECT_EQ(p.norm(), 0.0);
  }
}

TEST(SolveDre, NoControlApproachesLyapunovSolution) {
  LqModel m = random_stable(3, 1, 2, 5, 0.5, 30.0);
  m.B.setZero();
  const auto sol = solve_dre(m, 3000);
  const Matrix ref = oracle::lyapunov_kronecker(m.A, m.RtR());
  EXPECT_LE((sol.P.front() - ref).norm(), 1e-8 * ref.norm());
}

TEST(SolveDre, ScalarAgainstHighResolutionOracle) {
  const double ref = scalar_reference_p0();
  const auto rk = solve_dre(scalar_model(), 1000);
  EXPECT_NEAR(rk.P.front()(0, 0), ref, 1e-8);
  const auto mid = solve_dre(scalar_model(), 2000, DreIntegrator::implicit_midpoint);
  EXPECT_NEAR(mid.P.front()(0, 0), ref, 1e-6);
}

TEST(SolveDre, Preconditions) {
  EXPECT_THROW(solve_dre(scalar_model(-1, 1, 1, std::nullopt), 10), PreconditionError);
  EXPECT_THROW(solve_dre(scalar_model(), 1), PreconditionError);
}

TEST(SolveDre, SolutionInvariantsOnShippedModels) {
  for (const LqModel& m : shipped_models(1.0)) {
    for (auto integ : {DreIntegrator::rk4, DreIntegrator::implicit_midpoint}) {
      const auto sol = solve_dre(m, 400, integ);
      EXPECT_EQ(sol.P.back().norm(), 0.0);
      for (std::size_t i = 0; i < sol.size(); ++i) {
        EXPECT_LE((sol.P[i] - sol.P[i].transpose()).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, sol.P[i].norm()));
        EXPECT_GE(min_eigenvalue_symmetric(sol.P[i]), -1e-10);
        EXPECT_EQ(sol.K[i], m.B.transpose() * sol.P[i]);
      }
      EXPECT_TRUE(check_class_QT(sol, m).ok()) << m.model_id << " " << to_string(integ);
    }
  }
}

TEST(SolveDre, MonotoneInHorizon) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LqModel m = random_stable(4, 2, 2, seed, 0.3, 1.0);
    const Matrix p1 = solve_dre(m, 400).P.front();
    const Matrix p2 = solve_dre(m.with_horizon(2.0), 800).P.front();
    for (std::size_t k = 0; k < 3; ++k) {
      const Vector x = Rng(sub_seed(seed, k)).unit_vector(4);
      EXPECT_GE(x.dot(p2 * x), x.dot(p1 * x) - 1e-12);
    }
  }
}

TEST(SolveDre, IntegratorsAgreeAtSecondOrder) {
  LqModel m = composite_surrogate(3, 3, 0.5, 0.1, 2, 1.0);
  const Matrix ref = solve_dre(m, 4000).P.front();
  const double e1 = (solve_dre(m, 100, DreIntegrator::implicit_midpoint).P.front() - ref).norm();
  const double e2 = (solve_dre(m, 200, DreIntegrator::implicit_midpoint).P.front() - ref).norm();
  EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.3);
}

TEST(Ire, EmptyIntervalIsZero) {
  LqModel m = scalar_model();
  const auto sol = solve_dre(m, 100);
  EXPECT_EQ(ire_residual(sol, m, 0.3, 0.3, Vector::Ones(1), Vector::Ones(1)), 0.0);
  EXPECT_EQ(ire_strong_residual(sol, m, 0.5, 0.5), 0.0);
  EXPECT_THROW(ire_residual(sol, m, 0.6, 0.5, Vector::Ones(1), Vector::Ones(1)), PreconditionError);
}

TEST(Ire, ZeroCandidateReducesToObservationIntegral) {
  LqModel m = random_stable(3, 1, 2, 4, 0.5, 1.0);
  DreSolution zero = solve_dre(m, 200);
  for (auto& p : zero.P) p.setZero();
  attach_derivatives(zero, m);
  for (auto& d : zero.dP) d.setZero();
  const Vector x = Rng(3).unit_vector(3);
  // int_s^t ||R e^{A(r-s)} x||^2 dr by a fine independent trapezoid
  const double s = 0.2, t = 0.8;
  double ref = 0.0;
  const int n = 20000;
  for (int i = 0; i <= n; ++i) {
    const double r = s + (t - s) * i / n;
    const double v = (m.R * oracle::expm_taylor(m.A * (r - s)) * x).squaredNorm();
    ref += (i == 0 || i == n ? 0.5 : 1.0) * v * (t - s) / n;
  }
  EXPECT_NEAR(ire_residual(zero, m, s, t, x, x), ref, 1e-8);
}

TEST(Ire, RandomTuplesOnFineGrid) {
  for (const LqModel& m : shipped_models(1.0)) {
    const auto sol = solve_dre(m, 2000);
    for (std::uint64_t k = 0; k < 10; ++k) {
      Rng rng(sub_seed(99, k));
      double s = rng.uniform(0.0, 1.0), t = rng.uniform(0.0, 1.0);
      if (s > t) std::swap(s, t);
      const Vector x = rng.gaussian_matrix(m.n(), 1), y = rng.gaussian_matrix(m.n(), 1);
      EXPECT_LE(ire_residual(sol, m, s, t, x, y), 1e-6 * (1 + x.norm() * y.norm())) << m.model_id;
    }
  }
}

TEST(Ire, StrongFormMatchesCanonicalPairs) {
  LqModel m = random_stable(4, 2, 2, 11, 0.4, 1.0);
  const auto sol = solve_dre(m, 60);
  const double strong = ire_strong_residual(sol, m, 0.25, 0.75);
  double weak = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      weak = std::max(weak, ire_residual(sol, m, 0.25, 0.75, Vector::Unit(4, i), Vector::Unit(4, j)));
  EXPECT_LE(weak, strong * (1 + 1e-12));
  EXPECT_LE(strong, 4.0 * weak * (1 + 1e-12));
}

TEST(Ire, ConvergesAtIntegratorOrder) {
  LqModel m = composite_surrogate(3, 3, 0.5, 0.1, 2, 1.0);
  for (auto [integ, order] : {std::pair{DreIntegrator::rk4, 4.0}, std::pair{DreIntegrator::implicit_midpoint, 2.0}}) {
    const double r1 = ire_strong_residual(solve_dre(m, 200, integ), m, 0.25, 1.0);
    const double r2 = ire_strong_residual(solve_dre(m, 400, integ), m, 0.25, 1.0);
    EXPECT_NEAR(std::log2(r1 / r2), order, 0.5) << to_string(integ) << " " << r1 << " " << r2;
  }
}

TEST(Ire, GainSquareIntegrable) {
  for (const LqModel& m : shipped_models(1.0)) {
    const auto sol = solve_dre(m, 1000);
    const Semigroup sg(m.A);
    const auto w = quadrature_weights(sol.grid, QuadratureRule::simpson);
    for (std::uint64_t k = 0; k < 5; ++k) {
      const Vector x = Rng(sub_seed(5, k)).unit_vector(m.n());
      double gain = 0.0, obs = 0.0;
      for (std::size_t i = 0; i < sol.size(); ++i) {
        const Vector ex = sg.apply(sol.grid[i], x);
        gain += w[i] * (sol.K[i] * ex).squaredNorm();
        obs += w[i] * (m.R * ex).squaredNorm();
      }
      EXPECT_LE(gain, obs + 1e-8) << m.model_id;
    }
  }
}

TEST(Opric, TerminalTimeAndZeroObservation) {
  LqModel m = random_stable(3, 1, 1, 2, 0.5, 1.0);
  const auto sol = solve_dre(m, 100);
  EXPECT_EQ(opric_selfconsistency(sol, m, 1.0, 4, 1).residual, 0.0);
  m.R.setZero();
  const auto zero = solve_dre(m, 100);
  EXPECT_EQ(opric_selfconsistency(zero, m, 0.0, 4, 1).residual, 0.0);
}

TEST(Opric, ScalarSelfConsistency) {
  const LqModel m = scalar_model();
  const auto sol = solve_dre(m, 4000);
  const auto c = opric_selfconsistency(sol, m, 0.0, 8, 3);
  EXPECT_LE(c.residual, 1e-5);
  EXPECT_LE(c.evolution_defect, 1e-8);
}

TEST(Opric, ShippedModels) {
  for (const LqModel& m : shipped_models(1.0)) {
    const auto sol = solve_dre(m, 2000);
    const auto c = opric_selfconsistency(sol, m, 0.2, 4, 3);
    EXPECT_LE(c.residual, 1e-5 * std::max(1.0, sol.P.front().norm())) << m.model_id;
    EXPECT_LE(c.evolution_defect, 1e-6) << m.model_id;
  }
}

TEST(UniquenessMap, TrivialFixedPoints) {
  LqModel m = random_stable(3, 2, 2, 6, 0.5, 1.0);
  const auto p = solve_dre(m, 100);
  const std::vector<Matrix> zero(p.size(), Matrix::Zero(3, 3));
  EXPECT_EQ(uniqueness_map_apply(zero, p, p, m, 0.0).norm(), 0.0);
  const auto q = difference_path(p, p);
  EXPECT_EQ(uniqueness_map_apply(q, p, p, m, 0.5).norm(), 0.0);
  EXPECT_THROW(uniqueness_map_apply(q, p, solve_dre(m, 50), m, 0.0), PreconditionError);
}

TEST(UniquenessMap, TwoIntegratorDifferenceIsAFixedPoint) {
  LqModel m = composite_surrogate(3, 3, 0.5, 0.1, 2, 1.0);
  auto defect = [&](std::size_t steps) {
    const auto p = solve_dre(m, steps, DreIntegrator::rk4);
    const auto p1 = solve_dre(m, steps, DreIntegrator::implicit_midpoint);
    const auto q = difference_path(p1, p);
    return (uniqueness_map_apply(q, p, p1, m, 0.0) - q.front()).norm();
  };
  const double d1 = defect(100), d2 = defect(200);
  EXPECT_GE(d1 / d2, 2.0);
}

TEST(Contraction, ZeroControl) {
  LqModel m = random_stable(3, 1, 1, 2, 0.5, 1.0);
  m.B.setZero();
  const auto p = solve_dre(m, 100);
  EXPECT_EQ(uniqueness_contraction_estimate(p, p, m, 0.5, 4, 1), 0.0);
}

TEST(Contraction, WindowMonotoneAndEventuallyContractive) {
  for (const LqModel& m : shipped_models(1.0)) {
    const auto p = solve_dre(m, 512);
    const auto p1 = solve_dre(m, 512, DreIntegrator::implicit_midpoint);
    double prev = std::numeric_limits<double>::infinity();
    bool contractive = false;
    for (double delta : {1.0, 0.5, 0.25, 0.125, 0.0625}) {
      const double rho = uniqueness_contraction_estimate(p, p1, m, delta, 8, 17);
      EXPECT_LE(rho, prev) << m.model_id << " delta=" << delta;
      contractive = contractive || rho < 1.0;
      prev = rho;
    }
    EXPECT_TRUE(contractive) << m.model_id;
  }
}

TEST(Contraction, WindowExponentOnHeat) {
  LqModel m = heat_boundary_surrogate(16, 0.5, 1.0);
  const auto p = solve_dre(m, 1024);
  std::vector<double> lx, ly;
  for (double delta : {0.5, 0.25, 0.125, 0.0625, 0.03125}) {
    lx.push_back(std::log(delta));
    ly.push_back(std::log(uniqueness_contraction_estimate(p, p, m, delta, 8, 3)));
  }
  const double slope = oracle::line_fit(lx, ly).first;
  const double q = m.assumption.q, qc = q / (q - 1.0);
  EXPECT_GE(slope, 1.0 / qc - 0.2);
}

TEST(DreCsv, RoundTrip) {
  LqModel m = random_stable(3, 2, 2, 6, 0.5, 1.0);
  const auto sol = solve_dre(m, 20, DreIntegrator::implicit_midpoint);
  const std::string text = io::write_dre_csv(sol);
  DreSolution back = io::read_dre_csv(text);
  EXPECT_EQ(back.model_id, m.model_id);
  EXPECT_EQ(back.integrator, DreIntegrator::implicit_midpoint);
  EXPECT_EQ(back.grid, sol.grid);
  for (std::size_t i = 0; i < sol.size(); ++i) {
    EXPECT_EQ(back.P[i], sol.P[i]);
    EXPECT_EQ(back.K[i], sol.K[i]);
  }
  EXPECT_EQ(io::write_dre_csv(back), text);
  EXPECT_THROW(io::read_dre_csv("# n = 1, m = 1\nt,P_0_0,K_0_0\n0,1\n1,0,0\n"), io::FormatError);
}
