#include <cmath>

#include <gtest/gtest.h>

#include "riccati_lab/are.hpp"
#include "riccati_lab/io/are_csv.hpp"
#include "riccati_lab/models.hpp"
#include "test_oracles.hpp"

using namespace riccati_lab;

namespace {

LqModel infinite_scalar() { return scalar_model(-1.0, 1.0, 1.0, std::nullopt); }

void expect_are_invariants(const AreSolution& s, const LqModel& m) {
  EXPECT_LE((s.P - s.P.transpose()).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, s.P.norm()));
  EXPECT_GE(min_eigenvalue_symmetric(s.P), -1e-10);
  EXPECT_LT(s.closed_loop_abscissa(), 0.0);
  EXPECT_LE(s.residual, 1e-9 * are_residual_scale(m, s.P)) << s.method;
  EXPECT_EQ(s.K, m.B.transpose() * s.P);
}

}  // namespace

TEST(AreNewton, ScalarClosedForm) {
  const auto s = solve_are_newton(infinite_scalar());
  EXPECT_NEAR(s.P(0, 0), std::sqrt(2.0) - 1.0, 1e-10);
  expect_are_invariants(s, infinite_scalar());
}

TEST(AreNewton, DegenerateCases) {
  LqModel m = random_stable(4, 2, 2, 9, 0.5);
  LqModel no_obs = m;
  no_obs.R.setZero();
  EXPECT_EQ(solve_are_newton(no_obs).P.norm(), 0.0);
  LqModel no_ctrl = m;
  no_ctrl.B.setZero();
  EXPECT_LE((solve_are_newton(no_ctrl).P - oracle::lyapunov_kronecker(m.A, m.RtR())).norm(), 1e-10);
  EXPECT_THROW(solve_are_newton(m.with_horizon(1.0)), PreconditionError);
}

TEST(AreSpectral, ScalarClosedFormAndZeroObservation) {
  EXPECT_NEAR(solve_are_spectral(infinite_scalar()).P(0, 0), std::sqrt(2.0) - 1.0, 1e-10);
  LqModel m = random_stable(5, 2, 2, 4, 0.5);
  m.R.setZero();
  EXPECT_LE(solve_are_spectral(m).P.norm(), 1e-12);
}

TEST(AreSpectral, RejectsImaginaryAxisSpectrum) {
  // no control and no observation on a lossless mode makes the Hamiltonian singular on the axis
  LqModel m = infinite_scalar();
  m.A(0, 0) = -1e-13;
  m.B.setZero();
  m.assumption.omega = m.assumption.eta = 1e-13;
  m.assumption.delta = 0.0;
  EXPECT_THROW(solve_are_spectral(m), NumericalError);
}

TEST(AreCrossMethod, AgreeOnRandomAndShippedModels) {
  std::vector<LqModel> models = shipped_models(std::nullopt);
  for (int n : {4, 8, 16, 32}) models.push_back(random_stable(n, 2, 3, 100 + n, 0.5));
  for (const LqModel& m : models) {
    const auto a = solve_are_newton(m), b = solve_are_spectral(m);
    expect_are_invariants(a, m);
    expect_are_invariants(b, m);
    EXPECT_LE((a.P - b.P).norm(), 1e-9 * std::max(1.0, a.P.norm())) << m.model_id;
  }
}

TEST(AreNewton, QuadraticConvergenceIsFast) {
  const auto s = solve_are_newton(random_stable(8, 2, 3, 3, 0.5));
  EXPECT_LE(s.iterations, 20);
}

TEST(AreIntegral, EmptyIntervalAndOrdering) {
  const auto m = infinite_scalar();
  const auto s = solve_are_newton(m);
  EXPECT_EQ(are_integral_residual(s, m, 1.0, 1.0, Vector::Ones(1), Vector::Ones(1)), 0.0);
  EXPECT_THROW(are_integral_residual(s, m, 2.0, 1.0, Vector::Ones(1), Vector::Ones(1)), PreconditionError);
}

TEST(AreIntegral, RandomPairsOverFiveTimeUnits) {
  for (const LqModel& m : shipped_models(std::nullopt)) {
    for (const auto& sol : {solve_are_newton(m), solve_are_spectral(m)}) {
      for (std::uint64_t k = 0; k < 3; ++k) {
        Rng rng(sub_seed(12, k));
        const Vector x = rng.gaussian_matrix(m.n(), 1), y = rng.gaussian_matrix(m.n(), 1);
        EXPECT_LE(are_integral_residual(sol, m, 0.0, 5.0, x, y), 1e-7 * (1 + x.norm() * y.norm()))
            << m.model_id << " " << sol.method;
      }
    }
  }
}

TEST(AreIntegral, LongHorizonReducesToCostRepresentation) {
  for (const LqModel& m : shipped_models(std::nullopt)) {
    const auto sol = solve_are_newton(m);
    const Vector x = Rng(4).unit_vector(m.n());
    // the endpoint term (P e^{40A} x, e^{40A} x) is below round-off for these margins
    EXPECT_LE(are_integral_residual(sol, m, 0.0, 40.0, x, x), 1e-6) << m.model_id;
  }
}

TEST(GeneratorIdentity, AlgebraicIdentity) {
  for (const LqModel& m : shipped_models(std::nullopt)) {
    const auto sol = solve_are_newton(m);
    EXPECT_LE(generator_identity_check(sol, m), 1e-10 * spectral_norm(m.A));
  }
  LqModel m = random_stable(4, 2, 2, 1, 0.5);
  AreSolution zero = make_are_solution(m, Matrix::Zero(4, 4), "zero", 0);
  EXPECT_EQ(generator_identity_check(zero, m), 0.0);
  m.B.setZero();
  EXPECT_EQ(generator_identity_check(solve_are_newton(m), m), 0.0);
}

TEST(ValueSandwich, ReferencePasses) {
  for (const LqModel& m : shipped_models(std::nullopt)) {
    const auto ref = solve_are_newton(m);
    const double T = std::max(decay_horizon(m.A), decay_horizon(ref.A_P));
    const Vector x = Rng(8).unit_vector(m.n());
    const auto r = value_sandwich_test(ref.P, m, x, T, 4000);
    EXPECT_GE(r.upper_gap, -1e-6) << m.model_id;
    EXPECT_LE(r.lower_gap, 1e-6) << m.model_id;
    EXPECT_TRUE(r.passes(1e-6));
  }
}

TEST(ValueSandwich, PerturbationsAreWitnessed) {
  const LqModel m = random_stable(4, 2, 2, 5, 0.5);
  const auto ref = solve_are_newton(m);
  const double T = std::max(decay_horizon(m.A), decay_horizon(ref.A_P));
  const Vector x = Rng(2).unit_vector(4);
  const auto shifted = value_sandwich_test(ref.P + 0.1 * Matrix::Identity(4, 4), m, x, T, 4000);
  EXPECT_GT(shifted.lower_gap, 0.0);
  EXPECT_FALSE(shifted.passes(1e-6));
  const auto zero = value_sandwich_test(Matrix::Zero(4, 4), m, x, T, 4000);
  EXPECT_GT(zero.upper_gap, 0.0);
  for (std::uint64_t k = 0; k < 10; ++k) {
    Rng rng(sub_seed(31, k));
    const Matrix g = rng.gaussian_matrix(4, 4);
    const Matrix e = 0.05 * (g * g.transpose() + 0.1 * Matrix::Identity(4, 4));
    const auto r = value_sandwich_test(ref.P + e, m, x, T, 2000);
    EXPECT_GE(std::max(-r.upper_gap, r.lower_gap), 1e-4);
  }
}

TEST(ValueSandwich, Preconditions) {
  const LqModel m = random_stable(3, 1, 1, 5, 0.5);
  const Vector x = Vector::Ones(3);
  EXPECT_THROW(value_sandwich_test(-Matrix::Identity(3, 3), m, x, 60.0, 100), PreconditionError);
  EXPECT_THROW(value_sandwich_test(Matrix::Zero(3, 3), m, x, 0.1, 100), PreconditionError);
}

TEST(ClassQ, ReferenceSolutionIsMember) {
  for (const LqModel& m : shipped_models(std::nullopt)) EXPECT_TRUE(check_class_Q(solve_are_newton(m).P, m).ok());
}

TEST(HorizonLimit, MonotoneConvergenceAtClosedLoopRate) {
  for (const LqModel& m : shipped_models(std::nullopt)) {
    const auto st = horizon_limit_study(m.with_horizon(1.0), {5.0, 10.0, 20.0}, 100);
    const double floor = 1e-10 * std::max(1.0, solve_are_newton(m).P.norm());
    for (std::size_t i = 0; i < st.gaps.size(); ++i) {
      EXPECT_GE(st.min_gap_eigs[i], -floor) << m.model_id;
      if (i > 0) {
        EXPECT_LE(st.gaps[i], st.gaps[i - 1] + floor) << m.model_id;
        const double predicted = st.gaps[i - 1] * std::exp(-2.0 * st.closed_loop_rate * 5.0 * (i == 1 ? 1 : 2));
        EXPECT_LE(st.gaps[i], std::max(10.0 * predicted, floor)) << m.model_id;
      }
    }
  }
}

TEST(AreCsv, RoundTrip) {
  const LqModel m = random_stable(3, 2, 2, 1, 0.5);
  const auto s = solve_are_spectral(m);
  const auto text = io::write_are_csv(s, m.model_id);
  const auto r = io::read_are_csv(text);
  EXPECT_EQ(r.model_id, m.model_id);
  EXPECT_EQ(r.P, s.P);
  EXPECT_EQ(r.K, s.K);
  EXPECT_EQ(r.method, "hamiltonian-schur");
  EXPECT_EQ(r.residual, s.residual);
  EXPECT_EQ(r.closed_loop_abscissa, s.closed_loop_abscissa());
  EXPECT_THROW(io::read_are_csv("# n = 1, m = 1\nP_0_0\n1\n"), io::FormatError);
}

TEST(AreNewton, StopsAtRoundoffFloorOnLargeGenerators) {
  const LqModel m = composite_surrogate(8, 8, 0.5, 0.1, 1, std::nullopt);
  const auto newton = solve_are_newton(m);
  const auto spectral = solve_are_spectral(m);
  EXPECT_LE(newton.iterations, 20);
  EXPECT_LE((newton.P - spectral.P).norm() / spectral.P.norm(), 1e-9);
  EXPECT_LE(are_residual_norm(m, newton.P) / are_residual_scale(m, newton.P), 1e-12);
}
