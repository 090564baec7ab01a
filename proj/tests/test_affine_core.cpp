#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rsgcir/affine_core.hpp"

using namespace rsgcir;

TEST(MeasureMap, ZeroLambdaIsIdentity) {
  auto p = GcirParams::physical(0.5, 0.05, 0.01, 0.02);
  auto q = to_risk_neutral(p, {0.0});
  EXPECT_DOUBLE_EQ(q.kappa(), 0.5);
  EXPECT_DOUBLE_EQ(q.theta(), 0.05);
  EXPECT_EQ(q.measure(), Measure::Q);
}

TEST(MeasureMap, RateFactorHighRegime) {
  auto p = GcirParams::physical(1.489, 0.006250, 0.000133, 0.000126);
  auto q = to_risk_neutral(p, {-41.098});
  const double kq = 1.489 + 0.000126 * -41.098;
  EXPECT_NEAR(q.kappa(), kq, 1e-15);
  EXPECT_NEAR(q.theta(), (1.489 * 0.006250 + 0.000133 * 41.098) / kq, 1e-15);
  EXPECT_NEAR(implied_lambda(p, q), -41.098, 1e-10);
}

TEST(MeasureMap, RoundTripAndLogCoefficientInvariance) {
  auto p = GcirParams::physical(0.8, 0.04, 0.003, 0.05);
  auto q = to_risk_neutral(p, {-3.25});
  EXPECT_NEAR(implied_lambda(p, q), -3.25, 1e-12);
  const double lhs = (q.beta() * q.theta() + q.alpha()) * q.kappa();
  const double rhs = (p.beta() * p.theta() + p.alpha()) * p.kappa();
  EXPECT_NEAR(lhs / rhs, 1.0, 1e-12);
}

TEST(MeasureMap, AlphaOnlyBranch) {
  auto p = GcirParams::physical(0.8, 0.04, 0.003, 0.0);
  auto q = to_risk_neutral(p, {2.0});
  EXPECT_DOUBLE_EQ(q.kappa(), 0.8);
  EXPECT_NEAR(implied_lambda(p, q), 2.0, 1e-12);
}

TEST(MeasureMap, Errors) {
  auto p = GcirParams::physical(0.5, 0.05, 0.01, 0.02);
  try {
    to_risk_neutral(p, {-100.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveQKappa);
  }
  auto det_p = GcirParams::physical(0.5, 0.05, 0.0, 0.0);
  auto det_q = GcirParams::risk_neutral(0.5, 0.05, 0.0, 0.0);
  try {
    implied_lambda(det_p, det_q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateInversion);
  }
  auto bad_q = GcirParams::risk_neutral(0.6, 0.05, 0.01, 0.02);
  try {
    implied_lambda(p, bad_q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentPair);
  }
}

TEST(AffineCoefficients, TerminalCondition) {
  auto q = GcirParams::risk_neutral(0.5, 0.05, 0.01, 0.02);
  auto c = affine_coefficients(q, 1.3, -0.7, 0.0);
  EXPECT_EQ(c.a, 0.0);
  EXPECT_EQ(c.b, -0.7);
}

TEST(AffineCoefficients, MatchesRiccatiOracle) {
  auto q = GcirParams::risk_neutral(0.5, 0.05, 0.01, 0.02);
  auto closed = affine_coefficients(q, 1.0, 0.0, 5.0);
  auto ode = riccati_oracle(q, 1.0, 0.0, 5.0, 10000);
  EXPECT_NEAR(closed.a, ode.a, 1e-8);
  EXPECT_NEAR(closed.b, ode.b, 1e-8);
}

TEST(AffineCoefficients, RandomGridAgainstOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double kappa = 0.05 + 2.0 * u(gen);
    const double theta = 0.1 * u(gen) - 0.02;
    const double alpha = 0.02 * u(gen);
    const double beta = 0.2 * u(gen);
    const double c1 = 2.0 * u(gen) - 0.2;
    const double c2 = 2.0 * u(gen) - 0.5;
    const double tau = 0.01 + 10.0 * u(gen);
    auto q = GcirParams::risk_neutral(kappa, theta, alpha, beta);
    auto closed = affine_coefficients(q, c1, c2, tau);
    auto ode = riccati_oracle(q, c1, c2, tau, 10000);
    EXPECT_NEAR(closed.a, ode.a, 1e-8) << k;
    EXPECT_NEAR(closed.b, ode.b, 1e-8) << k;
  }
}

TEST(AffineCoefficients, ClassicalCirCase) {
  const double kappa = 0.5, theta = 0.05, sigma2 = 0.02, tau = 7.0;
  auto q = GcirParams::risk_neutral(kappa, theta, 0.0, sigma2);
  auto general = affine_coefficients(q, 1.0, 0.0, tau);
  auto classic = classical_cir_discount(kappa, theta, sigma2, tau);
  EXPECT_NEAR(general.a / classic.a, 1.0, 1e-12);
  EXPECT_NEAR(general.b / classic.b, 1.0, 1e-12);
}

TEST(AffineCoefficients, GaussianLimitIsContinuous) {
  auto q0 = GcirParams::risk_neutral(0.7, 0.03, 0.001, 0.0);
  auto q1 = GcirParams::risk_neutral(0.7, 0.03, 0.001, 1e-9);
  auto c0 = affine_coefficients(q0, 1.0, 0.2, 4.0);
  auto c1 = affine_coefficients(q1, 1.0, 0.2, 4.0);
  EXPECT_NEAR(c0.a, c1.a, 1e-7);
  EXPECT_NEAR(c0.b, c1.b, 1e-7);
  auto ode = riccati_oracle(q0, 1.0, 0.2, 4.0);
  EXPECT_NEAR(c0.a, ode.a, 1e-10);
  EXPECT_NEAR(c0.b, ode.b, 1e-10);
}

TEST(AffineCoefficients, SlopeIncreasingInHorizon) {
  auto q = GcirParams::risk_neutral(0.5, 0.05, 0.0, 0.02);
  double prev = 0.0;
  for (double tau = 0.25; tau <= 30.0; tau += 0.25) {
    const double b = affine_coefficients(q, 1.0, 0.0, tau).b;
    EXPECT_GT(b, prev);
    prev = b;
  }
}

TEST(AffineCoefficients, LongHorizonStaysFinite) {
  auto q = GcirParams::risk_neutral(3.0, 0.05, 0.01, 0.5);
  auto c = affine_coefficients(q, 5.0, 0.0, 200.0);
  EXPECT_TRUE(std::isfinite(c.a));
  EXPECT_TRUE(std::isfinite(c.b));
}

TEST(AffineCoefficients, Errors) {
  auto q = GcirParams::risk_neutral(0.5, 0.05, 0.01, 0.02);
  try {
    affine_coefficients(q, -10.0, 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ComplexGamma);
  }
  try {
    affine_coefficients(q, 0.0, -200.0, 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularDenominator);
  }
}

TEST(TransformValue, Basics) {
  EXPECT_EQ(transform_value({0.0, 0.0, 1.0, 0.0, 0.0}, 3.7), 1.0);
  EXPECT_EQ(transform_value({0.0, 1.0, 1.0, 0.0, 0.0}, 0.0), 1.0);
}

TEST(GcirParams, Validation) {
  EXPECT_THROW(GcirParams::risk_neutral(0.0, 0.05, 0.01, 0.02), Error);
  EXPECT_THROW(GcirParams::physical(0.5, 0.05, -0.01, 0.02), Error);
  auto p = GcirParams::physical(0.5, 0.05, 0.01, 0.02);
  EXPECT_DOUBLE_EQ(p.lower_bound(), -0.5);
  EXPECT_TRUE(p.admissible(-0.5));
  EXPECT_FALSE(p.admissible(-0.6));
}
