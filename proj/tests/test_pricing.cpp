#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "rsgcir/pricing.hpp"
#include "support.hpp"

using namespace rsgcir;
using rsgcir::testing::closed_form_price;
using rsgcir::testing::toy_model;

namespace {

const Vec4 kState(0.02, 0.004, 0.003, 0.7);

}  // namespace

TEST(ShortRate, Loadings) {
  EXPECT_EQ(short_rate_loadings(Curve::CGB), Vec4(1, 1, 0, 0));
  EXPECT_EQ(short_rate_loadings(Curve::CDB), Vec4(1, 1, 1, 0));
  EXPECT_EQ(short_rate_loadings(Curve::CDB) - short_rate_loadings(Curve::CGB), Vec4(0, 0, 1, 0));
}

TEST(OneStepBlock, ProductOfFactorTransforms) {
  auto m = toy_model();
  auto blk = one_step_discount_block(m, Curve::CGB, 1, m.grid_delta);
  const double direct = closed_form_price(m, Vec4(1, 1, 0, 0), 1, 0, m.grid_delta, kState);
  EXPECT_NEAR(std::exp(blk.a - blk.b.dot(kState)), direct, 1e-15);
  auto tiny = one_step_discount_block(m, Curve::CDB, 0, 1e-12);
  EXPECT_NEAR(tiny.a, 0.0, 1e-12);
  EXPECT_NEAR(tiny.b.norm(), 0.0, 1e-11);
}

TEST(DiscountBond, TerminalIsOne) {
  auto m = toy_model();
  auto p = discount_bond_prices(m, Curve::CDB, kState, 0);
  EXPECT_EQ(p.values, Vec::Ones(2));
}

TEST(DiscountBond, RegimeDegenerateCollapse) {
  auto m = single_regime_copy(toy_model(), 1, 0);
  for (auto curve : {Curve::CGB, Curve::CDB}) {
    auto p = discount_bond_prices(m, curve, kState, 520);
    const double cf = closed_form_price(m, short_rate_loadings(curve), 1, 0, 10.0, kState);
    EXPECT_NEAR(p.values(0), cf, 1e-10);
    EXPECT_NEAR(p.values(1), cf, 1e-10);
  }
}

TEST(DiscountBond, FrozenRegimes) {
  auto m = toy_model();
  m.qr = CtmcGenerator::zero(2, {"L", "H"});
  auto p = discount_bond_prices(m, Curve::CDB, kState, 260);
  for (int s = 0; s < 2; ++s)
    EXPECT_NEAR(p.values(s), closed_form_price(m, Vec4(1, 1, 1, 0), s, 0, 5.0, kState), 1e-12);
}

TEST(DiscountBond, AnchoredAgreesAtAnchorToFirstOrder) {
  auto m = toy_model();
  auto full = discount_bond_prices(m, Curve::CGB, kState, 260);
  PricingOptions opt;
  opt.scheme = PricingScheme::Anchored;
  auto anchored = discount_bond_prices(m, Curve::CGB, kState, 260, opt);
  for (int s = 0; s < 2; ++s) {
    EXPECT_NEAR(anchored.values(s) / full.values(s), 1.0, 1e-3);
    EXPECT_LT(anchored.values(s), 1.0);
  }
}

TEST(MuDriver, Values) {
  auto m = toy_model();
  m.passthrough.setZero();
  EXPECT_DOUBLE_EQ(mu_driver(m, Vec4(0.01, 0.0, 0.0, 0.02), 0, 0), 0.02);
  m.passthrough(1, 0) = 3.1592;
  EXPECT_NEAR(mu_driver(m, Vec4(0.02, 0.01, 0.0, 0.05), 1, 0), 0.144776, 1e-15);
  m.passthrough(0, 0) = -0.2821;
  EXPECT_EQ(mu_driver(m, Vec4(0.5, 0.5, 0.0, 0.01), 0, 0), 1e-8);
}

TEST(ModeLoadings, Values) {
  EXPECT_EQ(mode_loadings_for(0.0, 0.7), Vec4(1, 1, 1, 0));
  const Vec4 c = mode_loadings_for(-0.05, 0.6013);
  EXPECT_NEAR(c(0), 1.030065, 1e-15);
  EXPECT_NEAR(c(1), 1.030065, 1e-15);
  EXPECT_EQ(c(2), 1.0);
  EXPECT_EQ(c(3), 0.05);
}

TEST(Corporate, ModeValuesBoundedByDiscount) {
  auto m = toy_model();
  const int n = 104;
  auto cdb = discount_bond_prices(m, Curve::CDB, kState, n);
  for (int j = 0; j < 2; ++j) {
    auto u = corporate_mode_values(m, j, kState, n);
    for (int s = 0; s < m.n_joint(); ++s) {
      EXPECT_GT(u.values(s), 0.0);
      EXPECT_LE(u.values(s), cdb.values(m.rate_of(s)) * (1.0 + 1e-12));
    }
  }
  auto zero = corporate_mode_values(m, 0, kState, 0);
  EXPECT_EQ(zero.values, Vec::Ones(4));
}

TEST(Corporate, DegenerateRegimesMatchClosedForm) {
  auto m = single_regime_copy(toy_model(), 0, 1);
  const double tau = 3.0;
  auto u = corporate_mode_values(m, 1, kState, 156);
  const Vec4 c1 = mode_loadings_for(m.lando.d(1), m.passthrough(0, 0));
  const double cf = closed_form_price(m, c1, 0, 1, tau, kState);
  for (int s = 0; s < 4; ++s) EXPECT_NEAR(u.values(s), cf, 1e-10);
}

TEST(Corporate, ConstantDriverAnalytic) {
  // Deterministic r and mu: v = exp(-r tau) * (1 - [exp(Q mu tau)]_iD).
  auto m = single_regime_copy(toy_model(), 0, 0);
  const double r = 0.025, mu = 0.8;
  for (int s = 0; s < 2; ++s) {
    m.factors[0][s] = FactorRegime(GcirParams::physical(1.0, r, 0.0, 0.0), {0.0});
    m.factors[1][s] = FactorRegime(GcirParams::physical(1.0, 0.0, 0.0, 0.0), {0.0});
    m.factors[2][s] = FactorRegime(GcirParams::physical(1.0, 0.0, 0.0, 0.0), {0.0});
    m.factors[3][s] = FactorRegime(GcirParams::physical(1.0, mu, 0.0, 0.0), {0.0});
  }
  m.passthrough.setZero();
  const Vec4 x(r, 0.0, 0.0, mu);
  for (int n : {52, 260}) {
    const double tau = n * m.grid_delta;
    const Mat p = expm(m.rating.full() * mu * tau);
    for (int i = 0; i < 2; ++i) {
      auto v = corporate_price(m, i, x, n);
      const double analytic = std::exp(-r * tau) * (1.0 - p(i, 2));
      for (int s = 0; s < 4; ++s) EXPECT_NEAR(v.values(s), analytic, 1e-12);
    }
  }
}

TEST(Corporate, FixturePricesFallWithRating) {
  auto emb = embed_generator(rsgcir::testing::rating_transition_q());
  auto m = toy_model(emb);
  m.measurement.credit_ratings = {0, 1, 2, 3};
  const Vec4 x(0.02, 0.004, 0.003, 0.05);
  std::vector<double> prices;
  for (int i = 0; i < 4; ++i) prices.push_back(corporate_price(m, i, x, 156).values(0));
  for (int i = 1; i < 4; ++i) EXPECT_LT(prices[i], prices[i - 1]);
}

TEST(MixPrices, Properties) {
  RegimePriceVector p{Vec(2), 1.0};
  p.values << 0.95, 0.97;
  EXPECT_EQ(mix_prices(p, Eigen::Vector2d(1, 0)), 0.95);
  RegimePriceVector eq{Vec::Constant(3, 0.9), 1.0};
  EXPECT_NEAR(mix_prices(eq, Vec::Constant(3, 1.0 / 3.0)), 0.9, 1e-15);
  const double mixed = mix_prices(p, Eigen::Vector2d(0.5, 0.5));
  EXPECT_GE(mixed, 0.95);
  EXPECT_LE(mixed, 0.97);
  // Mixing yields first and re-exponentiating is not the same as mixing prices.
  const double via_yield =
      std::exp(-(0.5 * price_to_yield(0.95, 1.0) + 0.5 * price_to_yield(0.97, 1.0)));
  EXPECT_GT(std::abs(mixed - via_yield), 1e-6);
  EXPECT_THROW(mix_prices(p, Vec::Constant(3, 1.0 / 3.0)), Error);
}

TEST(Yield, Inverse) {
  EXPECT_EQ(price_to_yield(1.0, 2.0), 0.0);
  EXPECT_NEAR(price_to_yield(std::exp(-0.03 * 5), 5.0), 0.03, 1e-15);
  try {
    price_to_yield(0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositivePrice);
  }
}

TEST(SpreadDecomposition, Identity) {
  auto d = spread_decomposition(3.0, 3.2, 3.9);
  EXPECT_DOUBLE_EQ(d.sovereign, 3.0);
  EXPECT_NEAR(d.policy_bank_spread, 0.2, 1e-15);
  EXPECT_NEAR(d.corporate_spread, 0.7, 1e-15);
  EXPECT_NEAR(d.total(), 3.9, 1e-15);
  auto z = spread_decomposition(0.03, 0.03, 0.03);
  EXPECT_EQ(z.policy_bank_spread, 0.0);
  EXPECT_EQ(z.corporate_spread, 0.0);
}

TEST(ProbWeightedMean, Values) {
  EXPECT_NEAR(prob_weighted_mean({1, 2}, {0.3, 0.7}), 1.7, 1e-15);
  EXPECT_NEAR(prob_weighted_mean({1, 2, 6}, {0.5, 0.5, 0.5}), 3.0, 1e-15);
  EXPECT_NEAR(prob_weighted_mean({1, 2, 6}, {1, 0, 1}), 3.5, 1e-15);
  try {
    prob_weighted_mean({1, 2}, {0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroWeightMass);
  }
}

TEST(TermStructure, MixtureTermCountAndSpeed) {
  auto m = toy_model();
  const auto t0 = std::chrono::steady_clock::now();
  auto ts = build_term_structures(m, {1, 5, 10}, PricingOptions{}, true);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(ts.cgb.stats().max_terms_seen, 4096u);
  EXPECT_LT(ts.modes[0].stats().max_terms_seen, 4096u);
  EXPECT_LT(secs, 15.0);
  RecordProperty("seconds", std::to_string(secs));
  std::printf("terms cgb=%zu mode0=%zu seconds=%.2f\n", ts.cgb.stats().max_terms_seen,
              ts.modes[0].stats().max_terms_seen, secs);
  for (int s = 0; s < 2; ++s) {
    const double a = ts.cgb.price(520, s, kState);
    const double b = discount_bond_prices(m, Curve::CGB, kState, 520).values(s);
    EXPECT_NEAR(a, b, 1e-14);
  }
}
