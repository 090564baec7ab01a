#ifndef RSGCIR_TESTS_SUPPORT_HPP
#define RSGCIR_TESTS_SUPPORT_HPP

#include <cmath>

#include "rsgcir/model.hpp"
#include "rsgcir/ratings.hpp"

namespace rsgcir::testing {

inline RatingTransition rating_transition_q() {
  Mat p(6, 6);
  p << 0.9978, 0.0000, 0.0000, 0.0000, 0.0000, 0.0022,  //
      0.0064, 0.9719, 0.0174, 0.0013, 0.0002, 0.0028,   //
      0.0000, 0.0060, 0.9717, 0.0187, 0.0002, 0.0034,   //
      0.0000, 0.0007, 0.0071, 0.9798, 0.0033, 0.0091,   //
      0.0000, 0.0000, 0.0064, 0.0208, 0.8935, 0.0792,   //
      0.0000, 0.0000, 0.0000, 0.0000, 0.0000, 1.0000;
  return make_rating_transition(p, Measure::Q);
}

inline RatingGenerator two_rating_generator() {
  Mat lam(2, 2);
  lam << -0.1, 0.1, 0.3, -0.3;
  Vec nu(2);
  nu << 0.01, 0.08;
  return {lam, nu};
}

/// Two rate regimes, two credit regimes. X1 and X4 are stochastic, X2 and X3
/// deterministic. Parameters are in annual units.
inline ModelSpec toy_model(const RatingGenerator& rating = two_rating_generator()) {
  ModelSpec m;
  m.qr = CtmcGenerator::two_state(0.6, 0.9, {"L", "H"});
  m.qc = CtmcGenerator::two_state(0.5, 0.8, {"E", "C"});
  m.factors[0] = {FactorRegime(GcirParams::physical(0.8, 0.015, 1e-5, 0.004), {-2.0}),
                  FactorRegime(GcirParams::physical(1.5, 0.035, 2e-5, 0.006), {-4.0})};
  m.factors[1] = {FactorRegime(GcirParams::physical(0.3, 0.005, 0.0, 0.0), {0.0}),
                  FactorRegime(GcirParams::physical(0.5, 0.0, 0.0, 0.0), {0.0})};
  m.factors[2] = {FactorRegime(GcirParams::physical(1.0, 0.002, 0.0, 0.0), {0.0}),
                  FactorRegime(GcirParams::physical(1.0, 0.004, 0.0, 0.0), {0.0})};
  m.factors[3] = {FactorRegime(GcirParams::physical(0.6, 0.5, 0.002, 0.1), {-0.5}),
                  FactorRegime(GcirParams::physical(0.9, 1.2, 0.004, 0.2), {-0.5})};
  m.passthrough.resize(2, 2);
  m.passthrough << -0.28, 0.6, 3.16, -0.1;
  m.set_rating(rating);
  m.measurement.credit_ratings = {0, 1};
  m.measurement.credit_noise_sd = Mat::Constant(2, 2, 1e-3);
  m.validate();
  return m;
}

/// One rate regime with a CIR level factor (X2, X3 deterministic); the credit
/// block is the toy model's.
inline ModelSpec cir_rate_model() {
  ModelSpec m = toy_model();
  m.qr = CtmcGenerator::zero(1, {"L"});
  m.factors[0] = {FactorRegime(GcirParams::physical(0.5, 0.03, 0.0, 0.01), {-1.0})};
  m.factors[1] = {FactorRegime(GcirParams::physical(1.0, 0.0, 0.0, 0.0), {0.0})};
  m.factors[2] = {FactorRegime(GcirParams::physical(1.0, 0.002, 0.0, 0.0), {0.0})};
  m.passthrough = m.passthrough.topRows(1).eval();
  m.measurement.rate_noise_sd = Mat::Constant(1, 2, 1e-4);
  m.validate();
  return m;
}

/// Product of single-factor closed forms with regimes (sr, sc) frozen.
inline double closed_form_price(const ModelSpec& m, const Vec4& c1, int sr, int sc, double tau,
                         const Vec4& x) {
  double log_p = 0.0;
  for (int k = 0; k < kNumFactors; ++k) {
    if (c1(k) == 0.0) continue;
    const auto& q = m.factor(k, k < 3 ? sr : sc).q;
    const auto ac = affine_coefficients(q, c1(k), 0.0, tau);
    log_p += ac.a - ac.b * x(k);
  }
  return std::exp(log_p);
}

}  // namespace rsgcir::testing

#endif  // RSGCIR_TESTS_SUPPORT_HPP
