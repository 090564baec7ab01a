#ifndef RSGCIR_MODEL_HPP
#define RSGCIR_MODEL_HPP

#include <array>
#include <string>
#include <vector>

#include "rsgcir/affine_core.hpp"
#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/ratings.hpp"
#include "rsgcir/regimes.hpp"

namespace rsgcir {

inline constexpr int kNumFactors = 4;
inline constexpr int kNumRateFactors = 3;

/// One factor in one regime: physical dynamics plus market price of risk.
struct FactorRegime {
  GcirParams p = GcirParams::physical(1.0, 0.0, 1e-4, 0.0);
  RiskPrice lambda{};
  GcirParams q = to_risk_neutral(p, lambda);

  FactorRegime() = default;
  FactorRegime(GcirParams physical, RiskPrice price)
      : p(physical), lambda(price), q(to_risk_neutral(physical, price)) {}
};

/// Observation layout and measurement noise for both filter stages.
struct MeasurementSpec {
  std::vector<double> maturities{1, 2, 3, 4, 5, 7, 10};
  Mat rate_noise_sd = Mat::Constant(2, 2, 5e-4);  // [rate regime, curve (CGB, CDB)]
  std::vector<int> credit_ratings{0, 1, 2, 3};    // rating indices observed in the credit panel
  Mat credit_noise_sd = Mat::Constant(2, 4, 1e-3);  // [credit regime, observed rating]
};

/// Full RS-GCIR pricing and filtering model.
///
/// Factors 0-2 switch with the rate regime, factor 3 with the credit regime.
/// Joint regimes are ordered S = s_r * n_c + s_c, matching kronecker_sum.
struct ModelSpec {
  std::array<std::vector<FactorRegime>, kNumFactors> factors;
  CtmcGenerator qr = CtmcGenerator::two_state(0.5, 0.5, {"L", "H"});
  CtmcGenerator qc = CtmcGenerator::two_state(0.5, 0.5, {"E", "C"});
  Mat passthrough = Mat::Zero(2, 2);  // c(s_c | s_r) stored at (s_r, s_c)
  RatingGenerator base_rating;  // before default-intensity adjustments
  Vec delta_nu;                 // empty means unadjusted
  RatingGenerator rating;       // base_rating with delta_nu applied
  LandoDecomposition lando;
  std::vector<std::string> rating_labels = coarse_labels();
  double grid_delta = 1.0 / 52.0;
  Mat omega = Mat::Identity(3, 3);  // correlation of rate-factor innovations under P
  double mu_floor = 1e-8;
  MeasurementSpec measurement;

  int n_rate() const { return qr.size(); }
  int n_credit() const { return qc.size(); }
  int n_joint() const { return n_rate() * n_credit(); }
  int joint_index(int sr, int sc) const { return sr * n_credit() + sc; }
  int rate_of(int joint) const { return joint / n_credit(); }
  int credit_of(int joint) const { return joint % n_credit(); }

  /// Regime index governing factor k under joint regime S.
  int regime_for_factor(int k, int joint) const {
    return k < kNumRateFactors ? rate_of(joint) : credit_of(joint);
  }

  const FactorRegime& factor(int k, int regime) const { return factors[k].at(regime); }

  void set_rating(const RatingGenerator& g, WeightPolicy policy = WeightPolicy::Warn) {
    base_rating = g;
    if (delta_nu.size() != g.nu.size()) delta_nu = Vec::Zero(g.nu.size());
    apply_rating(policy);
  }

  void set_delta_nu(const Vec& d, WeightPolicy policy = WeightPolicy::Warn) {
    delta_nu = d;
    apply_rating(policy);
  }

  void apply_rating(WeightPolicy policy = WeightPolicy::Warn) {
    rating = adjust_default_intensity(base_rating, delta_nu);
    lando = lando_decomposition(rating, policy);
  }

  CtmcGenerator joint_generator() const { return kronecker_sum(qr, qc); }

  /// Checks regime counts across factors, pass-through and noise shapes.
  void validate() const {
    for (int k = 0; k < kNumFactors; ++k) {
      const int want = k < kNumRateFactors ? n_rate() : n_credit();
      RSGCIR_REQUIRE(static_cast<int>(factors[k].size()) == want, ErrorCode::DimensionMismatch,
                     "factor " + std::to_string(k + 1) + " needs " + std::to_string(want) +
                         " regimes");
    }
    RSGCIR_REQUIRE(passthrough.rows() == n_rate() && passthrough.cols() == n_credit(),
                   ErrorCode::DimensionMismatch, "pass-through must be n_rate x n_credit");
    RSGCIR_REQUIRE(grid_delta > 0.0, ErrorCode::InvalidArgument, "grid_delta must be positive");
    RSGCIR_REQUIRE(omega.rows() == 3 && omega.cols() == 3, ErrorCode::DimensionMismatch,
                   "omega must be 3 x 3");
    RSGCIR_REQUIRE(measurement.rate_noise_sd.rows() == n_rate() &&
                       measurement.rate_noise_sd.cols() == 2,
                   ErrorCode::DimensionMismatch, "rate noise must be n_rate x 2");
    RSGCIR_REQUIRE(measurement.credit_noise_sd.rows() == n_credit() &&
                       measurement.credit_noise_sd.cols() ==
                           static_cast<Eigen::Index>(measurement.credit_ratings.size()),
                   ErrorCode::DimensionMismatch, "credit noise must be n_credit x ratings");
    for (int r : measurement.credit_ratings)
      RSGCIR_REQUIRE(r >= 0 && r < rating.nondefault(), ErrorCode::DimensionMismatch,
                     "observed rating index out of range");
  }
};

/// Stationary-belief average of the physical long-run levels. Reducible chains
/// fall back to equal regime weights.
inline Vec4 stationary_anchor(const ModelSpec& m) {
  auto weights = [](const CtmcGenerator& g) -> Vec {
    if (is_irreducible(g)) return stationary_distribution(g);
    return Vec::Constant(g.size(), 1.0 / g.size());
  };
  const Vec pr = weights(m.qr);
  const Vec pc = weights(m.qc);
  Vec4 x = Vec4::Zero();
  for (int k = 0; k < kNumFactors; ++k) {
    const Vec& pi = k < kNumRateFactors ? pr : pc;
    for (Eigen::Index s = 0; s < pi.size(); ++s) x(k) += pi(s) * m.factor(k, s).p.theta();
  }
  return x;
}

/// A model whose regimes are copies of one parameter set; used by collapse checks.
inline ModelSpec single_regime_copy(const ModelSpec& m, int sr, int sc) {
  ModelSpec out = m;
  for (int k = 0; k < kNumFactors; ++k) {
    const int src = k < kNumRateFactors ? sr : sc;
    for (auto& f : out.factors[k]) f = m.factor(k, src);
  }
  out.passthrough.setConstant(m.passthrough(sr, sc));
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_MODEL_HPP
