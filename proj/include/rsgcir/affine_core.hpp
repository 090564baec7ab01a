#ifndef RSGCIR_AFFINE_CORE_HPP
#define RSGCIR_AFFINE_CORE_HPP

// Closed-form exponential-affine transforms of a generalized CIR factor
//
//   dX = kappa (theta - X) dt + sqrt(alpha + beta X) dW
//
// together with the P -> Q parameter map and a Runge-Kutta oracle for the
// Riccati system.

#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "rsgcir/errors.hpp"

namespace rsgcir {

enum class Measure { P, Q };

inline const char* to_string(Measure m) { return m == Measure::P ? "P" : "Q"; }

/// Per-factor, per-regime square-root diffusion parameters.
///
/// Admissibility is checked once here; evaluations downstream trust it.
/// alpha = beta = 0 is accepted and describes a deterministic factor.
class GcirParams {
 public:
  GcirParams() = default;

  GcirParams(double kappa, double theta, double alpha, double beta, Measure measure)
      : kappa_(kappa), theta_(theta), alpha_(alpha), beta_(beta), measure_(measure) {
    RSGCIR_REQUIRE(std::isfinite(kappa) && std::isfinite(theta) && std::isfinite(alpha) &&
                       std::isfinite(beta),
                   ErrorCode::InvalidArgument, "GCIR parameters must be finite");
    RSGCIR_REQUIRE(kappa > 0.0, measure == Measure::Q ? ErrorCode::NonPositiveQKappa
                                                      : ErrorCode::InvalidArgument,
                   "kappa must be positive (got " + std::to_string(kappa) + ")");
    RSGCIR_REQUIRE(alpha >= 0.0 && beta >= 0.0, ErrorCode::InvalidArgument,
                   "variance loadings alpha, beta must be nonnegative");
  }

  static GcirParams physical(double kappa, double theta, double alpha, double beta) {
    return {kappa, theta, alpha, beta, Measure::P};
  }
  static GcirParams risk_neutral(double kappa, double theta, double alpha, double beta) {
    return {kappa, theta, alpha, beta, Measure::Q};
  }

  double kappa() const { return kappa_; }
  double theta() const { return theta_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  Measure measure() const { return measure_; }

  /// Lower edge of the state domain (-alpha/beta), or -inf when beta = 0.
  double lower_bound() const {
    return beta_ > 0.0 ? -alpha_ / beta_ : -std::numeric_limits<double>::infinity();
  }
  bool admissible(double x) const { return alpha_ + beta_ * x >= 0.0; }

  /// Instantaneous variance alpha + beta x, floored at zero.
  double variance_rate(double x) const { return std::max(0.0, alpha_ + beta_ * x); }

  /// Variance of the stationary law, (alpha + beta theta) / (2 kappa).
  double stationary_variance() const {
    return std::max(0.0, alpha_ + beta_ * theta_) / (2.0 * kappa_);
  }

  friend bool operator==(const GcirParams&, const GcirParams&) = default;

 private:
  double kappa_ = 1.0;
  double theta_ = 0.0;
  double alpha_ = 0.0;
  double beta_ = 0.0;
  Measure measure_ = Measure::Q;
};

/// Market price of diffusion risk for one factor in one regime.
struct RiskPrice {
  double lambda = 0.0;
};

/// Coefficients of E[exp(-c1 int_0^tau X du - c2 X_tau) | X_0 = x] = exp(a - b x).
struct AffineCoeffs {
  double a = 0.0;
  double b = 0.0;
  double tau = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
};

// ---------------------------------------------------------------------------
// Measure change

inline GcirParams to_risk_neutral(const GcirParams& p, RiskPrice price) {
  RSGCIR_REQUIRE(p.measure() == Measure::P, ErrorCode::InvalidArgument,
                 "to_risk_neutral expects P-measure parameters");
  if (price.lambda == 0.0) return GcirParams::risk_neutral(p.kappa(), p.theta(), p.alpha(), p.beta());
  const double kappa_q = p.kappa() + p.beta() * price.lambda;
  RSGCIR_REQUIRE(kappa_q > 0.0, ErrorCode::NonPositiveQKappa,
                 "kappa + beta*lambda = " + std::to_string(kappa_q) + " <= 0");
  const double theta_q = (p.kappa() * p.theta() - p.alpha() * price.lambda) / kappa_q;
  return GcirParams::risk_neutral(kappa_q, theta_q, p.alpha(), p.beta());
}

/// Recovers lambda from a (P, Q) pair sharing alpha and beta. When both
/// loadings are nonzero the two inversion formulas must agree.
inline double implied_lambda(const GcirParams& p, const GcirParams& q,
                             double consistency_tol = 1e-10) {
  RSGCIR_REQUIRE(p.measure() == Measure::P && q.measure() == Measure::Q,
                 ErrorCode::InvalidArgument, "implied_lambda expects a (P, Q) pair");
  RSGCIR_REQUIRE(p.alpha() == q.alpha() && p.beta() == q.beta(), ErrorCode::InvalidArgument,
                 "P and Q parameters must share alpha and beta");
  const bool has_beta = p.beta() != 0.0;
  const bool has_alpha = p.alpha() != 0.0;
  RSGCIR_REQUIRE(has_beta || has_alpha, ErrorCode::DegenerateInversion,
                 "alpha = beta = 0 leaves lambda unidentified");
  const double from_beta = has_beta ? (q.kappa() - p.kappa()) / p.beta() : 0.0;
  const double from_alpha =
      has_alpha ? (p.kappa() * p.theta() - q.kappa() * q.theta()) / p.alpha() : 0.0;
  if (has_beta && has_alpha) {
    const double scale = std::max({std::abs(from_beta), std::abs(from_alpha), 1.0});
    RSGCIR_REQUIRE(std::abs(from_beta - from_alpha) <= consistency_tol * scale,
                   ErrorCode::InconsistentPair,
                   "lambda inversions disagree: " + std::to_string(from_beta) + " vs " +
                       std::to_string(from_alpha));
    return from_beta;
  }
  return has_beta ? from_beta : from_alpha;
}

// ---------------------------------------------------------------------------
// Closed-form transform

namespace detail {

// Gauss-Legendre nodes/weights on [-1, 1], 20 points.
inline constexpr std::array<double, 10> kGl20Nodes = {
    0.0765265211334973337546404, 0.2277858511416450780804962, 0.3737060887154195606725482,
    0.5108670019508270980043641, 0.6360536807265150254528367, 0.7463319064601507926143051,
    0.8391169718222188233945291, 0.9122344282513259058677524, 0.9639719272779137912676661,
    0.9931285991850949247861224};
inline constexpr std::array<double, 10> kGl20Weights = {
    0.1527533871307258506980843, 0.1491729864726037467878287, 0.1420961093183820513292983,
    0.1316886384491766268984945, 0.1181945319615184173123774, 0.1019301198172404350367501,
    0.0832767415767047487247581, 0.0626720483341090635695065, 0.0406014298003869413310400,
    0.0176140071391521183118620};

struct BSolution {
  double b;
  double denom;  // 2g e^{-g tau} + (g + kappa + beta c2)(1 - e^{-g tau}) > 0
  double one_minus_decay;
};

inline BSolution b_closed_form(double kappa, double beta, double gamma, double c1, double c2,
                               double tau) {
  const double decay = std::exp(-gamma * tau);
  const double omd = -std::expm1(-gamma * tau);
  const double denom = 2.0 * gamma * decay + (gamma + kappa + beta * c2) * omd;
  const double numer = 2.0 * c1 * omd + (gamma - kappa) * c2 + (gamma + kappa) * c2 * decay;
  return {numer / denom, denom, omd};
}

// A(tau) = int_0^tau (-kappa theta B + alpha/2 B^2) ds with the exact B(s).
inline double a_by_quadrature(double kappa, double theta, double alpha, double beta,
                              double gamma, double c1, double c2, double tau) {
  const double scale = std::max(gamma, 1e-12);
  const int panels = std::max(1, static_cast<int>(std::ceil(tau * scale / 2.0)));
  const double width = tau / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double mid = (k + 0.5) * width;
    const double half = 0.5 * width;
    double panel = 0.0;
    for (std::size_t i = 0; i < kGl20Nodes.size(); ++i) {
      for (int sign : {-1, 1}) {
        const double s = mid + sign * half * kGl20Nodes[i];
        const double b = b_closed_form(kappa, beta, gamma, c1, c2, s).b;
        panel += kGl20Weights[i] * (-kappa * theta * b + 0.5 * alpha * b * b);
      }
    }
    total += panel * half;
  }
  return total;
}

}  // namespace detail

/// Below this beta the Gaussian (beta = 0) limit formulas are used.
inline constexpr double kBetaLimitThreshold = 1e-10;

/// Closed-form (A, B) for E[exp(-c1 int X du - c2 X_tau)] = exp(A - B x).
///
/// The log term log(2g e^{(kappa - g) tau / 2} / denom) is evaluated as
/// (kappa - g) tau / 2 - log1p(h (1 - e^{-g tau})) with h = (kappa + beta c2 - g) / (2g),
/// which neither overflows for large g*tau nor loses digits for small g*tau. Where the alpha/beta^2 terms cancel
/// catastrophically, A falls back to Gauss-Legendre quadrature of its ODE using
/// the exact B; for beta below kBetaLimitThreshold the Gaussian limit is used.
inline AffineCoeffs affine_coefficients(const GcirParams& q, double c1, double c2, double tau) {
  RSGCIR_REQUIRE(tau >= 0.0 && std::isfinite(tau), ErrorCode::InvalidArgument,
                 "tau must be finite and nonnegative");
  AffineCoeffs out{0.0, c2, tau, c1, c2};
  if (tau == 0.0) return out;

  const double kappa = q.kappa();
  const double theta = q.theta();
  const double alpha = q.alpha();
  const double beta = q.beta();

  if (beta < kBetaLimitThreshold) {
    const double decay = std::exp(-kappa * tau);
    const double b_inf = c1 / kappa;
    const double d = c2 - b_inf;
    const double e1 = -std::expm1(-kappa * tau) / kappa;
    const double e2 = -std::expm1(-2.0 * kappa * tau) / (2.0 * kappa);
    const double int_b = b_inf * tau + d * e1;
    const double int_b2 = b_inf * b_inf * tau + 2.0 * b_inf * d * e1 + d * d * e2;
    out.b = b_inf + d * decay;
    out.a = -kappa * theta * int_b + 0.5 * alpha * int_b2;
    return out;
  }

  const double disc = kappa * kappa + 2.0 * beta * c1;
  RSGCIR_REQUIRE(disc > 0.0, ErrorCode::ComplexGamma,
                 "kappa^2 + 2 beta c1 = " + std::to_string(disc) + " <= 0");
  const double gamma = std::sqrt(disc);
  const auto bs = detail::b_closed_form(kappa, beta, gamma, c1, c2, tau);
  RSGCIR_REQUIRE(bs.denom > 0.0 && std::isfinite(bs.denom), ErrorCode::SingularDenominator,
                 "transform denominator is not positive (moment explosion)");
  out.b = bs.b;

  const double h = (kappa + beta * c2 - gamma) / (2.0 * gamma);
  const double log_term = 0.5 * (kappa - gamma) * tau - std::log1p(h * bs.one_minus_decay);
  const double t1 = alpha * c1 / beta * tau;
  const double t2 = -alpha / beta * (2.0 * c1 - 2.0 * kappa * c2 - beta * c2 * c2) *
                    bs.one_minus_decay / bs.denom;
  const double t3 = 2.0 * (beta * theta + alpha) * kappa / (beta * beta) * log_term;
  const double magnitude = std::abs(t1) + std::abs(t2) + std::abs(t3);
  // Absolute rounding error of the sum is ~ eps * magnitude.
  if (magnitude * std::numeric_limits<double>::epsilon() > 1e-13) {
    out.a = detail::a_by_quadrature(kappa, theta, alpha, beta, gamma, c1, c2, tau);
  } else {
    out.a = t1 + t2 + t3;
  }
  return out;
}

/// exp(a - b x); strictly positive.
inline double transform_value(const AffineCoeffs& coeffs, double x) {
  return std::exp(coeffs.a - coeffs.b * x);
}

/// Fixed-step RK4 integration of the Riccati system in tau = T - t:
///   dA/dtau = -kappa theta B + alpha/2 B^2,  dB/dtau = c1 - kappa B - beta/2 B^2,
/// from (A, B)(0) = (0, c2). Test oracle only.
inline AffineCoeffs riccati_oracle(const GcirParams& q, double c1, double c2, double tau,
                                   int steps = 10000) {
  RSGCIR_REQUIRE(steps >= 100, ErrorCode::InvalidArgument, "riccati_oracle needs >= 100 steps");
  AffineCoeffs out{0.0, c2, tau, c1, c2};
  if (tau == 0.0) return out;
  const double kt = q.kappa() * q.theta();
  const double k = q.kappa();
  const double al = q.alpha();
  const double be = q.beta();
  auto rhs = [&](double b) {
    return std::array<double, 2>{-kt * b + 0.5 * al * b * b, c1 - k * b - 0.5 * be * b * b};
  };
  const double h = tau / steps;
  double a = 0.0;
  double b = c2;
  for (int i = 0; i < steps; ++i) {
    const auto k1 = rhs(b);
    const auto k2 = rhs(b + 0.5 * h * k1[1]);
    const auto k3 = rhs(b + 0.5 * h * k2[1]);
    const auto k4 = rhs(b + h * k3[1]);
    a += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
    b += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
  }
  out.a = a;
  out.b = b;
  return out;
}

/// Textbook CIR zero-coupon coefficients (alpha = 0, c1 = 1, c2 = 0), evaluated
/// in extended precision.
inline AffineCoeffs classical_cir_discount(double kappa, double theta, double sigma2, double tau) {
  using ld = long double;
  const ld k = kappa, t = tau, s2 = sigma2;
  const ld gamma = std::sqrt(k * k + 2.0L * s2);
  const ld em1 = std::expm1(gamma * t);
  const ld denom = 2.0L * gamma + (gamma + k) * em1;
  AffineCoeffs out{0.0, 0.0, tau, 1.0, 0.0};
  out.b = static_cast<double>(2.0L * em1 / denom);
  out.a = static_cast<double>(2.0L * k * theta / s2 *
                              std::log(2.0L * gamma * std::exp(0.5L * (gamma + k) * t) / denom));
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_AFFINE_CORE_HPP
