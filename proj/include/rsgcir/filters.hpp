#ifndef RSGCIR_FILTERS_HPP
#define RSGCIR_FILTERS_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "rsgcir/affine_core.hpp"
#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"
#include "rsgcir/model.hpp"
#include "rsgcir/panel.hpp"
#include "rsgcir/pricing.hpp"
#include "rsgcir/regimes.hpp"

namespace rsgcir {

struct GaussianBelief {
  Vec mean;
  Mat cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

struct UtParams {
  double alpha = 1e-1;
  double beta = 2.0;
  double kappa = 0.0;
};

enum class FilterKind { Ukf, Ekf };

struct SigmaSet {
  std::vector<Vec> points;
  Vec wm;
  Vec wc;
};

/// Lower square root of a PSD matrix: Cholesky, falling back to a symmetric eigen
/// root with eigenvalues in [-1e-10 scale, 0) jittered to zero.
inline Mat psd_sqrt(const Mat& cov) {
  const Mat c = symmetrize(cov);
  Eigen::LLT<Mat> llt(c);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Mat> es(c);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  RSGCIR_REQUIRE(es.eigenvalues().minCoeff() >= -1e-10 * scale, ErrorCode::CholeskyFailure,
                 "covariance is not positive semidefinite");
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Scaled unscented transform: 2d + 1 points at mean +- sqrt(d + lambda) S e_i.
inline SigmaSet sigma_points(const GaussianBelief& b, const UtParams& ut = {}) {
  const int d = b.dim();
  const double lambda = ut.alpha * ut.alpha * (d + ut.kappa) - d;
  const double c = d + lambda;
  RSGCIR_REQUIRE(c > 0.0, ErrorCode::InvalidArgument, "unscented spread d + lambda must be positive");
  const Mat s = std::sqrt(c) * psd_sqrt(b.cov);
  SigmaSet out;
  out.points.reserve(2 * d + 1);
  out.points.push_back(b.mean);
  for (int i = 0; i < d; ++i) out.points.push_back(b.mean + s.col(i));
  for (int i = 0; i < d; ++i) out.points.push_back(b.mean - s.col(i));
  out.wm = Vec::Constant(2 * d + 1, 0.5 / c);
  out.wc = out.wm;
  out.wm(0) = lambda / c;
  out.wc(0) = lambda / c + (1.0 - ut.alpha * ut.alpha + ut.beta);
  return out;
}

// ---------------------------------------------------------------------------
// Transition moments

/// Exact conditional variance of a GCIR factor over delta from x.
inline double gcir_conditional_variance(const GcirParams& p, double x, double delta) {
  const double k = p.kappa();
  const double e1 = std::exp(-k * delta);
  const double e2 = e1 * e1;
  const double v = p.alpha() * (1.0 - e2) / (2.0 * k) +
                   p.beta() * (p.theta() * (1.0 - e2) / (2.0 * k) + (x - p.theta()) * (e1 - e2) / k);
  return std::max(v, 0.0);
}

struct StateMoments {
  Vec mean;
  Mat cov;
};

/// One-step conditional mean and covariance with the regime frozen over delta.
/// Cross-factor covariance is D^{1/2} Omega D^{1/2} with D the exact variances.
inline StateMoments state_moments(const Vec& x, const std::vector<GcirParams>& params,
                                  const Mat& omega, double delta) {
  const int d = static_cast<int>(x.size());
  RSGCIR_REQUIRE(static_cast<int>(params.size()) == d && omega.rows() == d && omega.cols() == d,
                 ErrorCode::DimensionMismatch, "state_moments dimensions disagree");
  StateMoments out{Vec(d), Mat(d, d)};
  Vec sd(d);
  for (int k = 0; k < d; ++k) {
    const auto& p = params[k];
    out.mean(k) = p.theta() + (x(k) - p.theta()) * std::exp(-p.kappa() * delta);
    sd(k) = std::sqrt(gcir_conditional_variance(p, x(k), delta));
  }
  out.cov = sd.asDiagonal() * omega * sd.asDiagonal();
  return out;
}

using TransitionFn = std::function<StateMoments(const Vec&)>;
using MeasurementFn = std::function<Vec(const Vec&)>;

// ---------------------------------------------------------------------------
// Single-regime filter

struct UkfStepResult {
  GaussianBelief predicted;
  GaussianBelief filtered;
  double loglik = 0.0;
  Vec innovation;             // observed entries only
  Mat innovation_cov;         // S over observed entries
  std::vector<int> observed;  // indices of non-missing entries of y
};

/// Prediction: conditional means propagated through the sigma points, plus the
/// conditional covariance evaluated at the prior mean (exact when it is affine).
inline GaussianBelief ukf_predict(const GaussianBelief& prev, const TransitionFn& f,
                                  const UtParams& ut = {}) {
  const SigmaSet sp = sigma_points(prev, ut);
  std::vector<Vec> m;
  m.reserve(sp.points.size());
  for (const auto& p : sp.points) m.push_back(f(p).mean);
  GaussianBelief out;
  out.mean = Vec::Zero(prev.dim());
  for (std::size_t i = 0; i < m.size(); ++i) out.mean += sp.wm(i) * m[i];
  out.cov = f(prev.mean).cov;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Vec dm = m[i] - out.mean;
    out.cov += sp.wc(i) * dm * dm.transpose();
  }
  out.cov = symmetrize(out.cov);
  return out;
}

/// Measurement update; NaN entries of y are treated as missing and dropped.
inline UkfStepResult ukf_update(const GaussianBelief& predicted, const Vec& y, const MeasurementFn& h,
                                const Vec& noise_sd, const UtParams& ut = {},
                                FilterKind kind = FilterKind::Ukf) {
  UkfStepResult r;
  r.predicted = predicted;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isnan(y(i))) r.observed.push_back(static_cast<int>(i));
  const int n = static_cast<int>(r.observed.size());
  if (n == 0) {
    r.filtered = predicted;
    return r;
  }
  RSGCIR_REQUIRE(noise_sd.size() == y.size(), ErrorCode::DimensionMismatch,
                 "noise vector does not match observations");
  auto select = [&](const Vec& full) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = full(r.observed[i]);
    return v;
  };
  const int d = predicted.dim();
  Vec y_hat(n);
  Mat s(n, n), pxy(d, n);
  if (kind == FilterKind::Ukf) {
    const SigmaSet sp = sigma_points(predicted, ut);
    std::vector<Vec> z;
    for (const auto& p : sp.points) z.push_back(select(h(p)));
    y_hat.setZero();
    for (std::size_t i = 0; i < z.size(); ++i) y_hat += sp.wm(i) * z[i];
    s.setZero();
    pxy.setZero();
    for (std::size_t i = 0; i < z.size(); ++i) {
      const Vec dz = z[i] - y_hat;
      s += sp.wc(i) * dz * dz.transpose();
      pxy += sp.wc(i) * (sp.points[i] - predicted.mean) * dz.transpose();
    }
  } else {
    y_hat = select(h(predicted.mean));
    Mat jac(n, d);
    for (int k = 0; k < d; ++k) {
      const double step = 1e-6 * std::max(1.0, std::abs(predicted.mean(k)));
      Vec up = predicted.mean, dn = predicted.mean;
      up(k) += step;
      dn(k) -= step;
      jac.col(k) = (select(h(up)) - select(h(dn))) / (2.0 * step);
    }
    s = jac * predicted.cov * jac.transpose();
    pxy = predicted.cov * jac.transpose();
  }
  s.diagonal() += select(noise_sd).array().square().matrix();
  s = symmetrize(s);

  Eigen::LLT<Mat> llt(s);
  if (llt.info() != Eigen::Success) llt.compute(s + 1e-10 * Mat::Identity(n, n));
  RSGCIR_REQUIRE(llt.info() == Eigen::Success, ErrorCode::SingularInnovationCov,
                 "innovation covariance is not positive definite");
  r.innovation = select(y) - y_hat;
  r.innovation_cov = s;
  const Mat gain = llt.solve(pxy.transpose()).transpose();
  r.filtered.mean = predicted.mean + gain * r.innovation;
  r.filtered.cov = symmetrize(predicted.cov - gain * s * gain.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(r.filtered.cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 0.0) r.filtered.cov = floor_eigenvalues(r.filtered.cov, 0.0);
  const Mat l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  const Vec w = l.triangularView<Eigen::Lower>().solve(r.innovation);
  r.loglik = -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det + w.squaredNorm());
  return r;
}

inline UkfStepResult ukf_step(const GaussianBelief& prev, const Vec& y, const TransitionFn& f,
                              const MeasurementFn& h, const Vec& noise_sd, const UtParams& ut = {},
                              FilterKind kind = FilterKind::Ukf) {
  return ukf_update(ukf_predict(prev, f, ut), y, h, noise_sd, ut, kind);
}

// ---------------------------------------------------------------------------
// Regime switching

/// Moment-matched single Gaussian for a regime mixture.
inline GaussianBelief gray_collapse(const Vec& probs, const std::vector<GaussianBelief>& beliefs) {
  RSGCIR_REQUIRE(static_cast<Eigen::Index>(beliefs.size()) == probs.size() && !beliefs.empty(),
                 ErrorCode::DimensionMismatch, "beliefs and probabilities disagree");
  if (beliefs.size() == 1) return beliefs.front();
  const int d = beliefs.front().dim();
  GaussianBelief out{Vec::Zero(d), Mat::Zero(d, d)};
  for (std::size_t j = 0; j < beliefs.size(); ++j) out.mean += probs(j) * beliefs[j].mean;
  for (std::size_t j = 0; j < beliefs.size(); ++j) {
    const Vec dm = beliefs[j].mean - out.mean;
    out.cov += probs(j) * (beliefs[j].cov + dm * dm.transpose());
  }
  out.cov = symmetrize(out.cov);
  return out;
}

struct RegimeModel {
  TransitionFn transition;
  MeasurementFn measurement;
  Vec noise_sd;
};

struct RsState {
  std::vector<GaussianBelief> posteriors;
  Vec probs;
};

struct RsStepResult {
  RsState filtered;
  Vec predicted_probs;
  Vec log_f;  // per-regime predictive log densities
  double loglik = 0.0;
};

/// Collapse, per-regime predict and update, Bayes update of regime probabilities.
inline RsStepResult rs_ukf_step(const RsState& prev, const Vec& y,
                                const std::vector<RegimeModel>& regimes, const Mat& p,
                                const UtParams& ut = {}, FilterKind kind = FilterKind::Ukf) {
  const int k = static_cast<int>(regimes.size());
  RSGCIR_REQUIRE(prev.probs.size() == k && p.rows() == k && p.cols() == k &&
                     static_cast<int>(prev.posteriors.size()) == k,
                 ErrorCode::DimensionMismatch, "regime counts disagree");
  const GaussianBelief collapsed = gray_collapse(prev.probs, prev.posteriors);
  RsStepResult r;
  r.predicted_probs = (prev.probs.transpose() * p).transpose();
  r.log_f.resize(k);
  r.filtered.posteriors.resize(k);
  std::vector<double> terms(k);
  for (int j = 0; j < k; ++j) {
    const auto step = ukf_step(collapsed, y, regimes[j].transition, regimes[j].measurement,
                               regimes[j].noise_sd, ut, kind);
    r.filtered.posteriors[j] = step.filtered;
    r.log_f(j) = step.loglik;
    terms[j] = std::log(r.predicted_probs(j)) + step.loglik;
  }
  r.loglik = logsumexp(terms);
  RSGCIR_REQUIRE(std::isfinite(r.loglik), ErrorCode::ZeroMixtureLikelihood,
                 "all regime likelihoods vanish");
  r.filtered.probs.resize(k);
  for (int j = 0; j < k; ++j) r.filtered.probs(j) = std::exp(terms[j] - r.loglik);
  r.filtered.probs /= r.filtered.probs.sum();
  return r;
}

// ---------------------------------------------------------------------------
// Model-level two-stage filter

struct FilterOptions {
  UtParams ut{};
  FilterKind kind = FilterKind::Ukf;
  std::optional<Vec4> anchor;  // pricing anchor; stationary physical mean by default
  double prior_inflation = 10.0;  // prior variance multiplier when theta differs across regimes
};

/// Observation columns [curve][maturity] for CGB then CDB.
inline Mat rate_observations(const CurvePanel& panel, const ModelSpec& m) {
  RSGCIR_REQUIRE(panel.maturities == m.measurement.maturities, ErrorCode::MaturityMismatch,
                 "panel maturities differ from the model's");
  const int nm = static_cast<int>(panel.maturities.size());
  Mat y(panel.size(), 2 * nm);
  y.leftCols(nm) = panel.segment("CGB");
  y.rightCols(nm) = panel.segment("CDB");
  return y;
}

/// Observation columns [observed rating][maturity].
inline Mat credit_observations(const CurvePanel& panel, const ModelSpec& m) {
  RSGCIR_REQUIRE(panel.maturities == m.measurement.maturities, ErrorCode::MaturityMismatch,
                 "panel maturities differ from the model's");
  const int nm = static_cast<int>(panel.maturities.size());
  const auto& ratings = m.measurement.credit_ratings;
  Mat y(panel.size(), static_cast<Eigen::Index>(ratings.size()) * nm);
  for (std::size_t i = 0; i < ratings.size(); ++i)
    y.middleCols(static_cast<Eigen::Index>(i) * nm, nm) = panel.segment(m.rating_labels.at(ratings[i]));
  return y;
}

/// Per-regime Gaussian priors: regime long-run levels and stationary variances.
inline std::vector<GaussianBelief> factor_priors(const ModelSpec& m, const std::vector<int>& factors,
                                                 int n_regimes, double inflation) {
  const int d = static_cast<int>(factors.size());
  std::vector<GaussianBelief> out(n_regimes, GaussianBelief{Vec(d), Mat::Zero(d, d)});
  for (int i = 0; i < d; ++i) {
    const int k = factors[i];
    bool differ = false;
    for (int s = 1; s < n_regimes; ++s) differ = differ || m.factor(k, s).p.theta() != m.factor(k, 0).p.theta();
    for (int s = 0; s < n_regimes; ++s) {
      out[s].mean(i) = m.factor(k, s).p.theta();
      out[s].cov(i, i) = m.factor(k, s).p.stationary_variance() * (differ ? inflation : 1.0);
    }
  }
  return out;
}

inline Vec initial_probs(const CtmcGenerator& g) {
  return is_irreducible(g) ? stationary_distribution(g) : Vec::Constant(g.size(), 1.0 / g.size());
}

inline PricingOptions filter_pricing_options(const ModelSpec& m, const FilterOptions& opt) {
  PricingOptions p;
  p.scheme = PricingScheme::Anchored;
  p.anchor = opt.anchor ? *opt.anchor : stationary_anchor(m);
  return p;
}

struct RateFilterOutput {
  double loglik = 0.0;
  Vec loglik_t;
  Mat probs;            // T x K filtered
  Mat predicted_probs;  // T x K
  std::vector<std::vector<GaussianBelief>> posteriors;  // [t][regime] over (X1, X2, X3)
  Mat collapsed_mean;   // T x 3
  Mat collapsed_sd;     // T x 3
  Mat fitted;           // T x 2M, price-level mixed model yields
};

/// Stage 1: RS-UKF over (X1, X2, X3) on CGB and CDB yields.
inline RateFilterOutput rate_block_filter(const Mat& y, const ModelSpec& m,
                                          const FilterOptions& opt = {}) {
  m.validate();
  const auto& mats = m.measurement.maturities;
  const int nm = static_cast<int>(mats.size());
  RSGCIR_REQUIRE(y.cols() == 2 * nm, ErrorCode::DimensionMismatch, "rate panel needs 2 x maturities columns");
  const int k = m.n_rate();
  const int T = static_cast<int>(y.rows());
  const auto ts = build_term_structures(m, mats, filter_pricing_options(m, opt), false);

  // Anchored terms make each regime's yield map affine: y = a + H x.
  std::vector<Vec> intercept(k, Vec(2 * nm));
  std::vector<Mat> loading(k, Mat(2 * nm, 3));
  for (int s = 0; s < k; ++s) {
    for (int c = 0; c < 2; ++c) {
      const auto& curve_ts = c == 0 ? ts.cgb : ts.cdb;
      for (int j = 0; j < nm; ++j) {
        const auto& term = curve_ts.terms(ts.steps[j], s).front();
        intercept[s](c * nm + j) = -term.logc / mats[j];
        loading[s].row(c * nm + j) = term.b.head<3>().transpose() / mats[j];
      }
    }
  }
  std::vector<RegimeModel> regimes(k);
  for (int s = 0; s < k; ++s) {
    std::vector<GcirParams> params;
    for (int f = 0; f < kNumRateFactors; ++f) params.push_back(m.factor(f, s).p);
    const double delta = m.grid_delta;
    const Mat omega = m.omega;
    regimes[s].transition = [params, omega, delta](const Vec& x) {
      return state_moments(x, params, omega, delta);
    };
    const Vec a = intercept[s];
    const Mat h = loading[s];
    regimes[s].measurement = [a, h](const Vec& x) -> Vec { return a + h * x; };
    regimes[s].noise_sd = Vec(2 * nm);
    regimes[s].noise_sd.head(nm).setConstant(m.measurement.rate_noise_sd(s, 0));
    regimes[s].noise_sd.tail(nm).setConstant(m.measurement.rate_noise_sd(s, 1));
  }
  const Mat p = transition_matrix(m.qr, m.grid_delta).p;

  RateFilterOutput out;
  out.loglik_t.resize(T);
  out.probs.resize(T, k);
  out.predicted_probs.resize(T, k);
  out.collapsed_mean.resize(T, 3);
  out.collapsed_sd.resize(T, 3);
  out.fitted.resize(T, 2 * nm);
  out.posteriors.reserve(T);
  RsState state{factor_priors(m, {0, 1, 2}, k, opt.prior_inflation), initial_probs(m.qr)};
  for (int t = 0; t < T; ++t) {
    auto step = rs_ukf_step(state, y.row(t).transpose(), regimes, p, opt.ut, opt.kind);
    state = std::move(step.filtered);
    out.loglik_t(t) = step.loglik;
    out.probs.row(t) = state.probs.transpose();
    out.predicted_probs.row(t) = step.predicted_probs.transpose();
    const auto c = gray_collapse(state.probs, state.posteriors);
    out.collapsed_mean.row(t) = c.mean.transpose();
    out.collapsed_sd.row(t) = c.cov.diagonal().cwiseMax(0.0).cwiseSqrt().transpose();
    for (int col = 0; col < 2 * nm; ++col) {
      const double tau = mats[col % nm];
      double price = 0.0;
      for (int s = 0; s < k; ++s)
        price += state.probs(s) * std::exp(-tau * regimes[s].measurement(state.posteriors[s].mean)(col));
      out.fitted(t, col) = price_to_yield(price, tau);
    }
    out.posteriors.push_back(state.posteriors);
  }
  out.loglik = out.loglik_t.sum();
  return out;
}

struct CreditFilterOutput {
  double loglik = 0.0;
  Vec loglik_t;
  std::vector<Mat> conditional_probs;  // [s_r] T x K_c, filtered pi^c(. | s_r)
  std::vector<Vec> conditional_loglik;  // [s_r] per-date predictive log densities
  Mat marginal_probs;                  // T x K_c
  Mat fitted;                          // T x (ratings x M)
};

/// Stage 2: for each rate regime, an RS-UKF over X4 on corporate yields priced at the
/// injected stage-1 regime-conditional rate state; densities mix over s_r with
/// the stage-1 filtered rate-regime probabilities.
inline CreditFilterOutput credit_block_filter(const Mat& y, const ModelSpec& m,
                                              const RateFilterOutput& rate,
                                              const FilterOptions& opt = {}) {
  m.validate();
  const auto& mats = m.measurement.maturities;
  const auto& ratings = m.measurement.credit_ratings;
  const int nm = static_cast<int>(mats.size());
  const int nobs = static_cast<int>(ratings.size()) * nm;
  RSGCIR_REQUIRE(y.cols() == nobs, ErrorCode::DimensionMismatch,
                 "credit panel needs ratings x maturities columns");
  const int T = static_cast<int>(y.rows());
  RSGCIR_REQUIRE(static_cast<int>(rate.posteriors.size()) == T, ErrorCode::DimensionMismatch,
                 "rate-block summaries do not cover the credit panel");
  const int kr = m.n_rate(), kc = m.n_credit();
  const auto ts = build_term_structures(m, mats, filter_pricing_options(m, opt), true);
  const Mat p = transition_matrix(m.qc, m.grid_delta).p;
  const auto priors = factor_priors(m, {3}, kc, opt.prior_inflation);
  const double delta = m.grid_delta;

  auto corporate_yields = [&](int joint, const Vec4& x) {
    Vec out(nobs);
    for (std::size_t i = 0; i < ratings.size(); ++i)
      for (int j = 0; j < nm; ++j)
        out(static_cast<Eigen::Index>(i) * nm + j) =
            price_to_yield(ts.corporate_price(m, ratings[i], j, joint, x), mats[j]);
    return out;
  };

  CreditFilterOutput out;
  out.loglik_t.resize(T);
  out.marginal_probs = Mat::Zero(T, kc);
  out.fitted.resize(T, nobs);
  Mat fitted_price = Mat::Zero(T, nobs);
  std::vector<std::vector<double>> mix_terms(T);
  for (int sr = 0; sr < kr; ++sr) {
    Mat cond(T, kc);
    Vec cond_ll(T);
    RsState state{priors, initial_probs(m.qc)};
    for (int t = 0; t < T; ++t) {
      const Vec x_rate = rate.posteriors[t][sr].mean;
      std::vector<RegimeModel> regimes(kc);
      for (int sc = 0; sc < kc; ++sc) {
        const std::vector<GcirParams> params{m.factor(3, sc).p};
        regimes[sc].transition = [params, delta](const Vec& x) {
          return state_moments(x, params, Mat::Identity(1, 1), delta);
        };
        const int joint = m.joint_index(sr, sc);
        regimes[sc].measurement = [&, joint, x_rate](const Vec& x4) {
          return corporate_yields(joint, Vec4(x_rate(0), x_rate(1), x_rate(2), x4(0)));
        };
        regimes[sc].noise_sd = Vec(nobs);
        for (std::size_t i = 0; i < ratings.size(); ++i)
          regimes[sc].noise_sd.segment(static_cast<Eigen::Index>(i) * nm, nm)
              .setConstant(m.measurement.credit_noise_sd(sc, static_cast<Eigen::Index>(i)));
      }
      auto step = rs_ukf_step(state, y.row(t).transpose(), regimes, p, opt.ut, opt.kind);
      state = std::move(step.filtered);
      cond.row(t) = state.probs.transpose();
      cond_ll(t) = step.loglik;
      const double pr = rate.probs(t, sr);
      mix_terms[t].push_back(std::log(pr) + step.loglik);
      out.marginal_probs.row(t) += pr * state.probs.transpose();
      for (int sc = 0; sc < kc; ++sc) {
        const double w = pr * state.probs(sc);
        if (w == 0.0) continue;
        const Vec yc = regimes[sc].measurement(state.posteriors[sc].mean);
        for (int col = 0; col < nobs; ++col) fitted_price(t, col) += w * std::exp(-mats[col % nm] * yc(col));
      }
    }
    out.conditional_probs.push_back(cond);
    out.conditional_loglik.push_back(cond_ll);
  }
  for (int t = 0; t < T; ++t) {
    out.loglik_t(t) = logsumexp(mix_terms[t]);
    RSGCIR_REQUIRE(std::isfinite(out.loglik_t(t)), ErrorCode::ZeroMixtureLikelihood,
                   "credit mixture likelihood vanishes");
    for (int col = 0; col < nobs; ++col) out.fitted(t, col) = price_to_yield(fitted_price(t, col), mats[col % nm]);
  }
  out.loglik = out.loglik_t.sum();
  return out;
}

// ---------------------------------------------------------------------------
// Fit statistics

struct PricingErrorStats {
  std::vector<double> mean_bp;
  std::vector<double> sd_bp;
  std::vector<double> rrmse;

  double average(const std::vector<double>& v) const {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
  }
};

/// Per column: mean and sd of observed - fitted in bp, and RMSE over the mean
/// observed yield. Missing observations are skipped.
inline PricingErrorStats pricing_error_stats(const Mat& observed, const Mat& fitted) {
  RSGCIR_REQUIRE(observed.rows() == fitted.rows() && observed.cols() == fitted.cols(),
                 ErrorCode::DimensionMismatch, "observed and fitted panels differ in shape");
  PricingErrorStats out;
  for (Eigen::Index c = 0; c < observed.cols(); ++c) {
    std::vector<double> e;
    double ybar = 0.0;
    for (Eigen::Index t = 0; t < observed.rows(); ++t) {
      if (std::isnan(observed(t, c))) continue;
      e.push_back(observed(t, c) - fitted(t, c));
      ybar += observed(t, c);
    }
    const double n = static_cast<double>(e.size());
    double mean = 0.0, ss = 0.0, sq = 0.0;
    for (double x : e) mean += x / n;
    for (double x : e) {
      ss += (x - mean) * (x - mean);
      sq += x * x;
    }
    out.mean_bp.push_back(1e4 * mean);
    out.sd_bp.push_back(e.size() > 1 ? 1e4 * std::sqrt(ss / (n - 1)) : 0.0);
    out.rrmse.push_back(std::sqrt(sq / n) / (ybar / n));
  }
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_FILTERS_HPP
