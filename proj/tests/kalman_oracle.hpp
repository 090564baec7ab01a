#ifndef RSGCIR_TESTS_KALMAN_ORACLE_HPP
#define RSGCIR_TESTS_KALMAN_ORACLE_HPP

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "rsgcir/filters.hpp"

namespace rsgcir::testing {

/// x' = c + F x + N(0, Q); y = a + H x + N(0, R).
struct LinearModel {
  Vec c;
  Mat f;
  Mat q;
  Vec a;
  Mat h;
  Vec r_sd;

  TransitionFn transition() const {
    return [*this](const Vec& x) { return StateMoments{c + f * x, q}; };
  }
  MeasurementFn measurement() const {
    return [*this](const Vec& x) -> Vec { return a + h * x; };
  }
};

inline Mat random_spd(std::mt19937_64& gen, int d, double scale) {
  std::normal_distribution<double> n;
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = n(gen);
  return scale * (a * a.transpose() + 0.1 * Mat::Identity(d, d));
}

inline LinearModel linear_model(std::mt19937_64& gen, int d, int m) {
  std::normal_distribution<double> n;
  LinearModel lm;
  lm.c = Vec(d);
  lm.f = Mat(d, d);
  lm.a = Vec(m);
  lm.h = Mat(m, d);
  lm.r_sd = Vec(m);
  for (int i = 0; i < d; ++i) {
    lm.c(i) = 0.1 * n(gen);
    for (int j = 0; j < d; ++j) lm.f(i, j) = (i == j ? 0.9 : 0.0) + 0.05 * n(gen);
  }
  lm.q = random_spd(gen, d, 0.01);
  for (int i = 0; i < m; ++i) {
    lm.a(i) = 0.1 * n(gen);
    lm.r_sd(i) = 0.05 + 0.05 * std::abs(n(gen));
    for (int j = 0; j < d; ++j) lm.h(i, j) = n(gen);
  }
  return lm;
}

inline std::vector<Vec> simulate_linear(std::mt19937_64& gen, const LinearModel& lm, Vec x, int T) {
  std::normal_distribution<double> n;
  std::vector<Vec> ys;
  const Mat lq = lm.q.llt().matrixL();
  for (int t = 0; t < T; ++t) {
    Vec z(x.size());
    for (auto& v : z) v = n(gen);
    x = lm.c + lm.f * x + lq * z;
    Vec y = lm.a + lm.h * x;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += lm.r_sd(i) * n(gen);
    ys.push_back(y);
  }
  return ys;
}

struct KalmanStep {
  GaussianBelief filtered;
  double loglik = 0.0;
};

/// Textbook Kalman filter step; NaN observations are dropped.
inline KalmanStep kalman_step(const GaussianBelief& prev, const Vec& y, const LinearModel& m) {
  GaussianBelief pred{m.c + m.f * prev.mean, m.f * prev.cov * m.f.transpose() + m.q};
  std::vector<int> obs;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isnan(y(i))) obs.push_back(static_cast<int>(i));
  if (obs.empty()) return {pred, 0.0};
  const int n = static_cast<int>(obs.size());
  Mat h(n, pred.mean.size());
  Vec v(n), r(n);
  for (int i = 0; i < n; ++i) {
    h.row(i) = m.h.row(obs[i]);
    v(i) = y(obs[i]) - m.a(obs[i]) - m.h.row(obs[i]).dot(pred.mean);
    r(i) = m.r_sd(obs[i]) * m.r_sd(obs[i]);
  }
  Mat s = h * pred.cov * h.transpose();
  s.diagonal() += r;
  const Mat sinv = s.inverse();
  const Mat k = pred.cov * h.transpose() * sinv;
  KalmanStep out;
  out.filtered.mean = pred.mean + k * v;
  out.filtered.cov = pred.cov - k * s * k.transpose();
  out.loglik = -0.5 * (n * std::log(2 * std::numbers::pi) + std::log(s.determinant()) + v.dot(sinv * v));
  return out;
}

/// Exact regime-switching likelihood by enumerating every regime path s_0..s_T.
inline double path_enumeration_loglik(const std::vector<LinearModel>& regimes, const Mat& p,
                                      const Vec& pi0, const std::vector<GaussianBelief>& priors,
                                      const std::vector<Vec>& ys) {
  const int k = static_cast<int>(regimes.size());
  const int T = static_cast<int>(ys.size());
  long total = 1;
  for (int t = 0; t <= T; ++t) total *= k;
  std::vector<double> terms;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<int> path(T + 1);
    for (int t = 0; t <= T; ++t) {
      path[t] = static_cast<int>(c % k);
      c /= k;
    }
    double lp = std::log(pi0(path[0]));
    GaussianBelief b = priors[path[0]];
    for (int t = 1; t <= T; ++t) {
      lp += std::log(p(path[t - 1], path[t]));
      const auto step = kalman_step(b, ys[t - 1], regimes[path[t]]);
      lp += step.loglik;
      b = step.filtered;
    }
    terms.push_back(lp);
  }
  return logsumexp(terms);
}

inline std::vector<RegimeModel> as_regimes(const std::vector<LinearModel>& lms) {
  std::vector<RegimeModel> out;
  for (const auto& lm : lms) out.push_back({lm.transition(), lm.measurement(), lm.r_sd});
  return out;
}

// Collapsed minus exact log-likelihood on the pinned T = 5 instance below.
constexpr double kGrayGap = -0.066062596804013052;

struct GrayGap {
  double exact = 0.0;
  double approx = 0.0;
};

/// Two linear regimes, T = 5: RS-UKF (Gray collapse) against path enumeration.
inline GrayGap pinned_gray_gap() {
  std::mt19937_64 gen(21);
  auto a = linear_model(gen, 2, 3);
  auto b = a;
  b.c += Eigen::Vector2d(0.15, -0.1);
  b.q *= 3.0;
  b.r_sd *= 1.5;
  Mat p(2, 2);
  p << 0.85, 0.15, 0.25, 0.75;
  const Eigen::Vector2d pi0(0.6, 0.4);
  const std::vector<GaussianBelief> priors{{Vec::Zero(2), 0.05 * Mat::Identity(2, 2)},
                                           {Eigen::Vector2d(0.1, 0.0), 0.08 * Mat::Identity(2, 2)}};
  const auto ys = simulate_linear(gen, b, Vec::Zero(2), 5);
  GrayGap g;
  g.exact = path_enumeration_loglik({a, b}, p, pi0, priors, ys);
  RsState rs{priors, pi0};
  for (const auto& y : ys) {
    const auto r = rs_ukf_step(rs, y, as_regimes({a, b}), p);
    g.approx += r.loglik;
    rs = r.filtered;
  }
  return g;
}

}  // namespace rsgcir::testing

#endif  // RSGCIR_TESTS_KALMAN_ORACLE_HPP
