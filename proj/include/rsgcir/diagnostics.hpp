#ifndef RSGCIR_DIAGNOSTICS_HPP
#define RSGCIR_DIAGNOSTICS_HPP

// Gaussian hidden Markov models used as a reduced-form regime diagnostic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"
#include "rsgcir/parallel.hpp"
#include "rsgcir/rng.hpp"

namespace rsgcir {

enum class CovarianceType { Full, Diagonal };

struct HmmModel {
  std::vector<Vec> means;
  std::vector<Mat> covs;
  Mat trans;  // trans(i, j) = P(S_t = j | S_{t-1} = i)
  Vec init;

  int states() const { return static_cast<int>(means.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  /// Scalar level of state j: the average of its mean vector.
  double level(int j) const { return means.at(j).mean(); }

  void validate() const {
    const int k = states();
    RSGCIR_REQUIRE(k >= 1, ErrorCode::InvalidArgument, "HMM needs at least one state");
    RSGCIR_REQUIRE(static_cast<int>(covs.size()) == k && trans.rows() == k && trans.cols() == k &&
                       init.size() == k,
                   ErrorCode::DimensionMismatch, "HMM component shapes disagree");
    for (int j = 0; j < k; ++j) {
      RSGCIR_REQUIRE(means[j].size() == dim() && covs[j].rows() == dim() && covs[j].cols() == dim(),
                     ErrorCode::DimensionMismatch, "HMM emission shapes disagree");
      RSGCIR_REQUIRE(std::abs(trans.row(j).sum() - 1.0) < 1e-8 && trans.row(j).minCoeff() >= 0.0,
                     ErrorCode::InvalidArgument, "HMM transition rows must be stochastic");
    }
    RSGCIR_REQUIRE(std::abs(init.sum() - 1.0) < 1e-8 && init.minCoeff() >= 0.0,
                   ErrorCode::InvalidArgument, "HMM initial distribution must sum to one");
  }
};

/// Per-date, per-state Gaussian log densities (T x K). Missing entries (NaN) are
/// marginalized out; a fully missing row contributes zero.
inline Mat emission_logpdf(const HmmModel& m, const Mat& y) {
  const int k = m.states();
  const Eigen::Index t_len = y.rows();
  RSGCIR_REQUIRE(y.cols() == m.dim(), ErrorCode::DimensionMismatch, "panel width != HMM dimension");
  Mat out(t_len, k);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (int j = 0; j < k; ++j) {
    Eigen::LLT<Mat> full(m.covs[j]);
    RSGCIR_REQUIRE(full.info() == Eigen::Success, ErrorCode::CholeskyFailure,
                   "HMM covariance not positive definite");
    const double logdet_full = 2.0 * full.matrixL().toDenseMatrix().diagonal().array().log().sum();
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const auto row = y.row(t);
      if (row.array().isFinite().all()) {
        const Vec r = row.transpose() - m.means[j];
        const Vec z = full.matrixL().solve(r);
        out(t, j) = -0.5 * (m.dim() * log2pi + logdet_full + z.squaredNorm());
        continue;
      }
      std::vector<Eigen::Index> obs;
      for (Eigen::Index c = 0; c < row.size(); ++c)
        if (std::isfinite(row(c))) obs.push_back(c);
      if (obs.empty()) {
        out(t, j) = 0.0;
        continue;
      }
      const auto n = static_cast<Eigen::Index>(obs.size());
      Mat s(n, n);
      Vec r(n);
      for (Eigen::Index a = 0; a < n; ++a) {
        r(a) = row(obs[a]) - m.means[j](obs[a]);
        for (Eigen::Index b = 0; b < n; ++b) s(a, b) = m.covs[j](obs[a], obs[b]);
      }
      Eigen::LLT<Mat> sub(s);
      const Vec z = sub.matrixL().solve(r);
      const double logdet = 2.0 * sub.matrixL().toDenseMatrix().diagonal().array().log().sum();
      out(t, j) = -0.5 * (n * log2pi + logdet + z.squaredNorm());
    }
  }
  return out;
}

struct ForwardBackward {
  Mat smoothed;    // T x K, rows sum to one
  Mat filtered;    // T x K
  Mat xi_sum;      // K x K expected transition counts
  double loglik = 0.0;
};

/// Scaled forward-backward pass; the log of the per-step normalizers
/// accumulates into the log-likelihood.
inline ForwardBackward forward_backward(const HmmModel& m, const Mat& y) {
  m.validate();
  const int k = m.states();
  const Eigen::Index t_len = y.rows();
  const Mat logb = emission_logpdf(m, y);
  Mat b(t_len, k);
  Vec shift(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    shift(t) = logb.row(t).maxCoeff();
    b.row(t) = (logb.row(t).array() - shift(t)).exp();
  }

  ForwardBackward fb;
  fb.filtered.resize(t_len, k);
  Vec c(t_len);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Vec a = t == 0 ? Vec(m.init) : Vec(m.trans.transpose() * fb.filtered.row(t - 1).transpose());
    a.array() *= b.row(t).transpose().array();
    c(t) = a.sum();
    RSGCIR_REQUIRE(c(t) > 0.0 && std::isfinite(c(t)), ErrorCode::ZeroMixtureLikelihood,
                   "HMM forward pass lost all mass at date " + std::to_string(t));
    fb.filtered.row(t) = a.transpose() / c(t);
    fb.loglik += std::log(c(t)) + shift(t);
  }

  Mat beta = Mat::Ones(t_len, k);
  for (Eigen::Index t = t_len - 2; t >= 0; --t) {
    const Vec next = b.row(t + 1).transpose().cwiseProduct(beta.row(t + 1).transpose());
    beta.row(t) = (m.trans * next).transpose() / c(t + 1);
  }
  fb.smoothed = fb.filtered.cwiseProduct(beta);
  for (Eigen::Index t = 0; t < t_len; ++t) fb.smoothed.row(t) /= fb.smoothed.row(t).sum();

  fb.xi_sum = Mat::Zero(k, k);
  for (Eigen::Index t = 0; t + 1 < t_len; ++t) {
    const Vec next = b.row(t + 1).transpose().cwiseProduct(beta.row(t + 1).transpose());
    fb.xi_sum += (fb.filtered.row(t).transpose() * next.transpose()).cwiseProduct(m.trans) / c(t + 1);
  }
  return fb;
}

inline double hmm_loglik(const HmmModel& m, const Mat& y) { return forward_backward(m, y).loglik; }

struct HmmOptions {
  int restarts = 10;
  int max_iter = 500;
  double tol = 1e-8;  // relative log-likelihood change
  CovarianceType cov = CovarianceType::Full;
  double cov_floor = 1e-8;
  int threads = 1;
};

struct HmmFit {
  HmmModel model;
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;  // log-likelihood before each M-step
  int iterations = 0;
  bool converged = false;
  int restart = 0;                  // index of the winning initialization
  std::vector<int> degenerate;      // states with effective weight below two observations
  int dropped_rows = 0;
};

namespace detail {

inline Mat complete_rows(const Mat& y, int& dropped) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    if (y.row(t).array().isFinite().all()) keep.push_back(t);
  dropped = static_cast<int>(y.rows() - static_cast<Eigen::Index>(keep.size()));
  Mat out(static_cast<Eigen::Index>(keep.size()), y.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = y.row(keep[i]);
  return out;
}

inline Mat weighted_cov(const Mat& y, const Vec& w, const Vec& mean, CovarianceType type) {
  const Mat centered = y.rowwise() - mean.transpose();
  Mat s = centered.transpose() * w.asDiagonal() * centered / w.sum();
  if (type == CovarianceType::Diagonal) s = Mat(s.diagonal().asDiagonal());
  return symmetrize(s);
}

inline Mat floor_cov(const Mat& s, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if (es.eigenvalues().minCoeff() >= floor) return s;
  return floor_eigenvalues(s, floor);
}

/// k-means++ seeding followed by a few Lloyd sweeps; returns hard labels.
inline std::vector<int> kmeans_labels(const Mat& y, int k, Philox4x32& rng) {
  const Eigen::Index t_len = y.rows();
  std::vector<Vec> centers;
  centers.push_back(y.row(static_cast<Eigen::Index>(rng.below(t_len))).transpose());
  Vec d2(t_len);
  while (static_cast<int>(centers.size()) < k) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (y.row(t).transpose() - c).squaredNorm());
      d2(t) = best;
    }
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (; pick < t_len - 1; ++pick) {
        u -= d2(pick);
        if (u <= 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(t_len));
    }
    centers.push_back(y.row(pick).transpose());
  }

  std::vector<int> label(t_len, 0);
  for (int sweep = 0; sweep < 20; ++sweep) {
    bool changed = false;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      int arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (y.row(t).transpose() - centers[j]).squaredNorm();
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      changed |= label[t] != arg;
      label[t] = arg;
    }
    if (!changed && sweep > 0) break;
    for (int j = 0; j < k; ++j) {
      Vec sum = Vec::Zero(y.cols());
      int n = 0;
      for (Eigen::Index t = 0; t < t_len; ++t)
        if (label[t] == j) {
          sum += y.row(t).transpose();
          ++n;
        }
      if (n > 0) centers[j] = sum / n;
    }
  }
  return label;
}

inline HmmModel initial_model(const Mat& y, int k, const HmmOptions& opt, Philox4x32& rng) {
  const std::vector<int> label = kmeans_labels(y, k, rng);
  const Vec ones = Vec::Ones(y.rows());
  const Vec pooled_mean = y.colwise().mean().transpose();
  const Mat pooled = floor_cov(weighted_cov(y, ones, pooled_mean, opt.cov), opt.cov_floor);
  HmmModel m;
  for (int j = 0; j < k; ++j) {
    Vec w(y.rows());
    for (Eigen::Index t = 0; t < y.rows(); ++t) w(t) = label[t] == j ? 1.0 : 0.0;
    if (w.sum() < static_cast<double>(y.cols()) + 1.0) {
      m.means.push_back(w.sum() > 0.0 ? Vec(y.transpose() * w / w.sum()) : pooled_mean);
      m.covs.push_back(pooled);
      continue;
    }
    const Vec mean = y.transpose() * w / w.sum();
    m.means.push_back(mean);
    m.covs.push_back(floor_cov(weighted_cov(y, w, mean, opt.cov), opt.cov_floor));
  }
  m.trans = k == 1 ? Mat::Ones(1, 1) : Mat::Constant(k, k, 0.1 / (k - 1));
  if (k > 1) m.trans.diagonal().setConstant(0.9);
  m.init = Vec::Constant(k, 1.0 / k);
  return m;
}

inline HmmModel m_step(const Mat& y, const ForwardBackward& fb, const HmmOptions& opt,
                       std::vector<int>& degenerate) {
  const auto k = fb.smoothed.cols();
  HmmModel m;
  m.init = fb.smoothed.row(0).transpose();
  m.trans = fb.xi_sum;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double row = m.trans.row(i).sum();
    if (row > 0.0) {
      m.trans.row(i) /= row;
    } else {
      m.trans.row(i).setZero();
      m.trans(i, i) = 1.0;
    }
  }
  degenerate.clear();
  for (Eigen::Index j = 0; j < k; ++j) {
    const Vec w = fb.smoothed.col(j);
    const double mass = w.sum();
    if (mass < 2.0) degenerate.push_back(static_cast<int>(j));
    if (mass <= 0.0) {
      m.means.push_back(y.colwise().mean().transpose());
      m.covs.push_back(Mat::Identity(y.cols(), y.cols()) * opt.cov_floor);
      continue;
    }
    const Vec mean = y.transpose() * w / mass;
    m.means.push_back(mean);
    m.covs.push_back(floor_cov(weighted_cov(y, w, mean, opt.cov), opt.cov_floor));
  }
  return m;
}

inline HmmFit run_em(const Mat& y, HmmModel m, const HmmOptions& opt) {
  HmmFit fit;
  for (int it = 0; it < opt.max_iter; ++it) {
    const ForwardBackward fb = forward_backward(m, y);
    fit.trace.push_back(fb.loglik);
    fit.model = m;
    fit.loglik = fb.loglik;
    fit.iterations = it;
    if (it > 0) {
      const double prev = fit.trace[fit.trace.size() - 2];
      if (std::abs(fb.loglik - prev) <= opt.tol * std::abs(prev)) {
        fit.converged = true;
        break;
      }
    }
    m = m_step(y, fb, opt, fit.degenerate);
  }
  return fit;
}

}  // namespace detail

inline std::vector<int> level_order(const HmmModel& m) {
  std::vector<int> order(m.states());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return m.level(a) < m.level(b); });
  return order;
}

/// Reorders states by ascending mean level, so state 0 is L and the last is H.
inline HmmModel relabel_by_level(const HmmModel& m) {
  const int k = m.states();
  const std::vector<int> order = level_order(m);
  HmmModel out;
  out.trans.resize(k, k);
  out.init.resize(k);
  for (int i = 0; i < k; ++i) {
    out.means.push_back(m.means[order[i]]);
    out.covs.push_back(m.covs[order[i]]);
    out.init(i) = m.init(order[i]);
    for (int j = 0; j < k; ++j) out.trans(i, j) = m.trans(order[i], order[j]);
  }
  return out;
}

/// Baum-Welch with k-means++ seeded restarts. Restart r draws from stream
/// kHmm + r; ties in log-likelihood go to the lower restart index.
inline HmmFit fit_hmm(const Mat& y, int k, std::uint64_t seed, const HmmOptions& opt = {}) {
  RSGCIR_REQUIRE(k >= 1, ErrorCode::InvalidArgument, "K must be at least 1");
  RSGCIR_REQUIRE(opt.restarts >= 1, ErrorCode::InvalidArgument, "restarts must be at least 1");
  int dropped = 0;
  const Mat data = detail::complete_rows(y, dropped);
  if (dropped > 0) logger()->warn("fit_hmm: dropped {} rows with missing values", dropped);
  RSGCIR_REQUIRE(data.rows() > 10 * k, ErrorCode::InvalidArgument,
                 "fit_hmm needs more than 10K complete rows");

  std::vector<HmmFit> fits(opt.restarts);
  parallel_for(fits.size(), opt.threads, [&](std::size_t r) {
    Philox4x32 rng(seed, streams::kHmm + r);
    fits[r] = detail::run_em(data, detail::initial_model(data, k, opt, rng), opt);
    fits[r].restart = static_cast<int>(r);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < fits.size(); ++r)
    if (fits[r].loglik > fits[best].loglik) best = r;

  HmmFit out = std::move(fits[best]);
  const std::vector<int> order = level_order(out.model);
  for (int& d : out.degenerate)
    d = static_cast<int>(std::find(order.begin(), order.end(), d) - order.begin());
  out.model = relabel_by_level(out.model);
  out.dropped_rows = dropped;
  if (!out.degenerate.empty())
    logger()->warn("fit_hmm: {} state(s) carry fewer than two observations (DegenerateComponent)",
                   out.degenerate.size());
  if (!out.converged) logger()->warn("fit_hmm: EM stopped at {} iterations", opt.max_iter);
  return out;
}

struct InformationCriteria {
  int params = 0;
  double aic = 0.0;
  double bic = 0.0;
};

inline int hmm_parameter_count(int k, int m, CovarianceType cov = CovarianceType::Full) {
  const int cov_params = cov == CovarianceType::Full ? k * m * (m + 1) / 2 : k * m;
  return k * m + cov_params + k * (k - 1) + (k - 1);
}

inline InformationCriteria information_criteria(double loglik, int k, int m, int t_len,
                                                CovarianceType cov = CovarianceType::Full) {
  RSGCIR_REQUIRE(t_len > 0, ErrorCode::InvalidArgument, "T must be positive");
  InformationCriteria ic;
  ic.params = hmm_parameter_count(k, m, cov);
  ic.aic = -2.0 * loglik + 2.0 * ic.params;
  ic.bic = -2.0 * loglik + ic.params * std::log(static_cast<double>(t_len));
  return ic;
}

/// Expected regime durations delta / (1 - p_ii), in the units of delta.
inline Vec regime_durations(const Mat& trans, double delta) {
  RSGCIR_REQUIRE(trans.rows() == trans.cols(), ErrorCode::DimensionMismatch, "trans must be square");
  Vec d(trans.rows());
  for (Eigen::Index i = 0; i < trans.rows(); ++i) {
    RSGCIR_REQUIRE(trans(i, i) < 1.0, ErrorCode::AbsorbingState,
                   "state " + std::to_string(i) + " is absorbing");
    d(i) = delta / (1.0 - trans(i, i));
  }
  return d;
}

struct Classification {
  std::vector<int> states;
  Mat probs;  // smoothed, T x K
  double loglik = 0.0;
};

/// Smoothed-probability classification (argmax; the 0.5 cut for K = 2).
/// States are ordered by level first, so labels do not depend on the fit's ordering.
inline Classification classify(const HmmModel& model, const Mat& y) {
  const HmmModel m = relabel_by_level(model);
  const ForwardBackward fb = forward_backward(m, y);
  Classification c;
  c.probs = fb.smoothed;
  c.loglik = fb.loglik;
  c.states.resize(y.rows());
  for (Eigen::Index t = 0; t < y.rows(); ++t) {
    Eigen::Index arg = 0;
    c.probs.row(t).maxCoeff(&arg);
    c.states[t] = static_cast<int>(arg);
  }
  return c;
}

struct RegimeMoments {
  int count = 0;
  double weight = 0.0;
  double mean_level = 0.0;
  double dispersion = 0.0;  // trace of the emission covariance
};

inline std::vector<RegimeMoments> regime_moments(const HmmModel& model, const Classification& c) {
  const HmmModel m = relabel_by_level(model);
  std::vector<RegimeMoments> out(m.states());
  for (int s : c.states) ++out.at(s).count;
  for (int j = 0; j < m.states(); ++j) {
    out[j].weight = c.states.empty() ? 0.0 : static_cast<double>(out[j].count) / c.states.size();
    out[j].mean_level = m.level(j);
    out[j].dispersion = m.covs[j].trace();
  }
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_DIAGNOSTICS_HPP
