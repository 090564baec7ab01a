#ifndef RSGCIR_RATINGS_HPP
#define RSGCIR_RATINGS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <vector>

#include "rsgcir/affine_core.hpp"
#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"
#include "rsgcir/optim.hpp"
#include "rsgcir/rng.hpp"

namespace rsgcir {

inline const std::vector<std::string>& coarse_labels() {
  static const std::vector<std::string> labels{"AAA", "AA+", "AA", "AA-", "SG", "D"};
  return labels;
}

/// Fine-notch migration counts. The last coarse bucket is default.
struct MigrationCounts {
  Mat counts;  // N_ij, nonnegative
  std::vector<std::string> fine_labels;
  std::vector<std::string> bucket_map;  // fine label index -> coarse label
  std::vector<bool> is_default;         // fine label index -> default-tagged
  std::vector<std::string> coarse = coarse_labels();
};

struct RatingTransition {
  Mat p;
  Measure measure = Measure::P;
  double horizon = 1.0;

  int size() const { return static_cast<int>(p.rows()); }
  double default_prob(int i) const { return p(i, p.cols() - 1); }
};

/// Migration block Lambda (zero row sums) and default intensities nu.
struct RatingGenerator {
  Mat lambda_block;
  Vec nu;
  double reconstruction_error = 0.0;  // max |exp(G) - P| after projection, when embedded

  int nondefault() const { return static_cast<int>(nu.size()); }

  /// Loss-adjusted non-default block Lambda - diag(nu).
  Mat lambda_tilde() const {
    Mat out = lambda_block;
    out.diagonal() -= nu;
    return out;
  }

  /// Full K x K generator with absorbing last row.
  Mat full() const {
    const int n = nondefault();
    Mat q = Mat::Zero(n + 1, n + 1);
    q.topLeftCorner(n, n) = lambda_tilde();
    q.topRightCorner(n, 1) = nu;
    return q;
  }
};

struct LandoDecomposition {
  Vec d;                  // eigenvalues of Lambda - diag(nu), descending
  Mat eigvec;             // B
  Mat eigvec_inv;         // B^{-1} with default column appended, (K-1) x K
  Mat weights;            // w_ij
  double min_raw_weight = 0.0;
  bool nonnegative = true;
  double reconstruction_error = 0.0;
  double default_column_error = 0.0;

  /// 1 - P_iD(tau) under a constant unit driver.
  double survival(int i, double tau) const {
    double s = 0.0;
    for (Eigen::Index j = 0; j < d.size(); ++j) s += weights(i, j) * std::exp(d(j) * tau);
    return s;
  }
};

// ---------------------------------------------------------------------------

inline Mat fine_transition_probs(const MigrationCounts& c) {
  const Eigen::Index n = c.counts.rows();
  RSGCIR_REQUIRE(c.counts.cols() == n && static_cast<Eigen::Index>(c.is_default.size()) == n,
                 ErrorCode::DimensionMismatch, "counts must be square with one flag per label");
  Mat p = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (c.is_default[i]) {
      p(i, i) = 1.0;
      continue;
    }
    const double ni = c.counts.row(i).sum();
    RSGCIR_REQUIRE(ni > 0.0, ErrorCode::EmptyRow,
                   "fine rating " + (i < static_cast<Eigen::Index>(c.fine_labels.size())
                                         ? c.fine_labels[i]
                                         : std::to_string(i)) +
                       " has no obligors");
    p.row(i) = c.counts.row(i) / ni;
  }
  return p;
}

inline RatingTransition aggregate_to_coarse(const MigrationCounts& c) {
  const Eigen::Index n = c.counts.rows();
  const int k = static_cast<int>(c.coarse.size());
  RSGCIR_REQUIRE(static_cast<Eigen::Index>(c.bucket_map.size()) == n,
                 ErrorCode::DimensionMismatch, "bucket map must cover every fine label");
  std::vector<int> bucket(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = std::find(c.coarse.begin(), c.coarse.end(), c.bucket_map[i]);
    RSGCIR_REQUIRE(it != c.coarse.end(), ErrorCode::InvalidArgument,
                   "unknown bucket " + c.bucket_map[i]);
    bucket[i] = static_cast<int>(it - c.coarse.begin());
    RSGCIR_REQUIRE((bucket[i] == k - 1) == static_cast<bool>(c.is_default[i]),
                   ErrorCode::InvalidArgument,
                   "only default-tagged fine states may map to the default bucket");
  }
  Mat num = Mat::Zero(k, k);
  Vec den = Vec::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (c.is_default[i]) continue;
    den(bucket[i]) += c.counts.row(i).sum();
    for (Eigen::Index j = 0; j < n; ++j) num(bucket[i], bucket[j]) += c.counts(i, j);
  }
  RatingTransition out{Mat::Zero(k, k), Measure::P, 1.0};
  for (int b = 0; b < k - 1; ++b) {
    RSGCIR_REQUIRE(den(b) > 0.0, ErrorCode::EmptyBucket,
                   "coarse bucket " + c.coarse[b] + " has no obligors");
    out.p.row(b) = num.row(b) / den(b);
    out.p.row(b) /= out.p.row(b).sum();
  }
  out.p(k - 1, k - 1) = 1.0;
  return out;
}

/// Validates a K x K one-year matrix and renormalizes non-default rows.
/// Published tables are rounded, so rows are allowed to miss 1 by `row_tol`.
inline RatingTransition make_rating_transition(Mat p, Measure measure, double row_tol = 5e-4) {
  const Eigen::Index k = p.rows();
  RSGCIR_REQUIRE(k >= 2 && p.cols() == k, ErrorCode::DimensionMismatch,
                 "rating matrix must be square with at least two states");
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j)
      RSGCIR_REQUIRE(p(i, j) >= 0.0 && p(i, j) <= 1.0, ErrorCode::InvalidArgument,
                     "transition probabilities must lie in [0, 1]");
    const double s = p.row(i).sum();
    RSGCIR_REQUIRE(std::abs(s - 1.0) <= row_tol, ErrorCode::InvalidArgument,
                   "row " + std::to_string(i) + " sums to " + std::to_string(s));
    p.row(i) /= s;
  }
  RSGCIR_REQUIRE(p(k - 1, k - 1) == 1.0, ErrorCode::InvalidArgument,
                 "default row must be absorbing");
  return {p, measure, 1.0};
}

inline double spread_implied_default_prob(double spread, double horizon, double recovery = 0.0) {
  RSGCIR_REQUIRE(recovery >= 0.0 && recovery < 1.0, ErrorCode::InvalidArgument,
                 "recovery must lie in [0, 1)");
  RSGCIR_REQUIRE(horizon > 0.0, ErrorCode::InvalidArgument, "horizon must be positive");
  const double q = -std::expm1(-spread * horizon) / (1.0 - recovery);
  return std::clamp(q, 0.0, 1.0);
}

inline RatingTransition risk_neutral_distortion(const RatingTransition& pp, const Vec& pi) {
  const int k = pp.size();
  RSGCIR_REQUIRE(pi.size() == k - 1, ErrorCode::DimensionMismatch,
                 "pi must have one entry per non-default rating");
  RatingTransition out{pp.p, Measure::Q, pp.horizon};
  for (int i = 0; i < k - 1; ++i) {
    RSGCIR_REQUIRE(pi(i) > 0.0 && pi(i) < 1.0, ErrorCode::InvalidArgument,
                   "pi entries must lie strictly inside (0, 1)");
    const double pd = pp.p(i, k - 1);
    RSGCIR_REQUIRE(pd < 1.0, ErrorCode::DegenerateRow,
                   "row " + std::to_string(i) + " defaults with certainty under P");
    const double scale = (1.0 - pi(i)) / (1.0 - pd);
    out.p.row(i).head(k - 1) = pp.p.row(i).head(k - 1) * scale;
    out.p(i, k - 1) = pi(i);
  }
  out.p.row(k - 1).setZero();
  out.p(k - 1, k - 1) = 1.0;
  return out;
}

struct CalibratePiOptions {
  double eps = 1e-6;
  int restarts = 3;
  std::uint64_t seed = 7;
  OptimizerConfig optimizer{};
};

struct CalibratePiResult {
  Vec pi;
  double objective = 0.0;
  double initial_objective = 0.0;
};

/// Sum_t Sum_i w_it ([(P^Q(1))^t]_iD - q_i(t))^2 for the distortion of `pp` by `pi`.
inline double calibrate_pi_objective(const RatingTransition& pp, const Vec& pi, const Mat& q_imp,
                                     const Mat& weights, int t_max) {
  const int k = pp.size();
  const Mat pq = risk_neutral_distortion(pp, pi).p;
  Mat power = Mat::Identity(k, k);
  double total = 0.0;
  for (int t = 1; t <= t_max; ++t) {
    power = power * pq;
    for (int i = 0; i < k - 1; ++i) {
      const double r = power(i, k - 1) - q_imp(i, t - 1);
      total += weights(i, t - 1) * r * r;
    }
  }
  return total;
}

/// Least-squares default-probability calibration over integer horizons 1..t_max.
/// q_imp and weights are (K-1) x t_max.
inline CalibratePiResult calibrate_pi(const RatingTransition& pp, const Mat& q_imp,
                                      const Mat& weights, int t_max,
                                      const CalibratePiOptions& opt = {}) {
  const int k = pp.size();
  const int n = k - 1;
  RSGCIR_REQUIRE(t_max >= 1, ErrorCode::InvalidArgument, "t_max must be at least 1");
  RSGCIR_REQUIRE(q_imp.rows() == n && q_imp.cols() >= t_max && weights.rows() == n &&
                     weights.cols() >= t_max,
                 ErrorCode::DimensionMismatch, "q_imp/weights must be (K-1) x t_max");
  RSGCIR_REQUIRE((q_imp.array() >= 0.0).all() && (q_imp.array() <= 1.0).all(),
                 ErrorCode::InvalidArgument, "q_imp entries must lie in [0, 1]");
  RSGCIR_REQUIRE((weights.array() >= 0.0).all(), ErrorCode::InvalidArgument,
                 "weights must be nonnegative");

  const double lo = opt.eps;
  const double hi = 1.0 - opt.eps;
  Vec pi0(n);
  for (int i = 0; i < n; ++i) pi0(i) = std::clamp(pp.p(i, k - 1), lo, hi);

  CalibratePiResult out;
  out.initial_objective = calibrate_pi_objective(pp, pi0, q_imp, weights, t_max);

  if (t_max == 1) {
    // The one-year power is P^Q(1) itself, so each row is matched exactly.
    out.pi = pi0;
    for (int i = 0; i < n; ++i)
      if (weights(i, 0) > 0.0) out.pi(i) = std::clamp(q_imp(i, 0), lo, hi);
    out.objective = calibrate_pi_objective(pp, out.pi, q_imp, weights, t_max);
    return out;
  }

  auto to_pi = [&](const Vec& z) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p(i) = lo + (hi - lo) / (1.0 + std::exp(-z(i)));
    return p;
  };
  auto to_z = [&](const Vec& p) {
    Vec z(n);
    for (int i = 0; i < n; ++i) {
      const double u = (p(i) - lo) / (hi - lo);
      z(i) = std::log(u / (1.0 - u));
    }
    return z;
  };
  // Scale so that the simplex tolerance is meaningful for tiny default probabilities.
  const double scale = std::max(out.initial_objective, 1e-300);
  Objective f = [&](const Vec& z) {
    return calibrate_pi_objective(pp, to_pi(z), q_imp, weights, t_max) / scale;
  };

  std::vector<Vec> starts{to_z(pi0)};
  Vec first_year(n);
  for (int i = 0; i < n; ++i) first_year(i) = std::clamp(q_imp(i, 0), 1e-4, 1.0 - 1e-4);
  starts.push_back(to_z(first_year));
  Philox4x32 rng(opt.seed, streams::kOptimizer);
  for (int r = 0; r < opt.restarts; ++r) {
    Vec z = starts.front();
    for (int i = 0; i < n; ++i) z(i) += rng.normal();
    starts.push_back(z);
  }
  OptimizerConfig cfg = opt.optimizer;
  cfg.ftol = std::min(cfg.ftol, 1e-14);
  cfg.xtol = std::min(cfg.xtol, 1e-10);
  cfg.max_evals = std::max(cfg.max_evals, 20000);
  cfg.restarts = std::max(cfg.restarts, 2);
  auto best = minimize_multistart(f, starts, cfg);
  RSGCIR_REQUIRE(std::isfinite(best.f), ErrorCode::OptimizerFailure,
                 "pi calibration produced no finite objective");
  out.pi = to_pi(best.x);
  out.objective = calibrate_pi_objective(pp, out.pi, q_imp, weights, t_max);
  if (out.objective > out.initial_objective) {
    out.pi = pi0;
    out.objective = out.initial_objective;
  }
  return out;
}

/// Principal matrix logarithm of P^Q(1), projected onto conservative generators
/// with absorbing default: negative off-diagonals are zeroed and diagonals reset.
inline RatingGenerator embed_generator(const RatingTransition& pq) {
  const int k = pq.size();
  for (int i = 0; i < k; ++i)
    RSGCIR_REQUIRE(pq.p(i, i) > 0.0, ErrorCode::NoRealLogarithm,
                   "transition matrix has a zero diagonal entry");
  Eigen::EigenSolver<Mat> es(pq.p, false);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<double> ev = es.eigenvalues()(i);
    RSGCIR_REQUIRE(!(std::abs(ev.imag()) <= 1e-14 && ev.real() <= 0.0),
                   ErrorCode::NoRealLogarithm, "eigenvalue on the closed negative real axis");
  }
  Mat g = logm(pq.p);
  g.row(k - 1).setZero();
  for (int i = 0; i < k - 1; ++i) {
    double off = 0.0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      g(i, j) = std::max(0.0, g(i, j));
      off += g(i, j);
    }
    g(i, i) = -off;
  }
  RatingGenerator out;
  out.nu = g.topRightCorner(k - 1, 1);
  out.lambda_block = g.topLeftCorner(k - 1, k - 1);
  for (int i = 0; i < k - 1; ++i) {
    double off = 0.0;
    for (int j = 0; j < k - 1; ++j)
      if (j != i) off += out.lambda_block(i, j);
    out.lambda_block(i, i) = -off;
  }
  out.reconstruction_error = (expm(g) - pq.p).cwiseAbs().maxCoeff();
  logger()->info("generator embedding reconstruction error {:.3e}", out.reconstruction_error);
  return out;
}

inline RatingGenerator adjust_default_intensity(const RatingGenerator& g, const Vec& delta_nu) {
  RSGCIR_REQUIRE(delta_nu.size() == g.nu.size(), ErrorCode::DimensionMismatch,
                 "delta_nu length must match nu");
  RSGCIR_REQUIRE((delta_nu.array() >= 0.0).all(), ErrorCode::NegativeDeltaNu,
                 "default-intensity adjustments must be nonnegative");
  RatingGenerator out = g;
  out.nu += delta_nu;
  return out;
}

enum class WeightPolicy {
  Strict,  // negative weights beyond the clipping band raise NegativeModeWeight
  Warn,    // negative weights are kept and reported through `nonnegative`
  Quiet,   // as Warn, without the log line
};

/// Spectral decomposition of Lambda - diag(nu) with survival weights
/// w_ij = -B_ij [B^{-1}]_{jK}, where the default column is minus the row sums of B^{-1}.
inline LandoDecomposition lando_decomposition(const RatingGenerator& g,
                                              WeightPolicy policy = WeightPolicy::Warn,
                                              double clip_tol = 1e-10) {
  const int n = g.nondefault();
  const Mat lt = g.lambda_tilde();
  Eigen::EigenSolver<Mat> es(lt);
  const double scale = std::max(1.0, lt.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i)
    RSGCIR_REQUIRE(std::abs(es.eigenvalues()(i).imag()) <= 1e-12 * scale,
                   ErrorCode::ComplexSpectrum, "migration block has complex eigenvalues");

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return es.eigenvalues()(a).real() > es.eigenvalues()(b).real();
  });
  LandoDecomposition out;
  out.d.resize(n);
  out.eigvec.resize(n, n);
  for (int j = 0; j < n; ++j) {
    out.d(j) = es.eigenvalues()(order[j]).real();
    out.eigvec.col(j) = es.eigenvectors().col(order[j]).real();
  }
  for (int j = 0; j + 1 < n; ++j)
    RSGCIR_REQUIRE(out.d(j) - out.d(j + 1) > 1e-10, ErrorCode::DefectiveMatrix,
                   "repeated eigenvalues in the migration block");

  const Mat binv = out.eigvec.inverse();
  out.eigvec_inv.resize(n, n + 1);
  out.eigvec_inv.leftCols(n) = binv;
  out.eigvec_inv.col(n) = -binv.rowwise().sum();

  out.weights.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.weights(i, j) = -out.eigvec(i, j) * out.eigvec_inv(j, n);
  out.min_raw_weight = out.weights.minCoeff();

  for (int i = 0; i < n; ++i) {
    bool clipped = false;
    for (int j = 0; j < n; ++j) {
      double& w = out.weights(i, j);
      if (w < 0.0 && w >= -clip_tol) {
        w = 0.0;
        clipped = true;
      } else if (w < -clip_tol) {
        out.nonnegative = false;
      }
    }
    if (clipped) out.weights.row(i) /= out.weights.row(i).sum();
  }
  if (!out.nonnegative) {
    RSGCIR_REQUIRE(policy != WeightPolicy::Strict, ErrorCode::NegativeModeWeight,
                   "mode weight " + std::to_string(out.min_raw_weight) + " is negative");
    if (policy == WeightPolicy::Warn)
      logger()->warn("mode weights are not all nonnegative (min {:.4f}); survival identity still holds",
                     out.min_raw_weight);
  }

  out.reconstruction_error =
      (out.eigvec * out.d.asDiagonal() * binv - lt).cwiseAbs().maxCoeff();

  // Full K x K eigensystem with the constant vector as the eigenvector of the zero mode.
  Mat bfull = Mat::Zero(n + 1, n + 1);
  bfull.topLeftCorner(n, n) = out.eigvec;
  bfull.col(n).setOnes();
  const Mat bfull_inv = bfull.inverse();
  double col_err = 0.0;
  for (int i = 0; i <= n; ++i)
    col_err = std::max(col_err, std::abs(bfull(i, n) * bfull_inv(n, n) - 1.0));
  col_err = std::max(col_err, (bfull_inv.topRightCorner(n, 1) - out.eigvec_inv.col(n))
                              .cwiseAbs()
                              .maxCoeff());
  out.default_column_error = col_err;
  return out;
}

/// Table of the default probability path [exp(Q t)]_iD for the full generator.
inline Mat default_probabilities(const RatingGenerator& g, const std::vector<double>& horizons) {
  const int n = g.nondefault();
  Mat out(n, horizons.size());
  const Mat q = g.full();
  for (std::size_t t = 0; t < horizons.size(); ++t) out.col(t) = expm(q * horizons[t]).col(n).head(n);
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_RATINGS_HPP
