#ifndef RSGCIR_ESTIMATION_HPP
#define RSGCIR_ESTIMATION_HPP

// Two-stage quasi-maximum likelihood: stage objectives, multistart
// maximization, sandwich covariances and the circular block bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rsgcir/errors.hpp"
#include "rsgcir/filters.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"
#include "rsgcir/model.hpp"
#include "rsgcir/optim.hpp"
#include "rsgcir/panel.hpp"
#include "rsgcir/parallel.hpp"
#include "rsgcir/rng.hpp"

namespace rsgcir {

enum class Transform { LogPositive, LogitUnit, Identity };
enum class Stage { Rate, Credit };

inline const char* to_string(Transform t) {
  switch (t) {
    case Transform::LogPositive: return "log";
    case Transform::LogitUnit: return "logit";
    case Transform::Identity: return "identity";
  }
  return "identity";
}

inline const char* to_string(Stage s) { return s == Stage::Rate ? "rate" : "credit"; }

inline double to_free(double v, Transform t) {
  switch (t) {
    case Transform::LogPositive:
      RSGCIR_REQUIRE(v > 0.0, ErrorCode::InvalidArgument, "log-positive parameter must be > 0");
      return std::log(v);
    case Transform::LogitUnit:
      RSGCIR_REQUIRE(v > 0.0 && v < 1.0, ErrorCode::InvalidArgument, "logit parameter must lie in (0, 1)");
      return std::log(v) - std::log1p(-v);
    case Transform::Identity: return v;
  }
  return v;
}

inline double from_free(double z, Transform t) {
  switch (t) {
    case Transform::LogPositive: return std::exp(z);
    case Transform::LogitUnit: return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    case Transform::Identity: return z;
  }
  return z;
}

/// d(natural) / d(free).
inline double free_jacobian(double z, Transform t) {
  switch (t) {
    case Transform::LogPositive: return std::exp(z);
    case Transform::LogitUnit: {
      const double p = from_free(z, t);
      return p * (1.0 - p);
    }
    case Transform::Identity: return 1.0;
  }
  return 1.0;
}

struct ParamEntry {
  std::string name;
  Transform transform = Transform::Identity;
  Stage stage = Stage::Rate;
};

/// Ordered free parameters with their natural-scale values.
struct ParamVector {
  std::vector<ParamEntry> entries;
  Vec values;

  int size() const { return static_cast<int>(entries.size()); }

  void add(ParamEntry e, double value) {
    to_free(value, e.transform);
    entries.push_back(std::move(e));
    values.conservativeResize(values.size() + 1);
    values(values.size() - 1) = value;
  }

  Vec free() const {
    Vec z(size());
    for (int i = 0; i < size(); ++i) z(i) = to_free(values(i), entries[i].transform);
    return z;
  }

  void set_free(const Vec& z) {
    RSGCIR_REQUIRE(z.size() == size(), ErrorCode::DimensionMismatch, "free vector length mismatch");
    for (int i = 0; i < size(); ++i) values(i) = from_free(z(i), entries[i].transform);
  }

  Vec jacobian() const {
    const Vec z = free();
    Vec d(size());
    for (int i = 0; i < size(); ++i) d(i) = free_jacobian(z(i), entries[i].transform);
    return d;
  }

  int index(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (entries[i].name == name) return i;
    return -1;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries) out.push_back(e.name);
    return out;
  }
};

inline ParamVector concat(const ParamVector& a, const ParamVector& b) {
  ParamVector out = a;
  for (int i = 0; i < b.size(); ++i) out.add(b.entries[i], b.values(i));
  return out;
}

// ---------------------------------------------------------------------------
// Binding parameter names to ModelSpec fields
//
//   x<k>.<kappa|theta|alpha|beta|lambda>.<regime>   factor k = 1..4
//   qr.<from>.<to>, qc.<from>.<to>                  off-diagonal intensities
//   c.<credit regime>|<rate regime>                 pass-through
//   noise.<CGB|CDB>.<rate regime>, noise.<rating>.<credit regime>
//   dnu.<rating>                                    default-intensity adjustment

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t pos; (pos = s.find(sep, start)) != std::string::npos; start = pos + 1)
    out.push_back(s.substr(start, pos - start));
  out.push_back(s.substr(start));
  return out;
}

inline int find_label(const std::vector<std::string>& labels, const std::string& l, const std::string& name) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == l) return static_cast<int>(i);
  throw Error(ErrorCode::InvalidArgument, "unknown label '" + l + "' in parameter " + name);
}

inline const std::vector<std::string> kFactorFields{"kappa", "theta", "alpha", "beta", "lambda"};

// Reference to a model field addressed by name; `kind` selects the setter.
struct Slot {
  enum Kind { Factor, Generator, Passthrough, RateNoise, CreditNoise, DeltaNu } kind;
  int a = 0, b = 0, c = 0;
};

inline Slot resolve(const ModelSpec& m, const std::string& name) {
  const auto parts = split(name, '.');
  auto bad = [&] { return Error(ErrorCode::InvalidArgument, "unknown parameter " + name); };
  if (parts.size() == 3 && parts[0].size() == 2 && parts[0][0] == 'x') {
    const int k = parts[0][1] - '1';
    if (k < 0 || k >= kNumFactors) throw bad();
    const auto it = std::find(kFactorFields.begin(), kFactorFields.end(), parts[1]);
    if (it == kFactorFields.end()) throw bad();
    const auto& labels = k < kNumRateFactors ? m.qr.labels() : m.qc.labels();
    return {Slot::Factor, k, static_cast<int>(it - kFactorFields.begin()), find_label(labels, parts[2], name)};
  }
  if (parts.size() == 3 && (parts[0] == "qr" || parts[0] == "qc")) {
    const auto& labels = parts[0] == "qr" ? m.qr.labels() : m.qc.labels();
    const int i = find_label(labels, parts[1], name), j = find_label(labels, parts[2], name);
    if (i == j) throw bad();
    return {Slot::Generator, parts[0] == "qr" ? 0 : 1, i, j};
  }
  if (parts.size() == 2 && parts[0] == "c") {
    const auto pair = split(parts[1], '|');
    if (pair.size() != 2) throw bad();
    return {Slot::Passthrough, find_label(m.qr.labels(), pair[1], name), find_label(m.qc.labels(), pair[0], name)};
  }
  if (parts.size() == 3 && parts[0] == "noise") {
    if (parts[1] == "CGB" || parts[1] == "CDB")
      return {Slot::RateNoise, find_label(m.qr.labels(), parts[2], name), parts[1] == "CGB" ? 0 : 1};
    const int r = find_label(m.rating_labels, parts[1], name);
    const auto& obs = m.measurement.credit_ratings;
    const auto it = std::find(obs.begin(), obs.end(), r);
    if (it == obs.end()) throw bad();
    return {Slot::CreditNoise, find_label(m.qc.labels(), parts[2], name), static_cast<int>(it - obs.begin())};
  }
  if (parts.size() == 2 && parts[0] == "dnu") {
    const int r = find_label(m.rating_labels, parts[1], name);
    if (r >= m.rating.nondefault()) throw bad();
    return {Slot::DeltaNu, r};
  }
  throw bad();
}

inline double factor_field(const FactorRegime& f, int field) {
  switch (field) {
    case 0: return f.p.kappa();
    case 1: return f.p.theta();
    case 2: return f.p.alpha();
    case 3: return f.p.beta();
    default: return f.lambda.lambda;
  }
}

}  // namespace detail

inline double get_param(const ModelSpec& m, const std::string& name) {
  const auto s = detail::resolve(m, name);
  switch (s.kind) {
    case detail::Slot::Factor: return detail::factor_field(m.factor(s.a, s.c), s.b);
    case detail::Slot::Generator: return (s.a == 0 ? m.qr : m.qc).q()(s.b, s.c);
    case detail::Slot::Passthrough: return m.passthrough(s.a, s.b);
    case detail::Slot::RateNoise: return m.measurement.rate_noise_sd(s.a, s.b);
    case detail::Slot::CreditNoise: return m.measurement.credit_noise_sd(s.a, s.b);
    case detail::Slot::DeltaNu: return m.delta_nu.size() ? m.delta_nu(s.a) : 0.0;
  }
  return 0.0;
}

inline Transform default_transform(const std::string& name) {
  const auto parts = detail::split(name, '.');
  if (parts[0] == "c") return Transform::Identity;
  if (parts.size() == 3 && parts[0].size() == 2 && parts[0][0] == 'x')
    return parts[1] == "theta" || parts[1] == "lambda" ? Transform::Identity : Transform::LogPositive;
  return Transform::LogPositive;
}

inline Stage stage_of(const std::string& name) {
  const auto parts = detail::split(name, '.');
  if (parts[0] == "qr") return Stage::Rate;
  if (parts[0] == "x1" || parts[0] == "x2" || parts[0] == "x3") return Stage::Rate;
  if (parts[0] == "noise" && parts.size() > 1 && (parts[1] == "CGB" || parts[1] == "CDB")) return Stage::Rate;
  return Stage::Credit;
}

/// Parameter vector over `names`, read from m with default transforms.
inline ParamVector make_params(const ModelSpec& m, const std::vector<std::string>& names) {
  ParamVector p;
  for (const auto& n : names) p.add({n, default_transform(n), stage_of(n)}, get_param(m, n));
  return p;
}

/// Writes every entry of p into a copy of m; derived quantities (risk-neutral
/// parameters, generator diagonals, Lando modes) are rebuilt.
inline ModelSpec apply_params(const ModelSpec& m, const ParamVector& p,
                              WeightPolicy policy = WeightPolicy::Quiet) {
  ModelSpec out = m;
  bool ratings_dirty = false;
  for (int i = 0; i < p.size(); ++i) {
    const auto s = detail::resolve(out, p.entries[i].name);
    const double v = p.values(i);
    switch (s.kind) {
      case detail::Slot::Factor: {
        FactorRegime& f = out.factors[s.a].at(s.c);
        double f5[5];
        for (int j = 0; j < 5; ++j) f5[j] = detail::factor_field(f, j);
        f5[s.b] = v;
        f = FactorRegime(GcirParams::physical(f5[0], f5[1], f5[2], f5[3]), {f5[4]});
        break;
      }
      case detail::Slot::Generator: {
        CtmcGenerator& g = s.a == 0 ? out.qr : out.qc;
        Mat q = g.q();
        q(s.b, s.c) = v;
        q(s.b, s.b) = 0.0;
        q(s.b, s.b) = -q.row(s.b).sum();
        g = CtmcGenerator(q, g.labels());
        break;
      }
      case detail::Slot::Passthrough: out.passthrough(s.a, s.b) = v; break;
      case detail::Slot::RateNoise: out.measurement.rate_noise_sd(s.a, s.b) = v; break;
      case detail::Slot::CreditNoise: out.measurement.credit_noise_sd(s.a, s.b) = v; break;
      case detail::Slot::DeltaNu:
        if (out.delta_nu.size() != out.base_rating.nu.size()) out.delta_nu = Vec::Zero(out.base_rating.nu.size());
        out.delta_nu(s.a) = v;
        ratings_dirty = true;
        break;
    }
  }
  if (ratings_dirty) out.apply_rating(policy);
  return out;
}

/// All names of one stage whose current values admit their default transform
/// (log-positive entries at zero, such as a deterministic factor's alpha, are skipped).
inline std::vector<std::string> stage_parameter_names(const ModelSpec& m, Stage stage) {
  std::vector<std::string> names;
  auto push = [&](const std::string& n) {
    if (default_transform(n) == Transform::LogPositive && !(get_param(m, n) > 0.0)) return;
    names.push_back(n);
  };
  const auto& rl = m.qr.labels();
  const auto& cl = m.qc.labels();
  const int k0 = stage == Stage::Rate ? 0 : kNumRateFactors;
  const int k1 = stage == Stage::Rate ? kNumRateFactors : kNumFactors;
  const auto& labels = stage == Stage::Rate ? rl : cl;
  for (int k = k0; k < k1; ++k)
    for (const auto& l : labels)
      for (const auto& f : detail::kFactorFields) push("x" + std::to_string(k + 1) + "." + f + "." + l);
  const std::string g = stage == Stage::Rate ? "qr." : "qc.";
  for (const auto& a : labels)
    for (const auto& b : labels)
      if (a != b) push(g + a + "." + b);
  if (stage == Stage::Rate) {
    for (const char* curve : {"CGB", "CDB"})
      for (const auto& l : rl) push(std::string("noise.") + curve + "." + l);
    return names;
  }
  for (const auto& r : rl)
    for (const auto& c : cl) push("c." + c + "|" + r);
  for (int obs : m.measurement.credit_ratings)
    for (const auto& c : cl) push("noise." + m.rating_labels.at(obs) + "." + c);
  for (int r = 0; r < m.rating.nondefault(); ++r) push("dnu." + m.rating_labels.at(r));
  return names;
}

// ---------------------------------------------------------------------------
// Generic QMLE machinery on per-date log-likelihood contributions

/// Per-date log-likelihood contributions at a free-scale parameter vector.
using LoglikFn = std::function<Vec(const Vec&)>;

/// Natural-scale ordering: values(upper) >= values(lower).
struct OrderConstraint {
  int lower = 0;
  int upper = 0;
};

/// Label convention: the level of X1 is nondecreasing in the rate-regime index
/// (L before H in the default labelling).
inline std::vector<OrderConstraint> label_constraints(const ParamVector& p, const ModelSpec& m) {
  std::vector<OrderConstraint> out;
  const auto& labels = m.qr.labels();
  for (std::size_t s = 1; s < labels.size(); ++s) {
    const int lo = p.index("x1.theta." + labels[s - 1]);
    const int hi = p.index("x1.theta." + labels[s]);
    if (lo >= 0 && hi >= 0) out.push_back({lo, hi});
  }
  return out;
}

struct EstimationConfig {
  OptimizerConfig optimizer{};
  int starts = 5;             // the given start plus perturbed copies
  double start_spread = 0.1;  // sd of free-scale perturbations
  std::uint64_t seed = 1;
  int threads = 1;
};

struct EstimationResult {
  ParamVector estimates;
  double loglik = -std::numeric_limits<double>::infinity();
  double start_loglik = -std::numeric_limits<double>::infinity();
  Vec loglik_t;
  int evals = 0;
  bool converged = false;
  int best_start = 0;
  std::uint64_t seed = 0;
  std::optional<Mat> robust_cov;     // natural scale
  std::optional<Mat> bootstrap_cov;  // natural scale

  static Vec se(const std::optional<Mat>& cov) {
    return cov ? Vec(cov->diagonal().cwiseMax(0.0).cwiseSqrt()) : Vec();
  }
  Vec robust_se() const { return se(robust_cov); }
  Vec bootstrap_se() const { return se(bootstrap_cov); }
};

namespace detail {

inline bool satisfies(const Vec& natural, const std::vector<OrderConstraint>& cons) {
  for (const auto& c : cons)
    if (natural(c.upper) < natural(c.lower)) return false;
  return true;
}

inline Objective negative_total(const LoglikFn& f, const ParamVector& proto,
                                const std::vector<OrderConstraint>& cons) {
  return [&f, proto, cons](const Vec& z) {
    ParamVector p = proto;
    p.set_free(z);
    if (!satisfies(p.values, cons)) return std::numeric_limits<double>::infinity();
    try {
      const double s = f(z).sum();
      return std::isfinite(s) ? -s : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
}

}  // namespace detail

/// Maximizes sum_t l_t over the free scale from `start` and perturbed copies.
inline EstimationResult maximize(const LoglikFn& f, const ParamVector& start,
                                 const std::vector<OrderConstraint>& cons = {},
                                 const EstimationConfig& cfg = {}) {
  RSGCIR_REQUIRE(cfg.starts >= 1, ErrorCode::InvalidArgument, "starts must be at least 1");
  const Objective obj = detail::negative_total(f, start, cons);
  const Vec z0 = start.free();
  const double f0 = obj(z0);
  RSGCIR_REQUIRE(std::isfinite(f0), ErrorCode::NonFiniteLikelihood,
                 "log-likelihood is not finite at the starting point");

  std::vector<Vec> starts{z0};
  for (int s = 1; s < cfg.starts; ++s) {
    Philox4x32 rng(cfg.seed, streams::kOptimizer + static_cast<std::uint64_t>(s));
    Vec z = z0;
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) += cfg.start_spread * rng.normal();
    starts.push_back(z);
  }
  std::vector<OptimizerResult> runs(starts.size());
  parallel_for(starts.size(), cfg.threads, [&](std::size_t s) { runs[s] = minimize(obj, starts[s], cfg.optimizer); });

  std::size_t best = 0;
  int evals = 0;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    evals += runs[s].evals;
    if (runs[s].f < runs[best].f) best = s;
  }
  EstimationResult res;
  res.estimates = start;
  res.estimates.set_free(runs[best].x);
  res.loglik_t = f(runs[best].x);
  res.loglik = res.loglik_t.sum();
  res.start_loglik = -f0;
  res.evals = evals;
  res.converged = runs[best].converged;
  res.best_start = static_cast<int>(best);
  res.seed = cfg.seed;
  if (!res.converged)
    logger()->warn("maximize: optimizer budget of {} evaluations exhausted (MaxIterations)",
                   cfg.optimizer.max_evals);
  return res;
}

struct SandwichConfig {
  double rel_step = 1e-5;      // on the free scale
  double gradient_tol = 1e-3;  // per-date gradient norm above which a warning is logged
  int check_from = 0;          // parameters before this index are excluded from that check
  int threads = 1;
};

struct SandwichResult {
  Mat cov;       // natural scale
  Mat cov_free;  // free scale
  Mat hessian;   // H = -d2 sum l_t on the free scale
  Mat opg;       // J = sum g_t g_t'
  Vec gradient;  // of sum l_t on the free scale
  bool singular = false;
};

/// H^-1 J H^-1 from central finite differences of the per-date contributions.
inline SandwichResult sandwich_covariance(const LoglikFn& f, const ParamVector& at,
                                          const SandwichConfig& cfg = {}) {
  const Vec z = at.free();
  const int n = at.size();
  Vec h(n);
  for (int i = 0; i < n; ++i) h(i) = cfg.rel_step * std::max(1.0, std::abs(z(i)));

  // Evaluation plan: centre, +-e_i, and the four corners of every (i, j) pair.
  std::vector<Vec> points{z};
  for (int i = 0; i < n; ++i) {
    Vec p = z, m = z;
    p(i) += h(i);
    m(i) -= h(i);
    points.push_back(p);
    points.push_back(m);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          Vec q = z;
          q(i) += si * h(i);
          q(j) += sj * h(j);
          points.push_back(q);
        }
  std::vector<Vec> l(points.size());
  parallel_for(points.size(), cfg.threads, [&](std::size_t k) { l[k] = f(points[k]); });
  for (const auto& v : l)
    RSGCIR_REQUIRE(v.size() == l[0].size() && v.allFinite(), ErrorCode::NonFiniteLikelihood,
                   "non-finite log-likelihood in the finite-difference stencil");

  const Eigen::Index t_len = l[0].size();
  Mat g(t_len, n);
  Mat hess(n, n);
  const double l0 = l[0].sum();
  for (int i = 0; i < n; ++i) {
    g.col(i) = (l[1 + 2 * i] - l[2 + 2 * i]) / (2.0 * h(i));
    hess(i, i) = (l[1 + 2 * i].sum() - 2.0 * l0 + l[2 + 2 * i].sum()) / (h(i) * h(i));
  }
  std::size_t k = 1 + 2 * static_cast<std::size_t>(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j, k += 4) {
      hess(i, j) = hess(j, i) =
          (l[k].sum() - l[k + 1].sum() - l[k + 2].sum() + l[k + 3].sum()) / (4.0 * h(i) * h(j));
    }

  SandwichResult out;
  out.hessian = symmetrize(-hess);
  out.opg = g.transpose() * g;
  out.gradient = g.colwise().sum().transpose();
  const double gnorm = out.gradient.tail(n - std::clamp(cfg.check_from, 0, n)).norm();
  if (t_len > 0 && gnorm / static_cast<double>(t_len) > cfg.gradient_tol)
    logger()->warn("sandwich: gradient norm {:.3e} suggests the point is not a maximum", gnorm);
  const Mat hinv = pinv_symmetric(out.hessian, &out.singular);
  if (out.singular) logger()->warn("sandwich: Hessian is singular, using the pseudo-inverse (SingularHessian)");
  out.cov_free = floor_eigenvalues(symmetrize(hinv * out.opg * hinv), 0.0);
  const Vec d = at.jacobian();
  out.cov = symmetrize(d.asDiagonal() * out.cov_free * d.asDiagonal());
  return out;
}

/// Builds the per-date objective on a resampled date index.
using ResampledLoglik = std::function<LoglikFn(const std::vector<int>&)>;

struct BootstrapConfig {
  int block_len = 52;
  int reps = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  OptimizerConfig optimizer{};
};

struct BootstrapResult {
  Mat cov;         // natural scale
  Mat replicates;  // successful replicates x parameters, natural scale
  int failed = 0;
};

/// Circular block resample of [0, T). A block of length >= T is the sample itself.
inline std::vector<int> circular_block_indices(int t_len, int block_len, Philox4x32& rng) {
  std::vector<int> idx;
  idx.reserve(t_len);
  if (block_len >= t_len) {
    for (int t = 0; t < t_len; ++t) idx.push_back(t);
    return idx;
  }
  while (static_cast<int>(idx.size()) < t_len) {
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(t_len)));
    for (int i = 0; i < block_len && static_cast<int>(idx.size()) < t_len; ++i)
      idx.push_back((start + i) % t_len);
  }
  return idx;
}

inline BootstrapResult block_bootstrap(const ResampledLoglik& make, int t_len, const ParamVector& estimate,
                                       const std::vector<OrderConstraint>& cons,
                                       const BootstrapConfig& cfg) {
  RSGCIR_REQUIRE(cfg.block_len >= 1, ErrorCode::InvalidArgument, "block_len must be at least 1");
  RSGCIR_REQUIRE(cfg.reps >= 50, ErrorCode::InvalidArgument, "bootstrap needs at least 50 replicates");
  Philox4x32 rng(cfg.seed, streams::kBootstrap);
  std::vector<std::vector<int>> draws;
  for (int r = 0; r < cfg.reps; ++r) draws.push_back(circular_block_indices(t_len, cfg.block_len, rng));

  EstimationConfig inner;
  inner.optimizer = cfg.optimizer;
  inner.starts = 1;
  std::vector<std::optional<Vec>> est(cfg.reps);
  parallel_for(est.size(), cfg.threads, [&](std::size_t r) {
    try {
      const LoglikFn f = make(draws[r]);
      const auto res = maximize(f, estimate, cons, inner);
      if (res.converged && std::isfinite(res.loglik)) est[r] = res.estimates.values;
    } catch (const Error&) {
    }
  });

  BootstrapResult out;
  std::vector<Vec> ok;
  for (const auto& e : est) {
    if (e) ok.push_back(*e);
    else ++out.failed;
  }
  RSGCIR_REQUIRE(ok.size() >= 0.8 * cfg.reps, ErrorCode::TooFewSuccessfulReplicates,
                 std::to_string(ok.size()) + " of " + std::to_string(cfg.reps) + " replicates converged");
  out.replicates.resize(static_cast<Eigen::Index>(ok.size()), estimate.size());
  for (std::size_t r = 0; r < ok.size(); ++r) out.replicates.row(static_cast<Eigen::Index>(r)) = ok[r].transpose();
  const Vec mean = out.replicates.colwise().mean().transpose();
  const Mat c = out.replicates.rowwise() - mean.transpose();
  out.cov = floor_eigenvalues(symmetrize(c.transpose() * c / std::max<double>(1.0, ok.size() - 1.0)), 0.0);
  return out;
}

// ---------------------------------------------------------------------------
// Model-level stage objectives

inline Mat select_rows(const Mat& y, const std::vector<int>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = y.row(rows[i]);
  return out;
}

inline LoglikFn rate_stage_loglik(const Mat& y, const ModelSpec& m, const ParamVector& proto,
                                  const FilterOptions& fopt = {}) {
  return [y, m, proto, fopt](const Vec& z) {
    ParamVector p = proto;
    p.set_free(z);
    return rate_block_filter(y, apply_params(m, p), fopt).loglik_t;
  };
}

/// Stage 2 with the injected rate-block summaries held fixed.
inline LoglikFn credit_stage_loglik(const Mat& y, const ModelSpec& m, const RateFilterOutput& rate,
                                    const ParamVector& proto, const FilterOptions& fopt = {}) {
  return [y, m, rate, proto, fopt](const Vec& z) {
    ParamVector p = proto;
    p.set_free(z);
    return credit_block_filter(y, apply_params(m, p), rate, fopt).loglik_t;
  };
}

/// l_t = l^r_t + l^c_t with stage 1 refiltered at every point, so the credit
/// contributions move with the rate parameters.
inline LoglikFn joint_loglik(const Mat& yr, const Mat& yc, const ModelSpec& m, const ParamVector& proto,
                             const FilterOptions& fopt = {}) {
  return [yr, yc, m, proto, fopt](const Vec& z) {
    ParamVector p = proto;
    p.set_free(z);
    const ModelSpec mm = apply_params(m, p);
    const auto rate = rate_block_filter(yr, mm, fopt);
    return Vec(rate.loglik_t + credit_block_filter(yc, mm, rate, fopt).loglik_t);
  };
}

inline void check_stage(const ParamVector& p, Stage stage) {
  for (const auto& e : p.entries)
    RSGCIR_REQUIRE(e.stage == stage, ErrorCode::InvalidArgument,
                   "parameter " + e.name + " does not belong to the " + to_string(stage) + " stage");
}

/// Stage maximization on a panel. The credit stage filters stage 1 once at the
/// template's rate parameters and treats those summaries as fixed.
inline EstimationResult maximize_stage(const CurvePanel& panel, const ModelSpec& m, Stage stage,
                                       const ParamVector& start, const EstimationConfig& cfg = {},
                                       const FilterOptions& fopt = {}) {
  check_stage(start, stage);
  const Mat yr = rate_observations(panel, m);
  if (stage == Stage::Rate)
    return maximize(rate_stage_loglik(yr, m, start, fopt), start, label_constraints(start, m), cfg);
  const auto rate = rate_block_filter(yr, m, fopt);
  return maximize(credit_stage_loglik(credit_observations(panel, m), m, rate, start, fopt), start, {}, cfg);
}

/// Robust covariance for one stage. For the credit stage with `rate_estimates`
/// the sandwich is taken over (rate_estimates, estimates) on the joint
/// per-date contributions; the credit block of the result is the adjusted
/// credit covariance.
inline SandwichResult sandwich_se(const CurvePanel& panel, const ModelSpec& m, Stage stage,
                                  const ParamVector& estimates, const SandwichConfig& cfg = {},
                                  const ParamVector* rate_estimates = nullptr,
                                  const FilterOptions& fopt = {}) {
  check_stage(estimates, stage);
  const Mat yr = rate_observations(panel, m);
  if (stage == Stage::Rate) return sandwich_covariance(rate_stage_loglik(yr, m, estimates, fopt), estimates, cfg);
  const Mat yc = credit_observations(panel, m);
  if (rate_estimates && rate_estimates->size() > 0) {
    check_stage(*rate_estimates, Stage::Rate);
    const ParamVector joint = concat(*rate_estimates, estimates);
    SandwichConfig jc = cfg;
    jc.check_from = rate_estimates->size();
    return sandwich_covariance(joint_loglik(yr, yc, m, joint, fopt), joint, jc);
  }
  const auto rate = rate_block_filter(yr, m, fopt);
  return sandwich_covariance(credit_stage_loglik(yc, m, rate, estimates, fopt), estimates, cfg);
}

inline BootstrapResult block_bootstrap(const CurvePanel& panel, const ModelSpec& m, Stage stage,
                                       const ParamVector& estimates, const BootstrapConfig& cfg,
                                       const FilterOptions& fopt = {}) {
  check_stage(estimates, stage);
  const Mat yr = rate_observations(panel, m);
  const Mat yc = stage == Stage::Credit ? credit_observations(panel, m) : Mat();
  ResampledLoglik make = [&](const std::vector<int>& rows) -> LoglikFn {
    const Mat r = select_rows(yr, rows);
    if (stage == Stage::Rate) return rate_stage_loglik(r, m, estimates, fopt);
    return credit_stage_loglik(select_rows(yc, rows), m, rate_block_filter(r, m, fopt), estimates, fopt);
  };
  const auto cons = stage == Stage::Rate ? label_constraints(estimates, m) : std::vector<OrderConstraint>{};
  return block_bootstrap(make, panel.size(), estimates, cons, cfg);
}

}  // namespace rsgcir

#endif  // RSGCIR_ESTIMATION_HPP
