#ifndef RSGCIR_PRICING_HPP
#define RSGCIR_PRICING_HPP

// Regime-conditional zero-coupon valuation by backward recursion on the
// observation grid. Each regime's continuation value is carried as a finite
// mixture of exponential-affine terms exp(c - b'x); one step applies the
// fixed-regime affine transform to every term with c2 = b and mixes
// successor regimes with the one-step transition matrix.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rsgcir/affine_core.hpp"
#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"
#include "rsgcir/model.hpp"
#include "rsgcir/regimes.hpp"

namespace rsgcir {

enum class Curve { CGB, CDB };

inline const char* to_string(Curve c) { return c == Curve::CGB ? "CGB" : "CDB"; }

inline Vec4 short_rate_loadings(Curve curve) {
  return curve == Curve::CGB ? Vec4(1, 1, 0, 0) : Vec4(1, 1, 1, 0);
}

/// exp(a - b'x) over one grid step.
struct OneStepBlock {
  double a = 0.0;
  Vec4 b = Vec4::Zero();
};

struct RegimePriceVector {
  Vec values;
  double maturity = 0.0;
};

enum class PricingScheme {
  Mixture,  // term mixtures merged on a b-grid
  Anchored, // one term per regime per step, matched in value and slope at an anchor state
};

struct PricingOptions {
  PricingScheme scheme = PricingScheme::Mixture;
  double merge_tol = 5e-3;  // slope cell width times the factor's state scale
  double merge_floor = 1e-3;  // smallest state scale used for the cell width
  double prune_tol = 1e-12;
  std::size_t max_terms = 4096;
  std::optional<Vec4> anchor;  // defaults to the stationary physical mean
};

struct ExpTerm {
  double logc = 0.0;
  Vec4 b = Vec4::Zero();
};
using TermList = std::vector<ExpTerm>;

/// Per-regime one-step specification: Q-parameters and Laplace loading per factor.
struct StepBlockSpec {
  std::array<GcirParams, kNumFactors> q;
  Vec4 c1 = Vec4::Zero();
};

inline OneStepBlock one_step_transform(const StepBlockSpec& spec, const Vec4& c2, double delta) {
  OneStepBlock out;
  for (int k = 0; k < kNumFactors; ++k) {
    if (spec.c1(k) == 0.0 && c2(k) == 0.0) continue;
    const auto ac = affine_coefficients(spec.q[k], spec.c1(k), c2(k), delta);
    out.a += ac.a;
    out.b(k) = ac.b;
  }
  return out;
}

inline double term_log_value(const ExpTerm& t, const Vec4& x) { return t.logc - t.b.dot(x); }

inline double log_mixture_value(const TermList& terms, const Vec4& x) {
  std::vector<double> v;
  v.reserve(terms.size());
  for (const auto& t : terms) v.push_back(term_log_value(t, x));
  return logsumexp(v);
}

/// Merges terms whose slopes share a grid cell (widths h per factor); each merged
/// term matches the group's value and slope at `anchor`. Infinite widths collapse.
inline TermList merge_terms(const TermList& terms, const Vec4& h, const Vec4& anchor) {
  if (terms.size() <= 1) return terms;
  using Key = std::array<long long, kNumFactors>;
  std::vector<Key> keys(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    for (int k = 0; k < kNumFactors; ++k)
      keys[i][k] = std::isfinite(h(k)) ? std::llround(terms[i].b(k) / h(k)) : 0;
  }
  std::vector<std::size_t> order(terms.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  TermList out;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && keys[order[j]] == keys[order[i]]) ++j;
    if (j - i == 1) {
      out.push_back(terms[order[i]]);
    } else {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t r = i; r < j; ++r) mx = std::max(mx, term_log_value(terms[order[r]], anchor));
      double w_sum = 0.0;
      Vec4 b = Vec4::Zero();
      bool identical = true;
      for (std::size_t r = i; r < j; ++r) {
        const auto& t = terms[order[r]];
        const double w = std::exp(term_log_value(t, anchor) - mx);
        w_sum += w;
        b += w * t.b;
        identical = identical && t.b == terms[order[i]].b;
      }
      ExpTerm merged;
      merged.b = identical ? terms[order[i]].b : Vec4(b / w_sum);
      merged.logc = mx + std::log(w_sum) + merged.b.dot(anchor);
      out.push_back(merged);
    }
    i = j;
  }
  return out;
}

struct RecursionStats {
  std::size_t max_terms_seen = 0;
  double pruned_mass = 0.0;   // largest relative mass removed in any regime at any step
  int coarsenings = 0;
};

/// Backward recursion V_n = M P V_{n-1} with V_0 = 1 over a set of regimes.
class BackwardRecursion {
 public:
  BackwardRecursion(std::vector<StepBlockSpec> blocks, Mat transition, double delta,
                    PricingOptions opt, Vec4 anchor)
      : blocks_(std::move(blocks)),
        p_(std::move(transition)),
        delta_(delta),
        opt_(std::move(opt)),
        anchor_(anchor),
        terms_(blocks_.size(), TermList{ExpTerm{}}) {
    RSGCIR_REQUIRE(p_.rows() == static_cast<Eigen::Index>(blocks_.size()) &&
                       p_.cols() == p_.rows(),
                   ErrorCode::DimensionMismatch, "transition matrix does not match regimes");
  }

  int regimes() const { return static_cast<int>(blocks_.size()); }
  int steps() const { return steps_; }
  const std::vector<TermList>& terms() const { return terms_; }
  const RecursionStats& stats() const { return stats_; }

  void step() {
    const int nreg = regimes();
    std::vector<TermList> next(nreg);
    for (int s = 0; s < nreg; ++s) {
      // Per-factor transform cache keyed on the continuation slope.
      std::array<std::unordered_map<double, AffineCoeffs>, kNumFactors> cache;
      TermList& out = next[s];
      for (int s2 = 0; s2 < nreg; ++s2) {
        const double pss = p_(s, s2);
        if (pss <= 0.0) continue;
        const double logp = std::log(pss);
        for (const auto& t : terms_[s2]) {
          ExpTerm nt;
          nt.logc = t.logc + logp;
          for (int k = 0; k < kNumFactors; ++k) {
            const double c1 = blocks_[s].c1(k);
            const double c2 = t.b(k);
            if (c1 == 0.0 && c2 == 0.0) continue;
            auto it = cache[k].find(c2);
            if (it == cache[k].end())
              it = cache[k].emplace(c2, affine_coefficients(blocks_[s].q[k], c1, c2, delta_)).first;
            nt.logc += it->second.a;
            nt.b(k) = it->second.b;
          }
          out.push_back(nt);
        }
      }
      out = reduce(out);
      stats_.max_terms_seen = std::max(stats_.max_terms_seen, out.size());
    }
    terms_ = std::move(next);
    ++steps_;
  }

  void advance_to(int n) {
    RSGCIR_REQUIRE(n >= steps_, ErrorCode::InvalidArgument, "recursion cannot run backwards");
    while (steps_ < n) step();
  }

  double value(int regime, const Vec4& x) const {
    return std::exp(log_mixture_value(terms_.at(regime), x));
  }

 private:
  TermList reduce(TermList terms) {
    if (opt_.scheme == PricingScheme::Anchored)
      return merge_terms(terms, Vec4::Constant(std::numeric_limits<double>::infinity()), anchor_);
    Vec4 h;
    for (int k = 0; k < kNumFactors; ++k)
      h(k) = opt_.merge_tol / std::max(std::abs(anchor_(k)), opt_.merge_floor);
    terms = merge_terms(terms, h, anchor_);
    terms = prune(std::move(terms));
    int rounds = 0;
    while (terms.size() > opt_.max_terms && rounds < 8) {
      h *= 4.0;
      ++rounds;
      terms = merge_terms(terms, h, anchor_);
    }
    stats_.coarsenings = std::max(stats_.coarsenings, rounds);
    if (terms.size() > opt_.max_terms) {
      std::vector<double> lv;
      for (const auto& t : terms) lv.push_back(term_log_value(t, anchor_));
      std::vector<std::size_t> order(terms.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return lv[a] > lv[b]; });
      const double total = logsumexp(lv);
      TermList kept;
      double dropped = 0.0;
      for (std::size_t r = 0; r < order.size(); ++r) {
        if (r < opt_.max_terms) {
          kept.push_back(terms[order[r]]);
        } else {
          dropped += std::exp(lv[order[r]] - total);
        }
      }
      logger()->warn("term cap {} reached; dropped relative mass {:.3e}", opt_.max_terms, dropped);
      stats_.pruned_mass = std::max(stats_.pruned_mass, dropped);
      terms = std::move(kept);
    }
    return terms;
  }

  TermList prune(TermList terms) {
    if (terms.size() <= 1) return terms;
    std::vector<double> lv;
    for (const auto& t : terms) lv.push_back(term_log_value(t, anchor_));
    const double total = logsumexp(lv);
    TermList kept;
    double dropped = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const double rel = std::exp(lv[i] - total);
      if (rel < opt_.prune_tol) {
        dropped += rel;
      } else {
        kept.push_back(terms[i]);
      }
    }
    if (dropped > 0.0) logger()->debug("pruned relative mass {:.3e}", dropped);
    stats_.pruned_mass = std::max(stats_.pruned_mass, dropped);
    return kept;
  }

  std::vector<StepBlockSpec> blocks_;
  Mat p_;
  double delta_;
  PricingOptions opt_;
  Vec4 anchor_;
  std::vector<TermList> terms_;
  int steps_ = 0;
  RecursionStats stats_;
};

// ---------------------------------------------------------------------------
// Model-level operations

inline Vec4 resolve_anchor(const ModelSpec& m, const PricingOptions& opt) {
  return opt.anchor ? *opt.anchor : stationary_anchor(m);
}

inline StepBlockSpec sovereign_block(const ModelSpec& m, Curve curve, int sr) {
  StepBlockSpec spec;
  for (int k = 0; k < kNumFactors; ++k)
    spec.q[k] = m.factor(k, k < kNumRateFactors ? sr : 0).q;
  spec.c1 = short_rate_loadings(curve);
  return spec;
}

inline OneStepBlock one_step_discount_block(const ModelSpec& m, Curve curve, int sr, double delta) {
  return one_step_transform(sovereign_block(m, curve, sr), Vec4::Zero(), delta);
}

/// max(c(s_c|s_r)(x1 + x2) + x4, floor).
inline double mu_driver(const ModelSpec& m, const Vec4& x, int sr, int sc) {
  return std::max(m.passthrough(sr, sc) * (x(0) + x(1)) + x(3), m.mu_floor);
}

inline Vec4 mode_loadings_for(double d, double c) { return {1.0 - d * c, 1.0 - d * c, 1.0, -d}; }

inline Vec4 mode_loadings(const ModelSpec& m, int j, int joint) {
  return mode_loadings_for(m.lando.d(j), m.passthrough(m.rate_of(joint), m.credit_of(joint)));
}

inline StepBlockSpec mode_block(const ModelSpec& m, int j, int joint) {
  StepBlockSpec spec;
  for (int k = 0; k < kNumFactors; ++k) spec.q[k] = m.factor(k, m.regime_for_factor(k, joint)).q;
  spec.c1 = mode_loadings(m, j, joint);
  return spec;
}

inline BackwardRecursion sovereign_recursion(const ModelSpec& m, Curve curve,
                                             const PricingOptions& opt) {
  std::vector<StepBlockSpec> blocks;
  for (int s = 0; s < m.n_rate(); ++s) blocks.push_back(sovereign_block(m, curve, s));
  return {blocks, transition_matrix(m.qr, m.grid_delta).p, m.grid_delta, opt,
          resolve_anchor(m, opt)};
}

inline BackwardRecursion mode_recursion(const ModelSpec& m, int j, const PricingOptions& opt) {
  std::vector<StepBlockSpec> blocks;
  for (int s = 0; s < m.n_joint(); ++s) blocks.push_back(mode_block(m, j, s));
  return {blocks, transition_matrix(m.joint_generator(), m.grid_delta).p, m.grid_delta, opt,
          resolve_anchor(m, opt)};
}

/// Per-rate-regime zero-coupon prices maturing n grid steps ahead.
/// Under the anchored scheme without an explicit anchor, the anchor is x itself.
inline RegimePriceVector discount_bond_prices(const ModelSpec& m, Curve curve, const Vec4& x, int n,
                                              PricingOptions opt = {}) {
  RSGCIR_REQUIRE(n >= 0, ErrorCode::InvalidArgument, "n must be nonnegative");
  if (opt.scheme == PricingScheme::Anchored && !opt.anchor) opt.anchor = x;
  auto rec = sovereign_recursion(m, curve, opt);
  rec.advance_to(n);
  RegimePriceVector out{Vec(m.n_rate()), n * m.grid_delta};
  for (int s = 0; s < m.n_rate(); ++s) out.values(s) = rec.value(s, x);
  return out;
}

/// Per-joint-regime values of mode j.
inline RegimePriceVector corporate_mode_values(const ModelSpec& m, int j, const Vec4& x, int n,
                                               PricingOptions opt = {}) {
  RSGCIR_REQUIRE(n >= 0, ErrorCode::InvalidArgument, "n must be nonnegative");
  if (opt.scheme == PricingScheme::Anchored && !opt.anchor) opt.anchor = x;
  auto rec = mode_recursion(m, j, opt);
  rec.advance_to(n);
  RegimePriceVector out{Vec(m.n_joint()), n * m.grid_delta};
  for (int s = 0; s < m.n_joint(); ++s) out.values(s) = rec.value(s, x);
  return out;
}

inline RegimePriceVector corporate_from_modes(const ModelSpec& m, int rating,
                                              const std::vector<RegimePriceVector>& modes) {
  RSGCIR_REQUIRE(rating >= 0 && rating < m.lando.weights.rows(), ErrorCode::InvalidArgument,
                 "rating must be a non-default state");
  RegimePriceVector out{Vec::Zero(m.n_joint()), modes.front().maturity};
  for (std::size_t j = 0; j < modes.size(); ++j)
    out.values += m.lando.weights(rating, j) * modes[j].values;
  return out;
}

/// v^{i,S} = sum_j w_ij u_j^S.
inline RegimePriceVector corporate_price(const ModelSpec& m, int rating, const Vec4& x, int n,
                                         const PricingOptions& opt = {}) {
  std::vector<RegimePriceVector> modes;
  for (Eigen::Index j = 0; j < m.lando.d.size(); ++j)
    modes.push_back(corporate_mode_values(m, static_cast<int>(j), x, n, opt));
  return corporate_from_modes(m, rating, modes);
}

inline double mix_prices(const RegimePriceVector& prices, const Vec& beliefs) {
  RSGCIR_REQUIRE(prices.values.size() == beliefs.size(), ErrorCode::DimensionMismatch,
                 "belief vector does not match regime count");
  RSGCIR_REQUIRE((beliefs.array() >= 0.0).all() && std::abs(beliefs.sum() - 1.0) <= 1e-10,
                 ErrorCode::InvalidArgument, "beliefs must be a probability vector");
  const double v = prices.values.dot(beliefs);
  return std::clamp(v, prices.values.minCoeff(), prices.values.maxCoeff());
}

inline double price_to_yield(double price, double tau) {
  RSGCIR_REQUIRE(price > 0.0 && std::isfinite(price), ErrorCode::NonPositivePrice,
                 "price must be positive");
  RSGCIR_REQUIRE(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
  return -std::log(price) / tau;
}

struct SpreadDecomposition {
  double sovereign = 0.0;
  double policy_bank_spread = 0.0;
  double corporate_spread = 0.0;
  double total() const { return sovereign + policy_bank_spread + corporate_spread; }
};

inline SpreadDecomposition spread_decomposition(double y_cgb, double y_cdb, double y_corp) {
  return {y_cgb, y_cdb - y_cgb, y_corp - y_cdb};
}

inline double prob_weighted_mean(const std::vector<double>& series,
                                 const std::vector<double>& weights) {
  RSGCIR_REQUIRE(series.size() == weights.size(), ErrorCode::DimensionMismatch,
                 "series and weights differ in length");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    RSGCIR_REQUIRE(weights[t] >= 0.0 && weights[t] <= 1.0, ErrorCode::InvalidArgument,
                   "weights must lie in [0, 1]");
    num += weights[t] * series[t];
    den += weights[t];
  }
  RSGCIR_REQUIRE(den > 0.0, ErrorCode::ZeroWeightMass, "weights sum to zero");
  return num / den;
}

// ---------------------------------------------------------------------------
// Precomputed term structures

/// Term lists for a set of maturities (in grid steps); independent of the state,
/// so they can be evaluated at many states after one pass.
class TermStructure {
 public:
  TermStructure() = default;

  TermStructure(BackwardRecursion rec, std::vector<int> steps) : steps_(std::move(steps)) {
    std::vector<int> sorted = steps_;
    std::sort(sorted.begin(), sorted.end());
    for (int n : sorted) {
      rec.advance_to(n);
      snapshots_[n] = rec.terms();
    }
    stats_ = rec.stats();
  }

  const std::vector<int>& steps() const { return steps_; }
  const RecursionStats& stats() const { return stats_; }
  const TermList& terms(int n, int regime) const { return snapshots_.at(n).at(regime); }
  int regimes() const { return snapshots_.empty() ? 0 : static_cast<int>(snapshots_.begin()->second.size()); }

  double log_price(int n, int regime, const Vec4& x) const {
    return log_mixture_value(terms(n, regime), x);
  }
  double price(int n, int regime, const Vec4& x) const { return std::exp(log_price(n, regime, x)); }

 private:
  std::vector<int> steps_;
  std::map<int, std::vector<TermList>> snapshots_;
  RecursionStats stats_;
};

inline std::vector<int> maturity_steps(const ModelSpec& m, const std::vector<double>& maturities) {
  std::vector<int> out;
  for (double tau : maturities) {
    const double n = tau / m.grid_delta;
    RSGCIR_REQUIRE(std::abs(n - std::round(n)) < 1e-6, ErrorCode::InvalidArgument,
                   "maturity " + std::to_string(tau) + " is not on the pricing grid");
    out.push_back(static_cast<int>(std::lround(n)));
  }
  return out;
}

/// Sovereign and corporate term structures for the configured maturities.
struct ModelTermStructures {
  std::vector<double> maturities;
  std::vector<int> steps;
  TermStructure cgb;
  TermStructure cdb;
  std::vector<TermStructure> modes;  // one per Lando mode, over joint regimes

  double sovereign_yield(Curve c, std::size_t mat, int sr, const Vec4& x) const {
    const auto& ts = c == Curve::CGB ? cgb : cdb;
    return -ts.log_price(steps[mat], sr, x) / maturities[mat];
  }

  double corporate_price(const ModelSpec& m, int rating, std::size_t mat, int joint,
                         const Vec4& x) const {
    double v = 0.0;
    for (std::size_t j = 0; j < modes.size(); ++j)
      v += m.lando.weights(rating, j) * modes[j].price(steps[mat], joint, x);
    return v;
  }
};

inline ModelTermStructures build_term_structures(const ModelSpec& m,
                                                 const std::vector<double>& maturities,
                                                 const PricingOptions& opt, bool with_modes) {
  ModelTermStructures out;
  out.maturities = maturities;
  out.steps = maturity_steps(m, maturities);
  out.cgb = TermStructure(sovereign_recursion(m, Curve::CGB, opt), out.steps);
  out.cdb = TermStructure(sovereign_recursion(m, Curve::CDB, opt), out.steps);
  if (with_modes) {
    for (Eigen::Index j = 0; j < m.lando.d.size(); ++j)
      out.modes.emplace_back(mode_recursion(m, static_cast<int>(j), opt), out.steps);
  }
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_PRICING_HPP
