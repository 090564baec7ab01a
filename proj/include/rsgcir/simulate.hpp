#ifndef RSGCIR_SIMULATE_HPP
#define RSGCIR_SIMULATE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rsgcir/affine_core.hpp"
#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/model.hpp"
#include "rsgcir/panel.hpp"
#include "rsgcir/parallel.hpp"
#include "rsgcir/pricing.hpp"
#include "rsgcir/regimes.hpp"
#include "rsgcir/rng.hpp"

namespace rsgcir {

/// Piecewise-constant regime path: state `states[i]` holds on [times[i], times[i+1]).
struct RegimePath {
  std::vector<double> times{0.0};
  std::vector<int> states{0};
  double horizon = 0.0;

  int at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return states[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  /// Fraction of [0, horizon] spent in state s.
  double occupation(int s) const {
    double total = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      const double end = i + 1 < times.size() ? times[i + 1] : horizon;
      if (states[i] == s) total += end - times[i];
    }
    return horizon > 0.0 ? total / horizon : (states.front() == s ? 1.0 : 0.0);
  }
};

/// Gillespie simulation from `initial`.
inline RegimePath simulate_ctmc(const CtmcGenerator& g, double horizon, int initial,
                                Philox4x32& rng) {
  RSGCIR_REQUIRE(horizon >= 0.0, ErrorCode::InvalidArgument, "horizon must be nonnegative");
  RSGCIR_REQUIRE(initial >= 0 && initial < g.size(), ErrorCode::InvalidArgument,
                 "initial regime out of range");
  RegimePath path;
  path.horizon = horizon;
  path.states.front() = initial;
  const Mat& q = g.q();
  int s = initial;
  double t = 0.0;
  while (true) {
    const double rate = -q(s, s);
    if (rate <= 0.0) break;
    t += rng.exponential(rate);
    if (t >= horizon) break;
    double u = rng.uniform() * rate;
    int next = s;
    for (int j = 0; j < g.size(); ++j) {
      if (j == s) continue;
      next = j;
      u -= q(s, j);
      if (u <= 0.0) break;
    }
    s = next;
    path.times.push_back(t);
    path.states.push_back(s);
  }
  return path;
}

/// Draws the initial regime from the stationary law (state 0 for reducible chains).
inline int draw_initial_regime(const CtmcGenerator& g, Philox4x32& rng) {
  if (!is_irreducible(g)) return 0;
  const Vec pi = stationary_distribution(g);
  double u = rng.uniform();
  for (int s = 0; s + 1 < g.size(); ++s) {
    u -= pi(s);
    if (u <= 0.0) return s;
  }
  return g.size() - 1;
}

inline RegimePath simulate_ctmc(const CtmcGenerator& g, double horizon, std::uint64_t seed,
                                std::optional<int> initial = std::nullopt,
                                std::uint64_t stream = streams::kRateRegime) {
  Philox4x32 rng(seed, stream);
  const int s0 = initial ? *initial : draw_initial_regime(g, rng);
  return simulate_ctmc(g, horizon, s0, rng);
}

/// One full-truncation Euler step: the variance alpha + beta x is floored at zero.
inline double gcir_euler_step(const GcirParams& p, double x, double dt, double z,
                              bool* floored = nullptr) {
  const double v = p.alpha() + p.beta() * x;
  if (floored) *floored = v < 0.0;
  return x + p.kappa() * (p.theta() - x) * dt + std::sqrt(std::max(v, 0.0) * dt) * z;
}

struct SamplePath {
  double dt = 0.0;
  std::vector<double> x;  // x[0] = x0, x[i] at time i * dt
  std::size_t floored_steps = 0;

  double floored_fraction() const {
    return x.size() > 1 ? static_cast<double>(floored_steps) / (x.size() - 1) : 0.0;
  }
};

inline int steps_for(double horizon, double dt) {
  RSGCIR_REQUIRE(dt > 0.0 && horizon >= 0.0, ErrorCode::InvalidArgument,
                 "dt must be positive and horizon nonnegative");
  const double n = horizon / dt;
  RSGCIR_REQUIRE(std::abs(n - std::round(n)) < 1e-6 * std::max(1.0, n), ErrorCode::InvalidArgument,
                 "horizon is not a multiple of dt");
  return static_cast<int>(std::lround(n));
}

/// Euler path with parameters chosen by the regime in force at each step's start.
inline SamplePath simulate_gcir(const std::vector<GcirParams>& by_regime, double x0, double horizon,
                                double dt, const RegimePath* regimes, Philox4x32& rng) {
  RSGCIR_REQUIRE(!by_regime.empty(), ErrorCode::InvalidArgument, "no parameters");
  const int n = steps_for(horizon, dt);
  SamplePath out;
  out.dt = dt;
  out.x.reserve(n + 1);
  out.x.push_back(x0);
  double x = x0;
  for (int i = 0; i < n; ++i) {
    const int s = regimes ? regimes->at(i * dt) : 0;
    const GcirParams& p = by_regime.at(s);
    const bool stochastic = p.alpha() > 0.0 || p.beta() > 0.0;
    bool floored = false;
    x = gcir_euler_step(p, x, dt, stochastic ? rng.normal() : 0.0, &floored);
    out.floored_steps += floored;
    out.x.push_back(x);
  }
  return out;
}

inline SamplePath simulate_gcir(const GcirParams& p, double x0, double horizon, double dt,
                                std::uint64_t seed, std::uint64_t stream = streams::kFactorBase) {
  Philox4x32 rng(seed, stream);
  return simulate_gcir(std::vector<GcirParams>{p}, x0, horizon, dt, nullptr, rng);
}

struct McEstimate {
  double mean = 0.0;
  double se = 0.0;

  bool within(double value, double n_se) const { return std::abs(value - mean) <= n_se * se; }
};

/// Mean and standard error of per-path values, summed in path order.
inline McEstimate summarize(const std::vector<double>& v) {
  McEstimate e;
  if (v.empty()) return e;
  double s = 0.0;
  for (double x : v) s += x;
  e.mean = s / v.size();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.se = std::sqrt(ss / (v.size() - 1) / v.size());
  }
  return e;
}

/// Monte Carlo estimate of E[exp(-c1 int_0^tau X du - c2 X_tau)] from x0, with the
/// integral taken by the trapezoid rule on the Euler grid.
inline McEstimate mc_transform_oracle(const GcirParams& p, double x0, double c1, double c2,
                                      double tau, std::size_t paths, double dt, std::uint64_t seed,
                                      int threads = 1) {
  RSGCIR_REQUIRE(paths >= 10000, ErrorCode::InvalidArgument, "oracle needs at least 1e4 paths");
  if (c1 == 0.0 && c2 == 0.0) return {1.0, 0.0};
  const int n = steps_for(tau, dt);
  const bool stochastic = p.alpha() > 0.0 || p.beta() > 0.0;
  std::vector<double> values(paths);
  parallel_for(paths, threads, [&](std::size_t i) {
    Philox4x32 rng(seed, streams::kPathBase + i);
    double x = x0;
    double integral = 0.0;
    for (int k = 0; k < n; ++k) {
      const double next = gcir_euler_step(p, x, dt, stochastic ? rng.normal() : 0.0);
      integral += 0.5 * (x + next) * dt;
      x = next;
    }
    values[i] = std::exp(-c1 * integral - c2 * x);
  });
  return summarize(values);
}

// ---------------------------------------------------------------------------
// Model-level Monte Carlo pricing

struct McPriceOptions {
  std::vector<double> maturities{1.0, 5.0, 10.0};
  std::size_t paths = 100000;
  int substeps = 64;  // Euler steps per pricing-grid step
  std::uint64_t seed = 1;
  int threads = 1;
};

struct McPriceResult {
  std::vector<double> maturities;
  std::vector<McEstimate> cgb;
  std::vector<McEstimate> cdb;
  std::vector<std::vector<McEstimate>> corporate;  // [rating][maturity]
};

/// Conditional Monte Carlo prices from (x0, s_r, s_c) under Q. Regimes follow the
/// CTMC observed on the pricing grid and stay fixed within each grid step, as in
/// the backward recursion. Given a path, corporate survival is the exact row sum
/// of exp((Lambda - diag(nu)) int mu du).
inline McPriceResult mc_bond_prices(const ModelSpec& m, const Vec4& x0, int sr0, int sc0,
                                    const McPriceOptions& opt) {
  m.validate();
  const std::vector<int> steps = maturity_steps(m, opt.maturities);
  const int n_max = *std::max_element(steps.begin(), steps.end());
  const int nm = static_cast<int>(steps.size());
  const int nr = m.rating.nondefault();
  const double delta = m.grid_delta;
  const double dt = delta / opt.substeps;
  const Mat lt = m.rating.lambda_tilde();
  const int per_path = nm * (2 + nr);
  std::vector<double> values(opt.paths * per_path);

  parallel_for(opt.paths, opt.threads, [&](std::size_t path) {
    Philox4x32 rng(opt.seed, streams::kPathBase + path);
    const RegimePath rp = simulate_ctmc(m.qr, n_max * delta, sr0, rng);
    const RegimePath cp = simulate_ctmc(m.qc, n_max * delta, sc0, rng);
    Vec4 x = x0;
    double i_cgb = 0.0, i_cdb = 0.0, i_mu = 0.0;
    double* out = values.data() + path * per_path;
    int next_mat = 0;
    std::vector<int> order(nm);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return steps[a] < steps[b]; });
    auto record = [&](int step) {
      while (next_mat < nm && steps[order[next_mat]] == step) {
        const int j = order[next_mat++];
        const double d_cdb = std::exp(-i_cdb);
        out[j] = std::exp(-i_cgb);
        out[nm + j] = d_cdb;
        const Vec surv = expm(lt * i_mu).rowwise().sum();
        for (int r = 0; r < nr; ++r) out[(2 + r) * nm + j] = d_cdb * surv(r);
      }
    };
    record(0);
    for (int n = 0; n < n_max; ++n) {
      const int sr = rp.at(n * delta);
      const int sc = cp.at(n * delta);
      std::array<const GcirParams*, kNumFactors> q;
      std::array<bool, kNumFactors> stochastic;
      for (int k = 0; k < kNumFactors; ++k) {
        q[k] = &m.factor(k, k < kNumRateFactors ? sr : sc).q;
        stochastic[k] = q[k]->alpha() > 0.0 || q[k]->beta() > 0.0;
      }
      const double c = m.passthrough(sr, sc);
      auto mu = [&](const Vec4& v) { return std::max(c * (v(0) + v(1)) + v(3), m.mu_floor); };
      double mu_prev = mu(x);
      for (int sub = 0; sub < opt.substeps; ++sub) {
        Vec4 nx;
        for (int k = 0; k < kNumFactors; ++k)
          nx(k) = stochastic[k] ? gcir_euler_step(*q[k], x(k), dt, rng.normal())
                                : x(k) + q[k]->kappa() * (q[k]->theta() - x(k)) * dt;
        const double r0 = x(0) + x(1), r1 = nx(0) + nx(1);
        i_cgb += 0.5 * (r0 + r1) * dt;
        i_cdb += 0.5 * (r0 + x(2) + r1 + nx(2)) * dt;
        const double mu_next = mu(nx);
        i_mu += 0.5 * (mu_prev + mu_next) * dt;
        mu_prev = mu_next;
        x = nx;
      }
      record(n + 1);
    }
  });

  McPriceResult res;
  res.maturities = opt.maturities;
  std::vector<double> column(opt.paths);
  auto column_estimate = [&](int slot) {
    for (std::size_t p = 0; p < opt.paths; ++p) column[p] = values[p * per_path + slot];
    return summarize(column);
  };
  for (int j = 0; j < nm; ++j) {
    res.cgb.push_back(column_estimate(j));
    res.cdb.push_back(column_estimate(nm + j));
  }
  res.corporate.resize(nr);
  for (int r = 0; r < nr; ++r)
    for (int j = 0; j < nm; ++j) res.corporate[r].push_back(column_estimate((2 + r) * nm + j));
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic panels

struct PanelConfig {
  int weeks = 550;
  double noise_scale = 1.0;
  std::string start_date = "2014-01-03";
  int substeps = 16;
  PricingOptions pricing{};
  std::optional<Vec4> x0;  // defaults to the initial regimes' physical long-run levels
};

struct PanelTruth {
  std::vector<int> rate_regime;
  std::vector<int> credit_regime;
  Mat factors;  // weeks x 4
};

struct SimulatedPanel {
  CurvePanel panel;
  PanelTruth truth;
};

/// Simulates physical factor and regime paths and emits noisy weekly yields:
/// CGB and CDB from the rate regime, corporate segments from the joint regime.
inline SimulatedPanel simulate_panel(const ModelSpec& m, const PanelConfig& cfg,
                                     std::uint64_t seed) {
  m.validate();
  RSGCIR_REQUIRE(cfg.weeks > 0, ErrorCode::InvalidArgument, "weeks must be positive");
  RSGCIR_REQUIRE(cfg.substeps >= 16, ErrorCode::InvalidArgument,
                 "Euler step must be at most grid_delta / 16");
  const double delta = m.grid_delta;
  const double dt = delta / cfg.substeps;
  const int T = cfg.weeks;

  Philox4x32 rate_rng(seed, streams::kRateRegime), credit_rng(seed, streams::kCreditRegime);
  const int sr0 = draw_initial_regime(m.qr, rate_rng);
  const int sc0 = draw_initial_regime(m.qc, credit_rng);
  const RegimePath rp = simulate_ctmc(m.qr, T * delta, sr0, rate_rng);
  const RegimePath cp = simulate_ctmc(m.qc, T * delta, sc0, credit_rng);

  Vec4 x;
  if (cfg.x0) {
    x = *cfg.x0;
  } else {
    for (int k = 0; k < kNumFactors; ++k) x(k) = m.factor(k, k < kNumRateFactors ? sr0 : sc0).p.theta();
  }
  const Eigen::LLT<Mat> llt(m.omega);
  RSGCIR_REQUIRE(llt.info() == Eigen::Success, ErrorCode::CholeskyFailure,
                 "omega is not positive definite");
  const Mat chol = llt.matrixL();

  SimulatedPanel out;
  out.truth.factors.resize(T, kNumFactors);
  Philox4x32 factor_rng(seed, streams::kFactorBase);
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      for (int sub = 0; sub < cfg.substeps; ++sub) {
        const double time = (t - 1) * delta + sub * dt;
        const int sr = rp.at(time), sc = cp.at(time);
        Eigen::Vector3d z(factor_rng.normal(), factor_rng.normal(), factor_rng.normal());
        const Eigen::Vector3d zc = chol * z;
        for (int k = 0; k < kNumRateFactors; ++k) x(k) = gcir_euler_step(m.factor(k, sr).p, x(k), dt, zc(k));
        x(3) = gcir_euler_step(m.factor(3, sc).p, x(3), dt, factor_rng.normal());
      }
    }
    out.truth.factors.row(t) = x.transpose();
    out.truth.rate_regime.push_back(rp.at(t * delta));
    out.truth.credit_regime.push_back(cp.at(t * delta));
  }

  const auto& meas = m.measurement;
  const auto ts = build_term_structures(m, meas.maturities, cfg.pricing, true);
  CurvePanel& panel = out.panel;
  panel.dates = weekly_dates(cfg.start_date, T);
  panel.maturities = meas.maturities;
  panel.add_segment("CGB");
  panel.add_segment("CDB");
  for (int r : meas.credit_ratings) panel.add_segment(m.rating_labels.at(r));
  Mat& cgb = panel.yields[0];
  Mat& cdb = panel.yields[1];
  std::vector<Mat*> corp;
  for (std::size_t i = 0; i < meas.credit_ratings.size(); ++i) corp.push_back(&panel.yields[2 + i]);

  Philox4x32 noise_rng(seed, streams::kNoise);
  for (int t = 0; t < T; ++t) {
    const Vec4 xt = out.truth.factors.row(t).transpose();
    const int sr = out.truth.rate_regime[t], sc = out.truth.credit_regime[t];
    const int joint = m.joint_index(sr, sc);
    for (std::size_t j = 0; j < meas.maturities.size(); ++j) {
      const Eigen::Index c = static_cast<Eigen::Index>(j);
      cgb(t, c) = ts.sovereign_yield(Curve::CGB, j, sr, xt) +
                  cfg.noise_scale * meas.rate_noise_sd(sr, 0) * noise_rng.normal();
      cdb(t, c) = ts.sovereign_yield(Curve::CDB, j, sr, xt) +
                  cfg.noise_scale * meas.rate_noise_sd(sr, 1) * noise_rng.normal();
      for (std::size_t i = 0; i < corp.size(); ++i) {
        const double v = ts.corporate_price(m, meas.credit_ratings[i], j, joint, xt);
        (*corp[i])(t, c) = price_to_yield(v, meas.maturities[j]) +
                           cfg.noise_scale * meas.credit_noise_sd(sc, static_cast<Eigen::Index>(i)) *
                               noise_rng.normal();
      }
    }
  }
  return out;
}

}  // namespace rsgcir

#endif  // RSGCIR_SIMULATE_HPP
