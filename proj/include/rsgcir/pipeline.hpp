#ifndef RSGCIR_PIPELINE_HPP
#define RSGCIR_PIPELINE_HPP

// Subcommand orchestration behind the rsgcir CLI. Each command reads the
// configuration plus earlier artifacts from the output directory and writes
// its own artifacts there.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rsgcir/config.hpp"
#include "rsgcir/diagnostics.hpp"
#include "rsgcir/estimation.hpp"
#include "rsgcir/filters.hpp"
#include "rsgcir/io.hpp"
#include "rsgcir/pricing.hpp"
#include "rsgcir/ratings.hpp"
#include "rsgcir/report.hpp"
#include "rsgcir/simulate.hpp"

namespace rsgcir {

inline const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> c{"simulate",        "hmm",   "calibrate-ratings", "estimate-rates",
                                          "estimate-credit", "price", "decompose",         "validate",
                                          "report"};
  return c;
}

struct RunContext {
  RunConfig cfg;
  std::filesystem::path out;
  std::vector<std::string> outputs;  // file names written by the current command, in order

  std::string path(const std::string& name) const { return (out / name).string(); }
  bool exists(const std::string& name) const { return std::filesystem::exists(out / name); }

  void emit(const std::string& name, const std::string& text) {
    auto f = open_output(path(name));
    f << text;
    RSGCIR_REQUIRE(f.good(), ErrorCode::InvalidArgument, "failed writing " + path(name));
    if (std::find(outputs.begin(), outputs.end(), name) == outputs.end()) outputs.push_back(name);
  }

  void emit(const std::string& name, const CsvTable& t) {
    std::ostringstream s;
    t.write(s);
    emit(name, s.str());
  }

  void emit(const std::string& name, const json& j) { emit(name, j.dump(2) + "\n"); }

  /// Removes everything this command wrote; used when a stage fails midway.
  void discard_outputs() {
    for (const auto& name : outputs) std::filesystem::remove(out / name);
    outputs.clear();
  }
};

struct PipelineResult {
  int status = 0;  // 0 success; 1 when validate finds a failing check
  json summary;
};

namespace detail {

inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline CurvePanel load_panel(const RunContext& ctx) {
  if (!ctx.cfg.panel_path.empty()) return read_panel_csv(ctx.cfg.panel_path);
  RSGCIR_REQUIRE(ctx.exists("panel.csv"), ErrorCode::SchemaError,
                 "no panel: set paths.panel or run simulate first");
  return read_panel_csv(ctx.path("panel.csv"));
}

inline json estimates_json(const EstimationResult& r, Stage stage) {
  json j;
  j["stage"] = to_string(stage);
  j["loglik"] = number(r.loglik);
  j["start_loglik"] = number(r.start_loglik);
  j["evals"] = r.evals;
  j["converged"] = r.converged;
  j["best_start"] = r.best_start;
  j["seed"] = r.seed;
  const Vec rse = r.robust_se(), bse = r.bootstrap_se();
  j["parameters"] = json::array();
  for (int i = 0; i < r.estimates.size(); ++i) {
    json p;
    p["name"] = r.estimates.entries[i].name;
    p["transform"] = to_string(r.estimates.entries[i].transform);
    p["estimate"] = number(r.estimates.values(i));
    p["robust_se"] = rse.size() > i ? number(rse(i)) : json(nullptr);
    p["bootstrap_se"] = bse.size() > i ? number(bse(i)) : json(nullptr);
    j["parameters"].push_back(p);
  }
  return j;
}

/// Parameters stored by an earlier estimate command, bound to `m`.
inline std::optional<ParamVector> stored_estimates(const RunContext& ctx, const ModelSpec& m, const std::string& file) {
  if (!ctx.exists(file)) return std::nullopt;
  json j;
  try {
    std::ifstream in(ctx.path(file));
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, file + ": " + e.what());
  }
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& p : j.at("parameters")) {
    names.push_back(p.at("name").get<std::string>());
    values.push_back(p.at("estimate").get<double>());
  }
  ParamVector pv = make_params(m, names);
  for (int i = 0; i < pv.size(); ++i) pv.values(i) = values[static_cast<std::size_t>(i)];
  return pv;
}

inline ModelSpec model_with_estimates(const RunContext& ctx, ModelSpec m) {
  for (const char* f : {"estimates_rates.json", "estimates_credit.json"})
    if (const auto p = stored_estimates(ctx, m, f)) m = apply_params(m, *p);
  return m;
}

inline EstimationConfig estimation_config(const RunConfig& c) {
  EstimationConfig e = c.estimation.config;
  e.seed = c.seed;
  e.threads = c.threads;
  return e;
}

inline int nearest_maturity(const std::vector<double>& mats, double target) {
  int best = 0;
  for (std::size_t j = 1; j < mats.size(); ++j)
    if (std::abs(mats[j] - target) < std::abs(mats[best] - target)) best = static_cast<int>(j);
  return best;
}

inline std::vector<double> column(const Mat& m, int j) {
  return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
}

inline std::vector<std::string> rating_segments(const CurvePanel& p) {
  std::vector<std::string> out;
  for (const auto& s : p.segments)
    if (s != "CGB" && s != "CDB") out.push_back(s);
  return out;
}

/// Regime probability columns "prob_<label>" of a filter CSV.
inline std::optional<std::pair<std::vector<std::string>, Mat>> read_filter_probs(const RunContext& ctx,
                                                                                 const std::string& file, int t_len) {
  if (!ctx.exists(file)) return std::nullopt;
  auto in = open_input(ctx.path(file));
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  std::vector<int> cols;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("prob_", 0) == 0) {
      cols.push_back(static_cast<int>(i));
      labels.push_back(header[i].substr(5));
    }
  Mat w(t_len, static_cast<Eigen::Index>(cols.size()));
  int t = 0;
  while (std::getline(in, line) && t < t_len) {
    const auto f = split_csv_line(line);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto v = parse_double(f.at(cols[k]));
      RSGCIR_REQUIRE(v.has_value(), ErrorCode::SchemaError, file + ": bad probability");
      w(t, static_cast<Eigen::Index>(k)) = *v;
    }
    ++t;
  }
  RSGCIR_REQUIRE(t == t_len, ErrorCode::SchemaError, file + " does not match the panel length");
  return std::make_pair(labels, w);
}

// ---------------------------------------------------------------------------

inline PipelineResult run_simulate(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto sim = simulate_panel(c.model, c.simulate, c.seed);
  std::ostringstream panel, truth;
  write_panel_csv(sim.panel, panel);
  write_truth_csv(sim.panel, sim.truth, c.model, truth);
  ctx.emit("panel.csv", panel.str());
  ctx.emit("panel_truth.csv", truth.str());
  json s;
  s["weeks"] = sim.panel.size();
  s["segments"] = sim.panel.segments;
  s["maturities"] = sim.panel.maturities;
  std::vector<int> rate_count(c.model.n_rate()), credit_count(c.model.n_credit());
  for (int r : sim.truth.rate_regime) ++rate_count[r];
  for (int r : sim.truth.credit_regime) ++credit_count[r];
  for (int r = 0; r < c.model.n_rate(); ++r) s["rate_regime_weeks"][c.model.qr.labels()[r]] = rate_count[r];
  for (int r = 0; r < c.model.n_credit(); ++r) s["credit_regime_weeks"][c.model.qc.labels()[r]] = credit_count[r];
  ctx.emit("simulate.json", s);
  return {0, s};
}

inline std::vector<HmmSegmentFit> fit_segments(const RunConfig& c, const CurvePanel& panel, int max_states) {
  HmmOptions opt = c.hmm.options;
  opt.threads = c.threads;
  std::vector<HmmSegmentFit> out;
  for (const auto& seg : c.hmm.segments) {
    const Mat& y = panel.segment(seg);
    HmmSegmentFit f;
    f.segment = seg;
    f.dim = static_cast<int>(y.cols());
    for (int k = 1; k <= max_states; ++k) {
      f.fits.push_back(fit_hmm(y, k, c.seed, opt));
      f.t_len = static_cast<int>(y.rows()) - f.fits.back().dropped_rows;
      f.ic.push_back(information_criteria(f.fits.back().loglik, k, f.dim, f.t_len, opt.cov));
      f.classes.push_back(classify(f.fits.back().model, y));
    }
    out.push_back(std::move(f));
  }
  return out;
}

inline PipelineResult run_hmm(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto panel = load_panel(ctx);
  const auto segs = fit_segments(c, panel, c.hmm.max_states);
  ctx.emit("hmm_fit.csv", hmm_fit_table(segs));
  ctx.emit("hmm_moments.csv", hmm_moments_table(segs));
  if (c.hmm.max_states >= 2) {
    ctx.emit("hmm_durations.csv", hmm_durations_table(segs, c.model.grid_delta));
    ctx.emit("hmm_classification.csv", hmm_classification_table(panel.dates, segs));
  }
  json s;
  for (const auto& f : segs) {
    int best_aic = 0, best_bic = 0;
    for (std::size_t k = 1; k < f.ic.size(); ++k) {
      if (f.ic[k].aic < f.ic[best_aic].aic) best_aic = static_cast<int>(k);
      if (f.ic[k].bic < f.ic[best_bic].bic) best_bic = static_cast<int>(k);
    }
    json e;
    e["weeks"] = f.t_len;
    e["preferred_k_aic"] = best_aic + 1;
    e["preferred_k_bic"] = best_bic + 1;
    for (std::size_t k = 0; k < f.fits.size(); ++k) {
      e["converged"].push_back(f.fits[k].converged);
      e["degenerate_states"].push_back(f.fits[k].degenerate);
    }
    s[f.segment] = e;
  }
  ctx.emit("hmm.json", s);
  return {0, s};
}

inline PipelineResult run_calibrate_ratings(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto& rc = c.ratings;
  RatingTransition pp;
  if (!rc.counts.empty()) {
    auto in = open_input(rc.counts);
    pp = aggregate_to_coarse(read_migration_counts(in, rc.bucket_map, rc.counts));
  } else {
    RSGCIR_REQUIRE(!rc.transition.empty(), ErrorCode::SchemaError,
                   "ratings_calibration needs counts or transition_csv");
    pp = make_rating_transition(read_labeled_matrix(rc.transition).m, Measure::P);
  }
  const auto& labels = coarse_labels();
  const int n = pp.size() - 1;

  // Spread-implied default probabilities from mean rating spreads over CDB at
  // integer maturities; buckets or horizons without data get zero weight.
  const auto panel = load_panel(ctx);
  Mat q_imp = Mat::Zero(n, rc.t_max), w = Mat::Zero(n, rc.t_max), spread = Mat::Constant(n, rc.t_max, NAN);
  const Mat& cdb = panel.segment("CDB");
  for (int i = 0; i < n; ++i) {
    const int s = panel.segment_index(labels[i]);
    if (s < 0) continue;
    for (int t = 1; t <= rc.t_max; ++t) {
      const auto it = std::find(panel.maturities.begin(), panel.maturities.end(), static_cast<double>(t));
      if (it == panel.maturities.end()) continue;
      const auto j = it - panel.maturities.begin();
      double sum = 0.0;
      int cnt = 0;
      for (int d = 0; d < panel.size(); ++d) {
        const double v = panel.yields[s](d, j) - cdb(d, j);
        if (std::isfinite(v)) sum += v, ++cnt;
      }
      if (cnt == 0) continue;
      spread(i, t - 1) = sum / cnt;
      q_imp(i, t - 1) = spread_implied_default_prob(sum / cnt, t, rc.recovery);
      w(i, t - 1) = 1.0;
    }
  }
  CalibratePiOptions opt = rc.options;
  opt.seed = c.seed;
  const auto fit = calibrate_pi(pp, q_imp, w, rc.t_max, opt);
  const auto pq = risk_neutral_distortion(pp, fit.pi);
  const auto gen = embed_generator(pq);

  std::ostringstream a, b, g;
  write_labeled_matrix(pp.p, labels, a);
  write_labeled_matrix(pq.p, labels, b);
  write_labeled_matrix(gen.full(), labels, g);
  ctx.emit("pp.csv", a.str());
  ctx.emit("pq.csv", b.str());
  ctx.emit("rating_generator.csv", g.str());
  json s;
  for (int i = 0; i < n; ++i) {
    s["pi"][labels[i]] = fit.pi(i);
    for (int t = 0; t < rc.t_max; ++t) {
      s["mean_spread"][labels[i]].push_back(number(spread(i, t)));
      s["q_imp"][labels[i]].push_back(w(i, t) > 0 ? number(q_imp(i, t)) : json(nullptr));
    }
  }
  s["objective"] = fit.objective;
  s["initial_objective"] = fit.initial_objective;
  s["embedding_error"] = gen.reconstruction_error;
  ctx.emit("ratings.json", s);
  return {0, s};
}

inline void emit_rate_filter(RunContext& ctx, const CurvePanel& panel, const ModelSpec& m) {
  const auto out = rate_block_filter(rate_observations(panel, m), m, ctx.cfg.filter);
  CsvTable t;
  t.header = {"date"};
  for (const auto& l : m.qr.labels()) t.header.push_back("prob_" + l);
  for (const char* x : {"x1", "x2", "x3"}) t.header.push_back(x);
  for (int d = 0; d < panel.size(); ++d) {
    std::vector<std::string> r{panel.dates[d]};
    for (Eigen::Index k = 0; k < out.probs.cols(); ++k) r.push_back(format_double(out.probs(d, k)));
    for (int k = 0; k < 3; ++k) r.push_back(format_double(out.collapsed_mean(d, k)));
    t.add(r);
  }
  ctx.emit("rate_filter.csv", t);
}

inline void emit_credit_filter(RunContext& ctx, const CurvePanel& panel, const ModelSpec& m) {
  const auto rate = rate_block_filter(rate_observations(panel, m), m, ctx.cfg.filter);
  const auto out = credit_block_filter(credit_observations(panel, m), m, rate, ctx.cfg.filter);
  CsvTable t;
  t.header = {"date"};
  for (const auto& l : m.qc.labels()) t.header.push_back("prob_" + l);
  for (int d = 0; d < panel.size(); ++d) {
    std::vector<std::string> r{panel.dates[d]};
    for (Eigen::Index k = 0; k < out.marginal_probs.cols(); ++k) r.push_back(format_double(out.marginal_probs(d, k)));
    t.add(r);
  }
  ctx.emit("credit_filter.csv", t);
}

inline PipelineResult run_estimate(RunContext& ctx, Stage stage) {
  const auto& c = ctx.cfg;
  const auto panel = load_panel(ctx);
  ModelSpec m = c.model;
  std::optional<ParamVector> rate_estimates;
  if (stage == Stage::Credit) {
    rate_estimates = stored_estimates(ctx, m, "estimates_rates.json");
    if (rate_estimates) m = apply_params(m, *rate_estimates);
  }
  const auto& wanted = stage == Stage::Rate ? c.estimation.rate_params : c.estimation.credit_params;
  const auto names = wanted.empty() ? stage_parameter_names(m, stage) : wanted;
  const ParamVector start = make_params(m, names);

  auto r = maximize_stage(panel, m, stage, start, estimation_config(c), c.filter);
  if (c.estimation.sandwich) {
    SandwichConfig sc = c.estimation.sandwich_config;
    sc.threads = c.threads;
    const auto sw = sandwich_se(panel, m, stage, r.estimates, sc,
                                rate_estimates ? &*rate_estimates : nullptr, c.filter);
    r.robust_cov = sw.cov.bottomRightCorner(r.estimates.size(), r.estimates.size()).eval();
  }
  if (c.estimation.bootstrap_reps > 0) {
    BootstrapConfig bc;
    bc.reps = c.estimation.bootstrap_reps;
    bc.block_len = c.estimation.block_len;
    bc.seed = c.seed;
    bc.threads = c.threads;
    bc.optimizer = c.estimation.config.optimizer;
    r.bootstrap_cov = block_bootstrap(panel, m, stage, r.estimates, bc, c.filter).cov;
  }

  const ModelSpec fitted = apply_params(m, r.estimates);
  const std::string tag = stage == Stage::Rate ? "rates" : "credit";
  const json s = estimates_json(r, stage);
  ctx.emit("estimates_" + tag + ".json", s);
  ctx.emit("estimates_" + tag + ".csv", factor_estimates_table(fitted, r, stage));
  ctx.emit("params_" + tag + ".csv", parameter_table(r));
  if (stage == Stage::Rate)
    emit_rate_filter(ctx, panel, fitted);
  else
    emit_credit_filter(ctx, panel, fitted);
  return {0, s};
}

inline PipelineResult run_price(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const ModelSpec m = model_with_estimates(ctx, c.model);
  const Vec4 x = c.pricing.state ? *c.pricing.state : stationary_anchor(m);
  const auto& mats = c.pricing.maturities;
  const auto ts = build_term_structures(m, mats, c.pricing.options, true);
  const Vec pr = initial_probs(m.qr), pc = initial_probs(m.qc);

  CsvTable t;
  t.header = {"curve", "regime", "maturity_years", "yield"};
  const auto& rl = m.qr.labels();
  const auto& cl = m.qc.labels();
  const int nr = m.n_rate(), nc = m.n_credit();
  std::vector<std::string> curves{"CGB", "CDB"};
  for (int i = 0; i < m.rating.nondefault(); ++i) curves.push_back(m.rating_labels[i]);
  Mat mixed(static_cast<Eigen::Index>(curves.size()), static_cast<Eigen::Index>(mats.size()));
  bool positive = true, within = true;
  for (std::size_t j = 0; j < mats.size(); ++j) {
    for (int k = 0; k < 2; ++k) {
      const Curve cv = k == 0 ? Curve::CGB : Curve::CDB;
      double p_mix = 0.0, lo = INFINITY, hi = -INFINITY;
      for (int sr = 0; sr < nr; ++sr) {
        const double y = ts.sovereign_yield(cv, j, sr, x);
        const double p = std::exp(-y * mats[j]);
        p_mix += pr(sr) * p;
        lo = std::min(lo, p), hi = std::max(hi, p);
        t.add({curves[k], rl[sr], format_double(mats[j]), format_double(y)});
      }
      within = within && p_mix >= lo * (1 - 1e-14) && p_mix <= hi * (1 + 1e-14);
      mixed(k, static_cast<Eigen::Index>(j)) = price_to_yield(p_mix, mats[j]);
    }
    for (int i = 0; i < m.rating.nondefault(); ++i) {
      double p_mix = 0.0, lo = INFINITY, hi = -INFINITY;
      for (int sr = 0; sr < nr; ++sr)
        for (int sc = 0; sc < nc; ++sc) {
          const double p = ts.corporate_price(m, i, j, m.joint_index(sr, sc), x);
          positive = positive && p > 0.0;
          p_mix += pr(sr) * pc(sc) * p;
          lo = std::min(lo, p), hi = std::max(hi, p);
          t.add({curves[i + 2], rl[sr] + "/" + cl[sc], format_double(mats[j]), format_double(price_to_yield(p, mats[j]))});
        }
      within = within && p_mix >= lo * (1 - 1e-14) && p_mix <= hi * (1 + 1e-14);
      mixed(i + 2, static_cast<Eigen::Index>(j)) = price_to_yield(p_mix, mats[j]);
    }
  }
  for (std::size_t k = 0; k < curves.size(); ++k)
    for (std::size_t j = 0; j < mats.size(); ++j)
      t.add({curves[k], "mixed", format_double(mats[j]),
             format_double(mixed(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)))});
  ctx.emit("prices.csv", t);

  bool monotone = true;
  const auto& obs = m.measurement.credit_ratings;
  for (std::size_t j = 0; j < mats.size(); ++j) {
    double prev = mixed(1, static_cast<Eigen::Index>(j));  // credit curves sit above CDB
    for (int r : obs) {
      const double y = mixed(r + 2, static_cast<Eigen::Index>(j));
      monotone = monotone && y > prev;
      prev = y;
    }
  }
  json s;
  s["state"] = {x(0), x(1), x(2), x(3)};
  s["positive_prices"] = positive;
  s["mixed_within_regime_bounds"] = within;
  s["yields_increase_with_credit_risk"] = monotone;
  for (std::size_t k = 0; k < curves.size(); ++k)
    for (std::size_t j = 0; j < mats.size(); ++j)
      s["mixed_yields"][curves[k]].push_back(mixed(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
  ctx.emit("price.json", s);
  return {0, s};
}

inline PipelineResult run_decompose(RunContext& ctx) {
  const auto panel = load_panel(ctx);
  const auto ratings = rating_segments(panel);
  const auto probs = read_filter_probs(ctx, "rate_filter.csv", panel.size());
  const auto d = probs ? decompose_panel(panel, ratings, &probs->second, probs->first)
                       : decompose_panel(panel, ratings);
  CsvTable t;
  t.header = {"rating", "maturity_years", "regime", "sovereign", "policy_bank_spread", "corporate_spread",
              "corporate_yield"};
  for (const auto& r : d.rows)
    t.add({r.rating, format_double(r.maturity), r.regime, format_double(r.mean.sovereign),
           format_double(r.mean.policy_bank_spread), format_double(r.mean.corporate_spread),
           format_double(r.corporate_mean)});
  ctx.emit("decomposition.csv", t);
  json s;
  s["max_reconstruction_error"] = d.max_reconstruction_error;
  s["max_error_in_ulps"] = d.max_relative_error;
  s["identity_holds"] = d.max_relative_error <= 4.0;
  s["regime_weights"] = probs ? "rate_filter.csv" : "none";
  ctx.emit("decomposition.json", s);
  return {0, s};
}

// ---------------------------------------------------------------------------
// validate: fast oracle and invariant checks on the configured model

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline std::vector<Check> validation_checks(const ModelSpec& m) {
  std::vector<Check> out;
  auto add = [&](std::string name, double v, double tol) { out.push_back({std::move(name), v, tol, v <= tol}); };

  {
    Philox4x32 rng(20240601, 1);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const auto q = GcirParams::risk_neutral(0.1 + 2.0 * rng.uniform(), 0.05 * rng.uniform(), 0.01 * rng.uniform(),
                                              0.05 * rng.uniform());
      const double c1 = rng.uniform(), c2 = 0.5 * rng.uniform(), tau = 0.01 + 30.0 * rng.uniform();
      const auto cf = affine_coefficients(q, c1, c2, tau);
      const auto ode = riccati_oracle(q, c1, c2, tau, 20000);
      worst = std::max({worst, std::abs(cf.a - ode.a), std::abs(cf.b - ode.b)});
    }
    add("affine_closed_form_vs_ode", worst, 1e-8);
  }
  {
    double worst = 0.0;
    for (double tau : {0.5, 5.0, 30.0}) {
      const auto cf = affine_coefficients(GcirParams::risk_neutral(0.7, 0.03, 0.0, 0.02), 1.0, 0.0, tau);
      const auto cir = classical_cir_discount(0.7, 0.03, 0.02, tau);
      worst = std::max({worst, std::abs(cf.a - cir.a) / std::abs(cir.a), std::abs(cf.b - cir.b) / std::abs(cir.b)});
    }
    add("classical_cir_reduction", worst, 1e-12);
  }
  {
    const Mat joint = transition_matrix(m.joint_generator(), m.grid_delta).p;
    const Mat prod = Eigen::kroneckerProduct(transition_matrix(m.qr, m.grid_delta).p,
                                             transition_matrix(m.qc, m.grid_delta).p)
                         .eval();
    add("kronecker_identity", (joint - prod).cwiseAbs().maxCoeff(), 1e-10);
  }
  {
    const Vec rows = m.lando.weights.rowwise().sum();
    add("mode_weight_row_sums", (rows.array() - 1.0).abs().maxCoeff(), 1e-8);
    add("default_column_identity", m.lando.default_column_error, 1e-10);
    double worst = 0.0;
    const Mat dp = default_probabilities(m.rating, {1.0, 5.0, 10.0});
    for (int i = 0; i < m.rating.nondefault(); ++i)
      for (int t = 0; t < 3; ++t)
        worst = std::max(worst, std::abs(m.lando.survival(i, std::array{1.0, 5.0, 10.0}[t]) - (1.0 - dp(i, t))));
    add("spectral_survival_vs_expm", worst, 1e-8);
  }
  {
    const RatingGenerator adj = adjust_default_intensity(m.rating, Vec::Constant(m.rating.nondefault(), 1e-3));
    Mat a = m.rating.lambda_block, b = adj.lambda_block;
    a.diagonal().setZero();
    b.diagonal().setZero();
    add("delta_nu_keeps_migrations", (a - b).cwiseAbs().maxCoeff(), 0.0);
  }
  {
    const Vec4 x = stationary_anchor(m);
    const int n = 260;
    double worst = 0.0;
    const ModelSpec one = single_regime_copy(m, 0, 0);
    for (auto curve : {Curve::CGB, Curve::CDB}) {
      const auto p = discount_bond_prices(one, curve, x, n);
      double log_p = 0.0;
      const Vec4 c1 = short_rate_loadings(curve);
      for (int k = 0; k < kNumFactors; ++k) {
        if (c1(k) == 0.0) continue;
        const auto ac = affine_coefficients(one.factor(k, 0).q, c1(k), 0.0, n * m.grid_delta);
        log_p += ac.a - ac.b * x(k);
      }
      worst = std::max(worst, (p.values.array() - std::exp(log_p)).abs().maxCoeff());
    }
    add("regime_degenerate_pricing_collapse", worst, 1e-10);
    const auto p = discount_bond_prices(m, Curve::CDB, x, n);
    const double mixed = mix_prices(p, initial_probs(m.qr));
    const double excess = std::max(p.values.minCoeff() - mixed, mixed - p.values.maxCoeff());
    add("mixed_price_within_regime_bounds", std::max(0.0, excess), 1e-15);
  }
  return out;
}

inline PipelineResult run_validate(RunContext& ctx) {
  auto checks = validation_checks(ctx.cfg.model);
  if (!ctx.cfg.panel_path.empty() || ctx.exists("panel.csv")) {
    const auto panel = load_panel(ctx);
    const auto d = decompose_panel(panel, rating_segments(panel));
    checks.push_back({"decomposition_identity_ulps", d.max_relative_error, 4.0, d.max_relative_error <= 4.0});
    std::ostringstream o;
    write_panel_csv(panel, o);
    std::istringstream i(o.str());
    const bool same = same_panel(panel, read_panel_csv(i));
    checks.push_back({"panel_round_trip", same ? 0.0 : 1.0, 0.0, same});
  }
  json s;
  bool all = true;
  for (const auto& c : checks) {
    s["checks"].push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
    all = all && c.pass;
  }
  s["all_pass"] = all;
  ctx.emit("validate.json", s);
  return {all ? 0 : 1, s};
}

// ---------------------------------------------------------------------------

inline std::vector<int> classification_states(const RunContext& ctx, const CurvePanel& panel) {
  if (ctx.exists("hmm_classification.csv")) {
    auto in = open_input(ctx.path("hmm_classification.csv"));
    std::string line;
    std::getline(in, line);
    const auto header = split_csv_line(line);
    const auto it = std::find(header.begin(), header.end(), "CGB_state");
    if (it != header.end()) {
      const auto col = static_cast<std::size_t>(it - header.begin());
      std::vector<int> states;
      while (std::getline(in, line)) states.push_back(split_csv_line(line).at(col) == "H" ? 1 : 0);
      RSGCIR_REQUIRE(static_cast<int>(states.size()) == panel.size(), ErrorCode::SchemaError,
                     "hmm_classification.csv does not match the panel length");
      return states;
    }
  }
  HmmOptions opt = ctx.cfg.hmm.options;
  opt.threads = ctx.cfg.threads;
  const Mat& y = panel.segment("CGB");
  return classify(fit_hmm(y, 2, ctx.cfg.seed, opt).model, y).states;
}

inline CsvTable summary_statistics(const CurvePanel& p) {
  CsvTable t;
  t.header = {"segment", "maturity_years", "weeks", "mean", "sd", "min", "max", "ac1", "ac12"};
  for (std::size_t s = 0; s < p.segments.size(); ++s)
    for (std::size_t j = 0; j < p.maturities.size(); ++j) {
      const auto x = column(p.yields[s], static_cast<int>(j));
      std::vector<double> v;
      for (double a : x)
        if (std::isfinite(a)) v.push_back(a);
      if (v.size() < 2) continue;
      double mean = 0.0;
      for (double a : v) mean += a;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double a : v) var += (a - mean) * (a - mean);
      auto ac = [&](std::size_t lag) {
        double num = 0.0;
        for (std::size_t t = lag; t < x.size(); ++t)
          if (std::isfinite(x[t]) && std::isfinite(x[t - lag])) num += (x[t] - mean) * (x[t - lag] - mean);
        return var > 0.0 ? num / var : NAN;
      };
      t.add({p.segments[s], format_double(p.maturities[j]), std::to_string(v.size()), format_double(mean),
             format_double(std::sqrt(var / static_cast<double>(v.size() - 1))),
             format_double(*std::min_element(v.begin(), v.end())), format_double(*std::max_element(v.begin(), v.end())),
             format_double(ac(1)), format_double(ac(12))});
    }
  return t;
}

inline PipelineResult run_report(RunContext& ctx) {
  const auto panel = load_panel(ctx);
  const auto states = classification_states(ctx, panel);
  const auto shaded = regime_spans(states, 1);
  const int j = nearest_maturity(panel.maturities, 5.0);
  const std::string tau = format_double(panel.maturities[j]);

  std::vector<ChartSeries> yields;
  for (std::size_t s = 0; s < panel.segments.size(); ++s)
    yields.push_back({panel.segments[s], column(panel.yields[s], j)});
  ctx.emit("yields_" + tau + "y.svg", line_chart_svg("Zero-coupon yields, " + tau + "y", panel.dates, yields, shaded));

  const auto spreads = build_spreads(panel);
  std::vector<ChartSeries> sp;
  for (std::size_t s = 0; s < spreads.segments.size(); ++s)
    sp.push_back({spreads.segments[s], column(spreads.yields[s], j)});
  ctx.emit("spreads_" + tau + "y.svg", line_chart_svg("Spreads, " + tau + "y", panel.dates, sp, shaded));

  json s;
  s["charts"] = {"yields_" + tau + "y.svg", "spreads_" + tau + "y.svg"};
  if (const auto probs = read_filter_probs(ctx, "rate_filter.csv", panel.size())) {
    std::vector<ChartSeries> pr;
    for (std::size_t k = 0; k < probs->first.size(); ++k)
      pr.push_back({"P(" + probs->first[k] + ")", column(probs->second, static_cast<int>(k))});
    ChartOptions opt;
    opt.percent = false;
    ctx.emit("rate_regime_probs.svg",
             line_chart_svg("Filtered rate-regime probabilities", panel.dates, pr, shaded, opt));
    s["charts"].push_back("rate_regime_probs.svg");
  }
  ctx.emit("summary_stats.csv", summary_statistics(panel));
  s["tables"] = {"summary_stats.csv"};
  for (const char* f : {"hmm_fit.csv", "hmm_moments.csv", "hmm_durations.csv", "estimates_rates.csv",
                        "estimates_credit.csv", "decomposition.csv", "pq.csv", "prices.csv"})
    if (ctx.exists(f)) s["tables"].push_back(f);
  int high = 0;
  for (int st : states) high += st;
  s["classified_high_weeks"] = high;
  s["weeks"] = panel.size();
  ctx.emit("report.json", s);
  return {0, s};
}

}  // namespace detail

/// Runs one subcommand; artifacts land in ctx.out and are listed in ctx.outputs.
inline PipelineResult run_pipeline(const std::string& cmd, RunContext& ctx) {
  std::filesystem::create_directories(ctx.out);
  if (cmd == "simulate") return detail::run_simulate(ctx);
  if (cmd == "hmm") return detail::run_hmm(ctx);
  if (cmd == "calibrate-ratings") return detail::run_calibrate_ratings(ctx);
  if (cmd == "estimate-rates") return detail::run_estimate(ctx, Stage::Rate);
  if (cmd == "estimate-credit") return detail::run_estimate(ctx, Stage::Credit);
  if (cmd == "price") return detail::run_price(ctx);
  if (cmd == "decompose") return detail::run_decompose(ctx);
  if (cmd == "validate") return detail::run_validate(ctx);
  if (cmd == "report") return detail::run_report(ctx);
  throw Error(ErrorCode::InvalidArgument, "unknown command " + cmd);
}

}  // namespace rsgcir

#endif  // RSGCIR_PIPELINE_HPP
