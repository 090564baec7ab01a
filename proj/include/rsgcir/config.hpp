#ifndef RSGCIR_CONFIG_HPP
#define RSGCIR_CONFIG_HPP

// JSON run configuration. Every object is checked for unknown keys.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "rsgcir/diagnostics.hpp"
#include "rsgcir/errors.hpp"
#include "rsgcir/estimation.hpp"
#include "rsgcir/filters.hpp"
#include "rsgcir/io.hpp"
#include "rsgcir/model.hpp"
#include "rsgcir/pricing.hpp"
#include "rsgcir/ratings.hpp"
#include "rsgcir/simulate.hpp"

namespace rsgcir {

using json = nlohmann::json;

struct HmmSettings {
  std::vector<std::string> segments{"CGB", "CDB", "AAA", "AA+", "AA", "AA-"};
  int max_states = 3;
  HmmOptions options{};
};

struct EstimationSettings {
  EstimationConfig config{};
  std::vector<std::string> rate_params;    // empty means every free rate-stage parameter
  std::vector<std::string> credit_params;  // likewise for the credit stage
  bool sandwich = true;
  SandwichConfig sandwich_config{};
  int bootstrap_reps = 0;  // 0 disables the block bootstrap
  int block_len = 52;
};

struct PricingSettings {
  std::vector<double> maturities{1, 2, 3, 4, 5, 7, 10};
  PricingOptions options{};
  std::optional<Vec4> state;  // factor state; stationary physical mean by default
};

struct RatingCalibrationSettings {
  std::string counts;      // fine migration counts CSV
  std::string transition;  // physical coarse matrix CSV, used when counts is empty
  std::map<std::string, std::string> bucket_map;
  double recovery = 0.0;
  int t_max = 5;
  CalibratePiOptions options{};
};

struct RunConfig {
  ModelSpec model;
  PanelConfig simulate{};
  FilterOptions filter{};
  HmmSettings hmm{};
  EstimationSettings estimation{};
  PricingSettings pricing{};
  RatingCalibrationSettings ratings{};
  std::string panel_path;  // observed panel; the simulate output when empty
  std::string out_dir = "out";
  std::uint64_t seed = 42;
  int threads = 1;
};

namespace detail {

/// Reads keys from one JSON object and rejects anything it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    RSGCIR_REQUIRE(j_.is_object(), ErrorCode::SchemaError, path_ + " must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      RSGCIR_REQUIRE(known_.count(k) > 0, ErrorCode::SchemaError, "unknown key " + path_ + "." + k);
  }

  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    RSGCIR_REQUIRE(has(key), ErrorCode::SchemaError, "missing key " + where(key));
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    try {
      return raw(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, where(key) + ": " + e.what());
    }
  }

  template <class T>
  void opt(const std::string& key, T& target) {
    if (has(key)) target = get<T>(key);
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

inline Mat matrix_from_json(const json& j, const std::string& where) {
  RSGCIR_REQUIRE(j.is_array() && !j.empty() && j[0].is_array(), ErrorCode::SchemaError,
                 where + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    RSGCIR_REQUIRE(j[i].is_array() && static_cast<Eigen::Index>(j[i].size()) == cols, ErrorCode::SchemaError,
                   where + " rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      RSGCIR_REQUIRE(j[i][c].is_number(), ErrorCode::SchemaError, where + " entries must be numbers");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

inline Vec vector_from_json(const json& j, const std::string& where) {
  RSGCIR_REQUIRE(j.is_array(), ErrorCode::SchemaError, where + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    RSGCIR_REQUIRE(j[i].is_number(), ErrorCode::SchemaError, where + " entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Vec4 vec4_from_json(const json& j, const std::string& where) {
  const Vec v = vector_from_json(j, where);
  RSGCIR_REQUIRE(v.size() == 4, ErrorCode::SchemaError, where + " must have four entries");
  return Vec4(v(0), v(1), v(2), v(3));
}

inline std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? p : (std::filesystem::path(base) / path).string();
}

inline CtmcGenerator parse_chain(const json& j, const std::string& where) {
  Section s(j, where);
  const auto labels = s.get<std::vector<std::string>>("labels");
  return CtmcGenerator(matrix_from_json(s.raw("generator"), s.where("generator")), labels);
}

inline std::vector<FactorRegime> parse_factor(const json& j, const std::string& where) {
  RSGCIR_REQUIRE(j.is_array() && !j.empty(), ErrorCode::SchemaError, where + " must be a nonempty array");
  std::vector<FactorRegime> out;
  for (std::size_t r = 0; r < j.size(); ++r) {
    Section s(j[r], where + "[" + std::to_string(r) + "]");
    double alpha = 0.0, beta = 0.0, lambda = 0.0;
    s.opt("alpha", alpha);
    s.opt("beta", beta);
    s.opt("lambda", lambda);
    out.emplace_back(GcirParams::physical(s.get<double>("kappa"), s.get<double>("theta"), alpha, beta),
                     RiskPrice{lambda});
  }
  return out;
}

inline RatingGenerator parse_rating(const json& j, const std::string& where, const std::string& base,
                                    std::vector<std::string>& labels) {
  Section s(j, where);
  if (s.has("transition_csv")) {
    RSGCIR_REQUIRE(!s.has("generator"), ErrorCode::SchemaError, where + ": give transition_csv or generator");
    const auto lm = read_labeled_matrix(resolve_path(base, s.get<std::string>("transition_csv")));
    std::string measure = "Q";
    s.opt("measure", measure);
    RSGCIR_REQUIRE(measure == "Q", ErrorCode::SchemaError, where + ".measure must be Q for pricing");
    labels = lm.labels;
    return embed_generator(make_rating_transition(lm.m, Measure::Q));
  }
  Section g(s.raw("generator"), s.where("generator"));
  RatingGenerator out;
  out.lambda_block = matrix_from_json(g.raw("lambda"), g.where("lambda"));
  out.nu = vector_from_json(g.raw("nu"), g.where("nu"));
  RSGCIR_REQUIRE(out.lambda_block.rows() == out.nu.size() && out.lambda_block.cols() == out.nu.size(),
                 ErrorCode::SchemaError, where + ": lambda must be n x n with n = len(nu)");
  if (s.has("labels")) labels = s.get<std::vector<std::string>>("labels");
  return out;
}

inline PricingScheme parse_scheme(const std::string& s) {
  if (s == "mixture") return PricingScheme::Mixture;
  if (s == "anchored") return PricingScheme::Anchored;
  throw Error(ErrorCode::SchemaError, "pricing.scheme must be mixture or anchored");
}

inline void parse_optimizer(const json& j, const std::string& where, OptimizerConfig& o) {
  Section s(j, where);
  s.opt("max_evals", o.max_evals);
  s.opt("ftol", o.ftol);
  s.opt("xtol", o.xtol);
  s.opt("initial_step", o.initial_step);
  s.opt("restarts", o.restarts);
  s.opt("polish", o.polish);
  s.opt("polish_sweeps", o.polish_sweeps);
}

inline ModelSpec parse_model(const json& j, const std::string& base) {
  Section s(j, "model");
  ModelSpec m;
  m.qr = parse_chain(s.raw("rate_regimes"), "model.rate_regimes");
  m.qc = parse_chain(s.raw("credit_regimes"), "model.credit_regimes");
  s.opt("grid_delta", m.grid_delta);
  const json& f = s.raw("factors");
  RSGCIR_REQUIRE(f.is_array() && f.size() == kNumFactors, ErrorCode::SchemaError,
                 "model.factors must list four factors");
  for (int k = 0; k < kNumFactors; ++k)
    m.factors[k] = parse_factor(f[k], "model.factors[" + std::to_string(k) + "]");
  m.passthrough = matrix_from_json(s.raw("passthrough"), "model.passthrough");
  if (s.has("omega")) m.omega = matrix_from_json(s.raw("omega"), "model.omega");
  s.opt("mu_floor", m.mu_floor);

  std::vector<std::string> labels = coarse_labels();
  const RatingGenerator g = parse_rating(s.raw("ratings"), "model.ratings", base, labels);
  RSGCIR_REQUIRE(static_cast<int>(labels.size()) == g.nondefault() + 1, ErrorCode::SchemaError,
                 "model.ratings: need one label per rating including default");
  m.rating_labels = labels;
  if (s.has("delta_nu")) {
    m.delta_nu = vector_from_json(s.raw("delta_nu"), "model.delta_nu");
    RSGCIR_REQUIRE(m.delta_nu.size() == g.nu.size(), ErrorCode::SchemaError,
                   "model.delta_nu needs one entry per non-default rating");
  }
  m.set_rating(g);

  Section meas(s.raw("measurement"), "model.measurement");
  meas.opt("maturities", m.measurement.maturities);
  m.measurement.rate_noise_sd = matrix_from_json(meas.raw("rate_noise_sd"), "model.measurement.rate_noise_sd");
  m.measurement.credit_ratings.clear();
  for (const auto& r : meas.get<std::vector<std::string>>("credit_ratings")) {
    const auto it = std::find(labels.begin(), labels.end(), r);
    RSGCIR_REQUIRE(it != labels.end() && it + 1 != labels.end(), ErrorCode::SchemaError,
                   "model.measurement.credit_ratings: unknown non-default rating " + r);
    m.measurement.credit_ratings.push_back(static_cast<int>(it - labels.begin()));
  }
  m.measurement.credit_noise_sd =
      matrix_from_json(meas.raw("credit_noise_sd"), "model.measurement.credit_noise_sd");
  m.validate();
  return m;
}

}  // namespace detail

/// Parses a configuration; relative paths resolve against `base_dir`.
inline RunConfig parse_config(const json& j, const std::string& base_dir = "") {
  using detail::Section;
  RunConfig c;
  Section top(j, "config");
  top.opt("seed", c.seed);
  top.opt("threads", c.threads);
  RSGCIR_REQUIRE(c.threads >= 1, ErrorCode::SchemaError, "config.threads must be at least 1");
  c.model = detail::parse_model(top.raw("model"), base_dir);

  if (top.has("simulate")) {
    Section s(top.raw("simulate"), "simulate");
    s.opt("weeks", c.simulate.weeks);
    s.opt("start_date", c.simulate.start_date);
    s.opt("noise_scale", c.simulate.noise_scale);
    s.opt("substeps", c.simulate.substeps);
  }

  if (top.has("filter")) {
    Section s(top.raw("filter"), "filter");
    std::string kind = "ukf";
    s.opt("kind", kind);
    RSGCIR_REQUIRE(kind == "ukf" || kind == "ekf", ErrorCode::SchemaError, "filter.kind must be ukf or ekf");
    c.filter.kind = kind == "ukf" ? FilterKind::Ukf : FilterKind::Ekf;
    s.opt("ut_alpha", c.filter.ut.alpha);
    s.opt("ut_beta", c.filter.ut.beta);
    s.opt("ut_kappa", c.filter.ut.kappa);
    s.opt("prior_inflation", c.filter.prior_inflation);
    if (s.has("anchor")) c.filter.anchor = detail::vec4_from_json(s.raw("anchor"), "filter.anchor");
  }

  if (top.has("hmm")) {
    Section s(top.raw("hmm"), "hmm");
    s.opt("segments", c.hmm.segments);
    s.opt("max_states", c.hmm.max_states);
    s.opt("restarts", c.hmm.options.restarts);
    s.opt("max_iter", c.hmm.options.max_iter);
    s.opt("tol", c.hmm.options.tol);
    std::string cov = "full";
    s.opt("covariance", cov);
    RSGCIR_REQUIRE(cov == "full" || cov == "diagonal", ErrorCode::SchemaError,
                   "hmm.covariance must be full or diagonal");
    c.hmm.options.cov = cov == "full" ? CovarianceType::Full : CovarianceType::Diagonal;
    RSGCIR_REQUIRE(c.hmm.max_states >= 1, ErrorCode::SchemaError, "hmm.max_states must be at least 1");
  }

  if (top.has("estimation")) {
    Section s(top.raw("estimation"), "estimation");
    auto& e = c.estimation;
    s.opt("starts", e.config.starts);
    s.opt("start_spread", e.config.start_spread);
    s.opt("rate_params", e.rate_params);
    s.opt("credit_params", e.credit_params);
    s.opt("sandwich", e.sandwich);
    s.opt("fd_step", e.sandwich_config.rel_step);
    s.opt("bootstrap_reps", e.bootstrap_reps);
    s.opt("block_len", e.block_len);
    if (s.has("optimizer")) detail::parse_optimizer(s.raw("optimizer"), "estimation.optimizer", e.config.optimizer);
  }

  if (top.has("pricing")) {
    Section s(top.raw("pricing"), "pricing");
    s.opt("maturities", c.pricing.maturities);
    if (s.has("scheme")) c.pricing.options.scheme = detail::parse_scheme(s.get<std::string>("scheme"));
    s.opt("merge_tol", c.pricing.options.merge_tol);
    s.opt("max_terms", c.pricing.options.max_terms);
    if (s.has("state")) c.pricing.state = detail::vec4_from_json(s.raw("state"), "pricing.state");
  }

  if (top.has("ratings_calibration")) {
    Section s(top.raw("ratings_calibration"), "ratings_calibration");
    auto& r = c.ratings;
    if (s.has("counts")) r.counts = detail::resolve_path(base_dir, s.get<std::string>("counts"));
    if (s.has("transition_csv")) r.transition = detail::resolve_path(base_dir, s.get<std::string>("transition_csv"));
    s.opt("bucket_map", r.bucket_map);
    s.opt("recovery", r.recovery);
    s.opt("t_max", r.t_max);
    s.opt("restarts", r.options.restarts);
    RSGCIR_REQUIRE(r.recovery >= 0.0 && r.recovery < 1.0, ErrorCode::SchemaError,
                   "ratings_calibration.recovery must lie in [0, 1)");
  }

  if (top.has("paths")) {
    Section s(top.raw("paths"), "paths");
    if (s.has("panel")) c.panel_path = detail::resolve_path(base_dir, s.get<std::string>("panel"));
    if (s.has("out")) c.out_dir = detail::resolve_path(base_dir, s.get<std::string>("out"));
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  auto in = open_input(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

}  // namespace rsgcir

#endif  // RSGCIR_CONFIG_HPP
