#ifndef RSGCIR_IO_HPP
#define RSGCIR_IO_HPP

// CSV ingestion and emission for curve panels, spreads, matrices and tables.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"
#include "rsgcir/log.hpp"
#include "rsgcir/panel.hpp"
#include "rsgcir/pricing.hpp"
#include "rsgcir/ratings.hpp"
#include "rsgcir/simulate.hpp"

namespace rsgcir {

/// Shortest decimal text that parses back to the same double; NaN is "NA".
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
    out.push_back(line.substr(start, pos - start));
  out.push_back(line.substr(start));
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  RSGCIR_REQUIRE(in.good(), ErrorCode::SchemaError, "cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  RSGCIR_REQUIRE(out.good(), ErrorCode::InvalidArgument, "cannot write " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Curve panels: date,segment,maturity_years,yield

inline constexpr const char* kPanelHeader = "date,segment,maturity_years,yield";

struct PanelReadOptions {
  int date_tolerance_days = 2;
  double sanity_low = -0.05;
  double sanity_high = 0.50;
};

inline CurvePanel read_panel_csv(std::istream& in, const std::string& source = "panel",
                                 const PanelReadOptions& opt = {}) {
  std::string line;
  RSGCIR_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaError, source + " is empty");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  RSGCIR_REQUIRE(line == kPanelHeader, ErrorCode::SchemaError,
                 source + ": header must be '" + std::string(kPanelHeader) + "'");

  using Key = std::tuple<std::string, std::string, double>;
  std::map<Key, double> cells;
  std::vector<std::string> duplicates;
  std::vector<std::string> seen_segments;
  int unparsable = 0, out_of_band = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(lineno);
    RSGCIR_REQUIRE(f.size() == 4, ErrorCode::SchemaError, where + ": expected 4 fields");
    RSGCIR_REQUIRE(parse_iso_date(f[0]).has_value(), ErrorCode::SchemaError, where + ": bad date " + f[0]);
    RSGCIR_REQUIRE(!f[1].empty(), ErrorCode::SchemaError, where + ": empty segment");
    const auto tau = parse_double(f[2]);
    RSGCIR_REQUIRE(tau && *tau > 0.0, ErrorCode::SchemaError, where + ": bad maturity " + f[2]);
    double y = std::numeric_limits<double>::quiet_NaN();
    if (!(f[3].empty() || f[3] == "NA" || f[3] == "NaN" || f[3] == "nan")) {
      if (const auto v = parse_double(f[3]); v && std::isfinite(*v)) {
        y = *v;
        if (y <= opt.sanity_low || y >= opt.sanity_high) ++out_of_band;
      } else {
        ++unparsable;
      }
    }
    if (std::find(seen_segments.begin(), seen_segments.end(), f[1]) == seen_segments.end())
      seen_segments.push_back(f[1]);
    if (!cells.emplace(Key{f[0], f[1], *tau}, y).second) duplicates.push_back(f[0] + "," + f[1] + "," + f[2]);
  }
  RSGCIR_REQUIRE(!cells.empty(), ErrorCode::SchemaError, source + " has no observations");
  if (!duplicates.empty()) {
    std::string list;
    for (std::size_t i = 0; i < std::min<std::size_t>(duplicates.size(), 10); ++i) list += " [" + duplicates[i] + "]";
    throw Error(ErrorCode::SchemaError, source + ": " + std::to_string(duplicates.size()) +
                                            " duplicate (date, segment, maturity) rows:" + list);
  }
  if (unparsable > 0) logger()->warn("{}: {} unparsable yields read as missing", source, unparsable);
  if (out_of_band > 0)
    logger()->warn("{}: {} yields outside ({}, {})", source, out_of_band, opt.sanity_low, opt.sanity_high);

  CurvePanel p;
  std::vector<double> mats;
  for (const auto& [key, v] : cells) {
    if (p.dates.empty() || p.dates.back() != std::get<0>(key)) p.dates.push_back(std::get<0>(key));
    mats.push_back(std::get<2>(key));
  }
  std::sort(mats.begin(), mats.end());
  mats.erase(std::unique(mats.begin(), mats.end()), mats.end());
  p.maturities = mats;

  const auto d0 = *parse_iso_date(p.dates.front());
  for (int t = 0; t < p.size(); ++t) {
    const auto d = *parse_iso_date(p.dates[t]);
    const auto off = (d - (d0 + std::chrono::days{7 * t})).count();
    RSGCIR_REQUIRE(std::abs(off) <= opt.date_tolerance_days, ErrorCode::NonWeeklyGrid,
                   source + ": date " + p.dates[t] + " is " + std::to_string(off) +
                       " days off the weekly grid started at " + p.dates.front());
  }

  std::vector<std::string> order;
  for (const auto& s : panel_segments())
    if (std::find(seen_segments.begin(), seen_segments.end(), s) != seen_segments.end()) order.push_back(s);
  for (const auto& s : seen_segments)
    if (std::find(order.begin(), order.end(), s) == order.end()) order.push_back(s);
  for (const auto& s : order) p.add_segment(s);

  std::map<std::string, int> date_idx;
  for (int t = 0; t < p.size(); ++t) date_idx[p.dates[t]] = t;
  for (const auto& [key, v] : cells) {
    const int s = p.segment_index(std::get<1>(key));
    const auto j = std::lower_bound(mats.begin(), mats.end(), std::get<2>(key)) - mats.begin();
    p.yields[s](date_idx[std::get<0>(key)], j) = v;
  }
  return p;
}

inline CurvePanel read_panel_csv(const std::string& path, const PanelReadOptions& opt = {}) {
  auto in = open_input(path);
  return read_panel_csv(in, path, opt);
}

/// Long format, one row per (date, segment, maturity), missing values as NA.
inline void write_panel_csv(const CurvePanel& p, std::ostream& out) {
  out << kPanelHeader << '\n';
  for (int t = 0; t < p.size(); ++t)
    for (std::size_t s = 0; s < p.segments.size(); ++s)
      for (std::size_t j = 0; j < p.maturities.size(); ++j)
        out << p.dates[t] << ',' << p.segments[s] << ',' << format_double(p.maturities[j]) << ','
            << format_double(p.yields[s](t, static_cast<Eigen::Index>(j))) << '\n';
}

inline void write_panel_csv(const CurvePanel& p, const std::string& path) {
  auto out = open_output(path);
  write_panel_csv(p, out);
}

inline bool same_panel(const CurvePanel& a, const CurvePanel& b) {
  if (a.dates != b.dates || a.maturities != b.maturities || a.segments != b.segments) return false;
  for (std::size_t s = 0; s < a.segments.size(); ++s) {
    const Mat& x = a.yields[s];
    const Mat& y = b.yields[s];
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double u = x.data()[i], v = y.data()[i];
      if (!(u == v || (std::isnan(u) && std::isnan(v)))) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Spreads and the additive yield decomposition

inline std::string spread_name(const std::string& segment, const std::string& reference) {
  return segment + "-" + reference;
}

namespace detail {

inline void require_matched(const CurvePanel& p, const std::string& a, const std::string& b) {
  const Mat& x = p.segment(a);
  const Mat& y = p.segment(b);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const bool has_x = x.col(j).array().isFinite().any();
    const bool has_y = y.col(j).array().isFinite().any();
    RSGCIR_REQUIRE(has_x == has_y, ErrorCode::MaturityMismatch,
                   "maturity " + format_double(p.maturities[j]) + " is observed in only one of " + a + ", " + b);
  }
}

}  // namespace detail

/// CDB - CGB and corporate - CDB matched-maturity spreads.
inline CurvePanel build_spreads(const CurvePanel& p) {
  CurvePanel out;
  out.dates = p.dates;
  out.maturities = p.maturities;
  detail::require_matched(p, "CDB", "CGB");
  out.add_segment(spread_name("CDB", "CGB"));
  out.yields.back() = p.segment("CDB") - p.segment("CGB");
  for (const auto& s : p.segments) {
    if (s == "CGB" || s == "CDB") continue;
    detail::require_matched(p, s, "CDB");
    out.add_segment(spread_name(s, "CDB"));
    out.yields.back() = p.segment(s) - p.segment("CDB");
  }
  return out;
}

struct DecompositionRow {
  std::string rating;
  double maturity = 0.0;
  std::string regime;  // "all" or a regime label
  SpreadDecomposition mean;
  double corporate_mean = 0.0;
};

struct DecompositionSummary {
  double max_reconstruction_error = 0.0;  // over every date, rating and maturity
  double max_relative_error = 0.0;        // in units of machine epsilon times |y|
  std::vector<DecompositionRow> rows;
};

/// Additive decomposition y_corp = y_CGB + (y_CDB - y_CGB) + (y_corp - y_CDB) on every
/// observed cell, with probability-weighted means per regime (weights T x K).
inline DecompositionSummary decompose_panel(const CurvePanel& p, const std::vector<std::string>& ratings,
                                            const Mat* weights = nullptr,
                                            const std::vector<std::string>& regime_labels = {}) {
  DecompositionSummary out;
  const Mat& cgb = p.segment("CGB");
  const Mat& cdb = p.segment("CDB");
  if (weights)
    RSGCIR_REQUIRE(weights->rows() == p.size() && static_cast<std::size_t>(weights->cols()) == regime_labels.size(),
                   ErrorCode::DimensionMismatch, "regime weights must be T x labels");
  for (const auto& r : ratings) {
    const Mat& corp = p.segment(r);
    for (std::size_t j = 0; j < p.maturities.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      std::vector<double> sov, pbs, cs, y;
      std::vector<int> rows;
      for (int t = 0; t < p.size(); ++t) {
        if (!(std::isfinite(cgb(t, c)) && std::isfinite(cdb(t, c)) && std::isfinite(corp(t, c)))) continue;
        const auto d = spread_decomposition(cgb(t, c), cdb(t, c), corp(t, c));
        const double err = std::abs(d.total() - corp(t, c));
        out.max_reconstruction_error = std::max(out.max_reconstruction_error, err);
        const double scale = std::numeric_limits<double>::epsilon() *
                             std::max({std::abs(cgb(t, c)), std::abs(cdb(t, c)), std::abs(corp(t, c))});
        if (scale > 0.0) out.max_relative_error = std::max(out.max_relative_error, err / scale);
        sov.push_back(d.sovereign);
        pbs.push_back(d.policy_bank_spread);
        cs.push_back(d.corporate_spread);
        y.push_back(corp(t, c));
        rows.push_back(t);
      }
      if (rows.empty()) continue;
      auto add = [&](const std::string& label, const std::vector<double>& w) {
        DecompositionRow row{r, p.maturities[j], label, {}, 0.0};
        row.mean.sovereign = prob_weighted_mean(sov, w);
        row.mean.policy_bank_spread = prob_weighted_mean(pbs, w);
        row.mean.corporate_spread = prob_weighted_mean(cs, w);
        row.corporate_mean = prob_weighted_mean(y, w);
        out.rows.push_back(row);
      };
      add("all", std::vector<double>(rows.size(), 1.0));
      if (!weights) continue;
      for (std::size_t k = 0; k < regime_labels.size(); ++k) {
        std::vector<double> w;
        for (int t : rows) w.push_back((*weights)(t, static_cast<Eigen::Index>(k)));
        double mass = 0.0;
        for (double x : w) mass += x;
        if (mass > 0.0) add(regime_labels[k], w);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tables

/// A small CSV table; numbers go through format_double so output is byte-stable.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    RSGCIR_REQUIRE(row.size() == header.size(), ErrorCode::DimensionMismatch, "row width != header width");
    rows.push_back(std::move(row));
  }

  void write(std::ostream& out) const {
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
  }

  void write(const std::string& path) const {
    auto out = open_output(path);
    write(out);
  }
};

/// Square matrix with a "from" column and one column per label.
inline void write_labeled_matrix(const Mat& m, const std::vector<std::string>& labels, std::ostream& out) {
  RSGCIR_REQUIRE(m.rows() == m.cols() && static_cast<std::size_t>(m.rows()) == labels.size(),
                 ErrorCode::DimensionMismatch, "matrix and labels disagree");
  CsvTable t;
  t.header = {"from"};
  for (const auto& l : labels) t.header.push_back(l);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<std::string> r{labels[i]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(format_double(m(i, j)));
    t.add(r);
  }
  t.write(out);
}

struct LabeledMatrix {
  std::vector<std::string> labels;
  Mat m;
};

inline LabeledMatrix read_labeled_matrix(std::istream& in, const std::string& source = "matrix") {
  std::string line;
  RSGCIR_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaError, source + " is empty");
  auto header = split_csv_line(line);
  RSGCIR_REQUIRE(header.size() >= 2 && (header[0] == "from" || header[0] == "From"), ErrorCode::SchemaError,
                 source + ": header must be 'from,<labels>'");
  LabeledMatrix out;
  out.labels.assign(header.begin() + 1, header.end());
  const auto n = static_cast<Eigen::Index>(out.labels.size());
  out.m.resize(n, n);
  Eigen::Index i = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    RSGCIR_REQUIRE(i < n && static_cast<Eigen::Index>(f.size()) == n + 1 && f[0] == out.labels[i],
                   ErrorCode::SchemaError, source + ": row " + std::to_string(i + 1) + " malformed");
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto v = parse_double(f[j + 1]);
      RSGCIR_REQUIRE(v.has_value(), ErrorCode::SchemaError, source + ": bad number " + f[j + 1]);
      out.m(i, j) = *v;
    }
    ++i;
  }
  RSGCIR_REQUIRE(i == n, ErrorCode::SchemaError, source + ": expected " + std::to_string(n) + " rows");
  return out;
}

inline LabeledMatrix read_labeled_matrix(const std::string& path) {
  auto in = open_input(path);
  return read_labeled_matrix(in, path);
}

/// fine_label_from,fine_label_to,count with a fine -> coarse bucket map; fine
/// labels mapped to "D" are default-tagged.
inline MigrationCounts read_migration_counts(std::istream& in, const std::map<std::string, std::string>& bucket_map,
                                             const std::string& source = "counts") {
  std::string line;
  RSGCIR_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::SchemaError, source + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  RSGCIR_REQUIRE(line == "fine_label_from,fine_label_to,count", ErrorCode::SchemaError,
                 source + ": header must be 'fine_label_from,fine_label_to,count'");
  std::vector<std::tuple<std::string, std::string, double>> entries;
  std::vector<std::string> labels;
  auto note = [&](const std::string& l) {
    if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    RSGCIR_REQUIRE(f.size() == 3, ErrorCode::SchemaError, source + ": expected 3 fields");
    const auto n = parse_double(f[2]);
    RSGCIR_REQUIRE(n && *n >= 0.0, ErrorCode::SchemaError, source + ": bad count " + f[2]);
    note(f[0]);
    note(f[1]);
    entries.emplace_back(f[0], f[1], *n);
  }
  MigrationCounts c;
  c.fine_labels = labels;
  c.counts = Mat::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(labels.size()));
  auto idx = [&](const std::string& l) {
    return static_cast<Eigen::Index>(std::find(labels.begin(), labels.end(), l) - labels.begin());
  };
  for (const auto& [a, b, n] : entries) c.counts(idx(a), idx(b)) += n;
  for (const auto& l : labels) {
    const auto it = bucket_map.find(l);
    RSGCIR_REQUIRE(it != bucket_map.end(), ErrorCode::SchemaError, source + ": fine label " + l + " is not mapped");
    c.bucket_map.push_back(it->second);
    c.is_default.push_back(it->second == c.coarse.back());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Simulation sidecar and filter output

inline void write_truth_csv(const CurvePanel& p, const PanelTruth& truth, const ModelSpec& m, std::ostream& out) {
  CsvTable t;
  t.header = {"date", "rate_regime", "credit_regime", "x1", "x2", "x3", "x4"};
  for (int i = 0; i < p.size(); ++i) {
    std::vector<std::string> r{p.dates[i], m.qr.labels().at(truth.rate_regime[i]),
                               m.qc.labels().at(truth.credit_regime[i])};
    for (int k = 0; k < kNumFactors; ++k) r.push_back(format_double(truth.factors(i, k)));
    t.add(r);
  }
  t.write(out);
}

}  // namespace rsgcir

#endif  // RSGCIR_IO_HPP
