#ifndef RSGCIR_REPORT_HPP
#define RSGCIR_REPORT_HPP

// SVG charts and the CSV table layouts emitted by the CLI.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rsgcir/diagnostics.hpp"
#include "rsgcir/estimation.hpp"
#include "rsgcir/io.hpp"

namespace rsgcir {

struct ChartSeries {
  std::string name;
  std::vector<double> values;  // NaN breaks the line
};

/// Half-open index ranges [begin, end) where `states` equals `target`.
inline std::vector<std::pair<int, int>> regime_spans(const std::vector<int>& states, int target) {
  std::vector<std::pair<int, int>> out;
  for (int t = 0; t < static_cast<int>(states.size()); ++t) {
    if (states[t] != target) continue;
    if (!out.empty() && out.back().second == t)
      out.back().second = t + 1;
    else
      out.emplace_back(t, t + 1);
  }
  return out;
}

struct ChartOptions {
  int width = 960;
  int height = 420;
  bool percent = true;  // values are decimals, axis shows percent
  std::string shade_label = "H";
};

/// Line chart over a date axis with shaded spans, e.g. classified high-rate weeks.
inline std::string line_chart_svg(const std::string& title, const std::vector<std::string>& dates,
                                  const std::vector<ChartSeries>& series,
                                  const std::vector<std::pair<int, int>>& shaded = {},
                                  const ChartOptions& opt = {}) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  const int n = static_cast<int>(dates.size());
  const double scale = opt.percent ? 100.0 : 1.0;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v * scale);
        hi = std::max(hi, v * scale);
      }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  auto x_of = [&](double t) { return left + (n > 1 ? t / (n - 1) : 0.5) * pw; };
  auto y_of = [&](double v) { return top + (hi - v) / (hi - lo) * ph; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      opt.width, opt.height, opt.width, opt.height);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", opt.width, opt.height);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"24\" font-size=\"15\">{}</text>\n", left, title);

  const double step = n > 1 ? pw / (n - 1) : pw;
  for (const auto& [b, e] : shaded) {
    const double x0 = std::max(left, x_of(b) - step / 2), x1 = std::min(left + pw, x_of(e - 1) + step / 2);
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"#999999\" "
                       "fill-opacity=\"0.25\"/>\n",
                       x0, top, x1 - x0, ph);
  }

  svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
                     "stroke=\"black\"/>\n",
                     left, top, pw, ph);
  for (int i = 0; i <= 5; ++i) {
    const double v = lo + (hi - lo) * i / 5.0;
    svg += fmt::format("<line x1=\"{:.2f}\" x2=\"{:.2f}\" y1=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#dddddd\"/>\n", left,
                       left + pw, y_of(v), y_of(v));
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.2f}{}</text>\n", left - 6,
                       y_of(v) + 4, v, opt.percent ? "%" : "");
  }
  for (int i = 0; i < std::min(n, 6); ++i) {
    const int t = n > 1 ? i * (n - 1) / std::max(1, std::min(n, 6) - 1) : 0;
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", x_of(t),
                       top + ph + 18, dates[t]);
  }

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = palette[k % (sizeof palette / sizeof palette[0])];
    std::string d;
    bool pen = false;
    for (int t = 0; t < n && t < static_cast<int>(series[k].values.size()); ++t) {
      const double v = series[k].values[t];
      if (!std::isfinite(v)) {
        pen = false;
        continue;
      }
      d += fmt::format("{}{:.2f},{:.2f} ", pen ? "L" : "M", x_of(t), y_of(v * scale));
      pen = true;
    }
    svg += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n", d, colour);
    const double ly = top + 14 + 18 * static_cast<double>(k);
    svg += fmt::format("<line x1=\"{:.2f}\" x2=\"{:.2f}\" y1=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
                       "stroke-width=\"2\"/>\n",
                       left + pw + 12, left + pw + 32, ly, ly, colour);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", left + pw + 38, ly + 4, series[k].name);
  }
  if (!shaded.empty()) {
    const double ly = top + 14 + 18 * static_cast<double>(series.size());
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"20\" height=\"10\" fill=\"#999999\" "
                       "fill-opacity=\"0.25\"/>\n",
                       left + pw + 12, ly - 5);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">regime {}</text>\n", left + pw + 38, ly + 4,
                       opt.shade_label);
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// HMM tables

struct HmmSegmentFit {
  std::string segment;
  int t_len = 0;
  int dim = 0;
  std::vector<HmmFit> fits;  // K = 1..max
  std::vector<InformationCriteria> ic;
  std::vector<Classification> classes;
};

/// Statistic blocks (log-likelihood, AIC, BIC) by segment with one column per K.
inline CsvTable hmm_fit_table(const std::vector<HmmSegmentFit>& segs) {
  CsvTable t;
  t.header = {"statistic", "segment"};
  const std::size_t kmax = segs.empty() ? 0 : segs.front().fits.size();
  for (std::size_t k = 1; k <= kmax; ++k) t.header.push_back("K=" + std::to_string(k));
  for (const char* stat : {"loglik", "aic", "bic"}) {
    for (const auto& s : segs) {
      std::vector<std::string> r{stat, s.segment};
      for (std::size_t k = 0; k < kmax; ++k) {
        const double v = std::string(stat) == "loglik" ? s.fits[k].loglik
                         : std::string(stat) == "aic"  ? s.ic[k].aic
                                                       : s.ic[k].bic;
        r.push_back(format_double(v));
      }
      t.add(r);
    }
  }
  return t;
}

inline CsvTable hmm_moments_table(const std::vector<HmmSegmentFit>& segs) {
  CsvTable t;
  t.header = {"segment", "K", "state", "weeks", "weight", "mean_level", "dispersion"};
  for (const auto& s : segs)
    for (std::size_t k = 1; k < s.fits.size(); ++k) {
      const auto mom = regime_moments(s.fits[k].model, s.classes[k]);
      for (std::size_t j = 0; j < mom.size(); ++j)
        t.add({s.segment, std::to_string(k + 1), std::to_string(j + 1), std::to_string(mom[j].count),
               format_double(mom[j].weight), format_double(mom[j].mean_level), format_double(mom[j].dispersion)});
    }
  return t;
}

/// Expected durations under K = 2, states labelled L (lower level) and H.
inline CsvTable hmm_durations_table(const std::vector<HmmSegmentFit>& segs, double delta) {
  CsvTable t;
  t.header = {"segment", "regime", "p_stay", "expected_duration_years"};
  for (const auto& s : segs) {
    if (s.fits.size() < 2) continue;
    const Mat& p = s.fits[1].model.trans;
    const char* label[] = {"L", "H"};
    for (int j = 0; j < 2; ++j) {
      std::string d = "inf";
      if (p(j, j) < 1.0)
        d = format_double(regime_durations(p.block(j, j, 1, 1), delta)(0));
      else
        logger()->warn("{}: regime {} is absorbing in the fitted chain", s.segment, label[j]);
      t.add({s.segment, label[j], format_double(p(j, j)), d});
    }
  }
  return t;
}

inline CsvTable hmm_classification_table(const std::vector<std::string>& dates, const std::vector<HmmSegmentFit>& segs) {
  CsvTable t;
  t.header = {"date"};
  for (const auto& s : segs) {
    t.header.push_back(s.segment + "_state");
    t.header.push_back(s.segment + "_prob_H");
  }
  for (std::size_t i = 0; i < dates.size(); ++i) {
    std::vector<std::string> r{dates[i]};
    for (const auto& s : segs) {
      if (s.classes.size() < 2) {
        r.push_back("NA");
        r.push_back("NA");
        continue;
      }
      const auto& c = s.classes[1];
      r.push_back(c.states[i] == 0 ? "L" : "H");
      r.push_back(format_double(c.probs(static_cast<Eigen::Index>(i), 1)));
    }
    t.add(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Estimates

/// Factor block in the Factor, Regime, kappa, theta, alpha, beta, lambda layout.
/// Each regime has an estimate row and robust and bootstrap standard-error rows;
/// a blank cell means the parameter was held at its template value.
inline CsvTable factor_estimates_table(const ModelSpec& m, const EstimationResult& r, Stage stage) {
  CsvTable t;
  t.header = {"factor", "regime", "row", "kappa", "theta", "alpha", "beta", "lambda"};
  const Vec rse = r.robust_se(), bse = r.bootstrap_se();
  const int first = stage == Stage::Rate ? 0 : kNumRateFactors;
  const int last = stage == Stage::Rate ? kNumRateFactors : kNumFactors;
  const auto& labels = stage == Stage::Rate ? m.qr.labels() : m.qc.labels();
  for (int k = first; k < last; ++k)
    for (std::size_t s = 0; s < labels.size(); ++s) {
      std::vector<std::string> est{"X" + std::to_string(k + 1), labels[s], "estimate"};
      std::vector<std::string> rob{est[0], labels[s], "robust_se"};
      std::vector<std::string> boot{est[0], labels[s], "bootstrap_se"};
      for (const char* field : {"kappa", "theta", "alpha", "beta", "lambda"}) {
        const std::string name = "x" + std::to_string(k + 1) + "." + field + "." + labels[s];
        est.push_back(format_double(get_param(m, name)));
        const int i = r.estimates.index(name);
        rob.push_back(i >= 0 && rse.size() > i ? format_double(rse(i)) : "");
        boot.push_back(i >= 0 && bse.size() > i ? format_double(bse(i)) : "");
      }
      t.add(est);
      t.add(rob);
      t.add(boot);
    }
  return t;
}

/// One row per estimated parameter.
inline CsvTable parameter_table(const EstimationResult& r) {
  CsvTable t;
  t.header = {"parameter", "transform", "estimate", "robust_se", "bootstrap_se"};
  const Vec rse = r.robust_se(), bse = r.bootstrap_se();
  for (int i = 0; i < r.estimates.size(); ++i)
    t.add({r.estimates.entries[i].name, to_string(r.estimates.entries[i].transform),
           format_double(r.estimates.values(i)), rse.size() > i ? format_double(rse(i)) : "",
           bse.size() > i ? format_double(bse(i)) : ""});
  return t;
}

}  // namespace rsgcir

#endif  // RSGCIR_REPORT_HPP
