#ifndef RSGCIR_PANEL_HPP
#define RSGCIR_PANEL_HPP

#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "rsgcir/errors.hpp"
#include "rsgcir/linalg.hpp"

namespace rsgcir {

inline const std::vector<std::string>& panel_segments() {
  static const std::vector<std::string> s{"CGB", "CDB", "AAA", "AA+", "AA", "AA-"};
  return s;
}

inline std::string iso_date(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::optional<std::chrono::sys_days> parse_iso_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
    return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

inline std::vector<std::string> weekly_dates(const std::string& start, int weeks) {
  const auto d0 = parse_iso_date(start);
  RSGCIR_REQUIRE(d0.has_value(), ErrorCode::InvalidArgument, "bad start date " + start);
  std::vector<std::string> out;
  for (int t = 0; t < weeks; ++t) out.push_back(iso_date(*d0 + std::chrono::days{7 * t}));
  return out;
}

/// Weekly zero-coupon yields by segment; each segment is a dates x maturities
/// matrix of decimal yields with NaN for missing observations.
struct CurvePanel {
  std::vector<std::string> dates;
  std::vector<double> maturities;
  std::vector<std::string> segments;
  std::vector<Mat> yields;

  int size() const { return static_cast<int>(dates.size()); }

  int segment_index(const std::string& name) const {
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (segments[i] == name) return static_cast<int>(i);
    return -1;
  }

  const Mat& segment(const std::string& name) const {
    const int i = segment_index(name);
    RSGCIR_REQUIRE(i >= 0, ErrorCode::SchemaError, "panel has no segment " + name);
    return yields[i];
  }

  /// Appends an all-missing segment. Invalidates references into `yields`.
  Mat& add_segment(const std::string& name) {
    RSGCIR_REQUIRE(segment_index(name) < 0, ErrorCode::SchemaError, "duplicate segment " + name);
    segments.push_back(name);
    yields.push_back(Mat::Constant(size(), static_cast<Eigen::Index>(maturities.size()),
                                   std::numeric_limits<double>::quiet_NaN()));
    return yields.back();
  }
};

}  // namespace rsgcir

#endif  // RSGCIR_PANEL_HPP
