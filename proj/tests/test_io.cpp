#include <gtest/gtest.h>

#include <sstream>

#include "rsgcir/io.hpp"
#include "support.hpp"

using namespace rsgcir;

namespace {

CurvePanel small_panel() {
  CurvePanel p;
  p.dates = weekly_dates("2020-01-03", 3);
  p.maturities = {1.0, 5.0};
  for (const char* s : {"CGB", "CDB", "AAA"}) p.add_segment(s);
  p.yields[0] << 0.02, 0.025, 0.021, 0.026, 0.0205, 0.0255;
  p.yields[1] << 0.023, 0.029, 0.024, 0.030, 0.0235, 0.0295;
  p.yields[2] << 0.03, 0.036, 0.031, std::numeric_limits<double>::quiet_NaN(), 0.0305, 0.0365;
  return p;
}

std::optional<ErrorCode> read_error(const std::string& text) {
  std::istringstream in(text);
  try {
    read_panel_csv(in);
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(FormatDouble, RoundTripsShortest) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-7, 0.035, 1e300}) EXPECT_EQ(*parse_double(format_double(v)), v);
  EXPECT_EQ(format_double(0.035), "0.035");
  EXPECT_EQ(format_double(std::nan("")), "NA");
  EXPECT_FALSE(parse_double("0.1x").has_value());
}

TEST(PanelCsv, RoundTripIsExact) {
  const auto p = small_panel();
  std::ostringstream out;
  write_panel_csv(p, out);
  std::istringstream in(out.str());
  const auto q = read_panel_csv(in);
  EXPECT_TRUE(same_panel(p, q));
  std::ostringstream again;
  write_panel_csv(q, again);
  EXPECT_EQ(out.str(), again.str());
}

TEST(PanelCsv, SimulatedRoundTripIsExact) {
  const auto m = rsgcir::testing::toy_model();
  PanelConfig cfg;
  cfg.weeks = 20;
  const auto sim = simulate_panel(m, cfg, 5);
  std::ostringstream out;
  write_panel_csv(sim.panel, out);
  std::istringstream in(out.str());
  EXPECT_TRUE(same_panel(sim.panel, read_panel_csv(in)));
}

TEST(PanelCsv, RowOrderDoesNotMatter) {
  std::istringstream in(
      "date,segment,maturity_years,yield\n"
      "2020-01-10,CDB,1,0.02\n2020-01-03,CGB,1,0.01\n2020-01-03,CDB,1,0.021\n2020-01-10,CGB,1,NA\n");
  const auto p = read_panel_csv(in);
  ASSERT_EQ(p.size(), 2);
  EXPECT_EQ(p.segments, (std::vector<std::string>{"CGB", "CDB"}));
  EXPECT_EQ(p.segment("CGB")(0, 0), 0.01);
  EXPECT_TRUE(std::isnan(p.segment("CGB")(1, 0)));
  EXPECT_EQ(p.segment("CDB")(1, 0), 0.02);
}

TEST(PanelCsv, UnparsableYieldIsMissing) {
  std::istringstream in("date,segment,maturity_years,yield\n2020-01-03,CGB,1,abc\n2020-01-10,CGB,1,\n");
  const auto p = read_panel_csv(in);
  EXPECT_TRUE(p.segment("CGB").array().isNaN().all());
}

TEST(PanelCsv, SchemaErrors) {
  EXPECT_EQ(read_error(""), ErrorCode::SchemaError);
  EXPECT_EQ(read_error("date,segment,maturity_years,yield\n"), ErrorCode::SchemaError);
  EXPECT_EQ(read_error("date,seg,tau,y\n2020-01-03,CGB,1,0.01\n"), ErrorCode::SchemaError);
  EXPECT_EQ(read_error("date,segment,maturity_years,yield\n2020-01-03,CGB,1\n"), ErrorCode::SchemaError);
  EXPECT_EQ(read_error("date,segment,maturity_years,yield\n2020-13-03,CGB,1,0.01\n"), ErrorCode::SchemaError);
  EXPECT_EQ(read_error("date,segment,maturity_years,yield\n2020-01-03,CGB,0,0.01\n"), ErrorCode::SchemaError);
}

TEST(PanelCsv, DuplicatesAreListed) {
  std::istringstream in(
      "date,segment,maturity_years,yield\n2020-01-03,CGB,1,0.01\n2020-01-03,CGB,1.0,0.02\n");
  try {
    read_panel_csv(in);
    FAIL() << "expected SchemaError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_NE(std::string(e.what()).find("2020-01-03,CGB,1.0"), std::string::npos);
  }
}

TEST(PanelCsv, WeeklyGrid) {
  const std::string h = "date,segment,maturity_years,yield\n";
  // a holiday shift of up to two days is tolerated
  EXPECT_EQ(read_error(h + "2020-01-03,CGB,1,0.01\n2020-01-09,CGB,1,0.01\n2020-01-17,CGB,1,0.01\n"), std::nullopt);
  EXPECT_EQ(read_error(h + "2020-01-03,CGB,1,0.01\n2020-01-07,CGB,1,0.01\n"), ErrorCode::NonWeeklyGrid);
  EXPECT_EQ(read_error(h + "2020-01-03,CGB,1,0.01\n2020-01-17,CGB,1,0.01\n"), ErrorCode::NonWeeklyGrid);
}

TEST(Spreads, MatchedMaturities) {
  const auto p = small_panel();
  const auto s = build_spreads(p);
  EXPECT_EQ(s.segments, (std::vector<std::string>{"CDB-CGB", "AAA-CDB"}));
  EXPECT_DOUBLE_EQ(s.segment("CDB-CGB")(1, 1), 0.030 - 0.026);
  EXPECT_DOUBLE_EQ(s.segment("AAA-CDB")(2, 0), 0.0305 - 0.0235);
  EXPECT_TRUE(std::isnan(s.segment("AAA-CDB")(1, 1)));
}

TEST(Spreads, MaturityMismatchAndMissingSegment) {
  auto p = small_panel();
  p.yields[2].col(1).setConstant(std::numeric_limits<double>::quiet_NaN());
  try {
    build_spreads(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaturityMismatch);
  }
  CurvePanel q;
  q.dates = {"2020-01-03"};
  q.maturities = {1.0};
  q.add_segment("CGB");
  try {
    build_spreads(q);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  }
}

TEST(Decomposition, ReconstructsAndWeights) {
  const auto p = small_panel();
  Mat w(3, 2);
  w << 1, 0, 0, 1, 1, 0;
  const auto d = decompose_panel(p, {"AAA"}, &w, {"L", "H"});
  EXPECT_LE(d.max_relative_error, 4.0);
  // rating AAA at 1y: "all", "L", "H"; at 5y the H-weighted cell is missing
  ASSERT_EQ(d.rows.size(), 5u);
  EXPECT_EQ(d.rows[1].regime, "L");
  EXPECT_DOUBLE_EQ(d.rows[1].mean.corporate_spread, ((0.03 - 0.023) + (0.0305 - 0.0235)) / 2);
  EXPECT_DOUBLE_EQ(d.rows[2].mean.sovereign, 0.021);
  EXPECT_EQ(d.rows[4].regime, "L");
}

TEST(LabeledMatrix, RoundTripAndFixture) {
  Mat m(2, 2);
  m << 0.9, 0.1, 0.0, 1.0;
  std::ostringstream out;
  write_labeled_matrix(m, {"A", "D"}, out);
  std::istringstream in(out.str());
  const auto r = read_labeled_matrix(in);
  EXPECT_EQ(r.labels, (std::vector<std::string>{"A", "D"}));
  EXPECT_EQ(r.m, m);
  std::istringstream bad("from,A\nB,1\n");
  EXPECT_THROW(read_labeled_matrix(bad), Error);
}

TEST(MigrationCountsCsv, BucketsFineLabels) {
  std::istringstream in("fine_label_from,fine_label_to,count\nAAA,AAA,10\nAAA,A+,2\nA+,D,1\n");
  const auto c = read_migration_counts(in, {{"AAA", "AAA"}, {"A+", "SG"}, {"D", "D"}});
  EXPECT_EQ(c.fine_labels, (std::vector<std::string>{"AAA", "A+", "D"}));
  EXPECT_EQ(c.counts(0, 1), 2.0);
  EXPECT_EQ(c.is_default, (std::vector<bool>{false, false, true}));
  std::istringstream unmapped("fine_label_from,fine_label_to,count\nBB,D,1\n");
  EXPECT_THROW((read_migration_counts(unmapped, {{"D", "D"}})), Error);
}

TEST(TruthCsv, OneRowPerWeek) {
  const auto m = rsgcir::testing::toy_model();
  PanelConfig cfg;
  cfg.weeks = 4;
  const auto sim = simulate_panel(m, cfg, 3);
  std::ostringstream out;
  write_truth_csv(sim.panel, sim.truth, m, out);
  std::istringstream in(out.str());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 5);
  EXPECT_EQ(out.str().substr(0, 41), "date,rate_regime,credit_regime,x1,x2,x3,x");
}

TEST(LabeledMatrix, ReadsRatingFixture) {
  const auto r = read_labeled_matrix(std::string(RSGCIR_FIXTURE_DIR) + "/rating_transition_q.csv");
  EXPECT_EQ(r.labels.size(), 6u);
  EXPECT_DOUBLE_EQ(r.m(4, 5), 0.0792);
  EXPECT_NEAR((r.m - rsgcir::testing::rating_transition_q().p).cwiseAbs().maxCoeff(), 0.0, 1e-3);
}
