#include <gtest/gtest.h>

#include "gsp/io/files.hpp"

using namespace gsp;
using namespace gsp::io;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gsp_io_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

std::size_t error_line(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(Csv, QuotedFieldsRoundTrip) {
  CsvWriter w{"a", "b"};
  w.row({"plain", "with,comma"}).row({"say \"hi\"", "two\nlines"});
  const CsvTable t(w.str(), "mem");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.text(0, "b"), "with,comma");
  EXPECT_EQ(t.text(1, "a"), "say \"hi\"");
  EXPECT_EQ(t.text(1, "b"), "two\nlines");
}

TEST(Csv, CrlfAndBlankLines) {
  const CsvTable t("x,y\r\n1,2\r\n\r\n3,4\r\n", "mem");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.number(1, "y"), 4.0);
  EXPECT_EQ(t.line(1), 4u);
}

TEST(Csv, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line([] { CsvTable("a,b\n1,2\n3\n", "mem"); }), 3u);
  EXPECT_EQ(error_line([] { CsvTable("a,b\n1,\"open\n", "mem"); }), 2u);
  EXPECT_EQ(error_line([] { CsvTable("a,b\n1,x\"y\n", "mem"); }), 2u);
  EXPECT_EQ(error_line([] { CsvTable("a,b\n1,2\n5,zz\n", "mem").number(1, "b"); }), 3u);
  // A quoted newline advances the line count of later records.
  EXPECT_EQ(error_line([] { CsvTable("a,b\n\"x\ny\",2\n1\n", "mem"); }), 4u);
}

TEST(Csv, NumberFormatting) {
  EXPECT_EQ(format_number(0.1 + 0.2), "0.3");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_number(1e-20), "1e-20");
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
  const fs::path p = scratch("atomic.txt");
  write_file_atomic(p, "one");
  write_file_atomic(p, "two");
  EXPECT_EQ(read_file(p), "two");
  fs::path tmp = p;
  tmp += ".tmp";
  EXPECT_FALSE(fs::exists(tmp));
}

TEST(Files, MarketJson) {
  const fs::path p = scratch("market.json");
  write_file_atomic(p, R"({"reserve": 5, "gamma": [0.4, 0.3, 0.2, 0.1], "page_views_thousands": 100})");
  const MarketFile m = read_market(p);
  EXPECT_EQ(m.region.reserve, 5.0);
  EXPECT_EQ(m.region.weights[0], 0.4);
  EXPECT_EQ(*m.page_views_thousands, 100.0);
  EXPECT_FALSE(m.has_volume);

  write_file_atomic(p, R"({"reserve": 5, "colour": 1})");
  EXPECT_THROW(read_market(p), InvalidInput);
  write_file_atomic(p, R"({"reserve": 5, "gamma": [0.5, 0.5]})");
  EXPECT_THROW(read_market(p), InvalidInput);
  write_file_atomic(p, "{\n  \"reserve\": 5,\n  oops\n}");
  EXPECT_EQ(error_line([&] { read_market(p); }), 3u);

  // What is written reads back.
  RegionConfig r;
  r.reserve = 7.25;
  r.base_daily_volume = 4000;
  r.weekday_multipliers = {1.3, 1.1, 1.0, 1.0, 0.9, 0.8, 0.9};
  r.allowance_rule = AllowanceRule::even;
  write_file_atomic(p, market_json(r));
  const MarketFile back = read_market(p);
  EXPECT_EQ(back.region.reserve, 7.25);
  EXPECT_EQ(back.region.weekday_multipliers, r.weekday_multipliers);
  EXPECT_EQ(back.region.allowance_rule, AllowanceRule::even);
}

TEST(Files, BiddersAndSnapshot) {
  const fs::path p = scratch("bidders.csv");
  write_file_atomic(p,
                    "agent_id,bid,monthly_budget,start_date,end_date,priority\n"
                    "a,10,300,2024-01-01,2024-01-31,1\n"
                    "b,12,inf,,,2\n");
  const auto rows = read_bidders(p);
  MarketFile m;
  m.page_views_thousands = 100;
  const MarketSnapshot s = snapshot(m, rows);
  EXPECT_DOUBLE_EQ(s.bidders[0].budget_per_mille, 9.0);
  EXPECT_TRUE(std::isinf(s.bidders[1].budget_per_mille));
  EXPECT_THROW(agents(rows, p.string()), ParseError);  // b has no dates

  write_file_atomic(p,
                    "agent_id,bid,monthly_budget,start_date,end_date,priority\n"
                    "a,10,300,2024-01-01,2024-01-31,1\n"
                    "a,11,300,2024-01-01,2024-01-31,2\n");
  EXPECT_EQ(error_line([&] { read_bidders(p); }), 3u);
  write_file_atomic(p,
                    "agent_id,bid,monthly_budget,start_date,end_date,priority\n"
                    "a,10,300,2024-02-30,2024-03-31,1\n");
  EXPECT_EQ(error_line([&] { read_bidders(p); }), 2u);
  write_file_atomic(p, "agent_id,bid,monthly_budget\na,1,2\n");
  EXPECT_THROW(read_bidders(p), ParseError);
}

TEST(Files, TracesRoundTrip) {
  BidTrace a{"a", {}}, b{"b", {}};
  a.days.push_back({parse_date("2024-01-01"), 10.5, 3.0, 11.0, true});
  a.days.push_back({parse_date("2024-01-03"), 11.0, 2.0, std::nullopt, true});
  b.days.push_back({parse_date("2024-01-02"), 1.0 / 3.0, 1.0, 0.5, true});
  const fs::path p = scratch("trace.csv");
  write_file_atomic(p, traces_csv({a, b}));
  const auto back = read_traces(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].days.size(), 2u);
  EXPECT_EQ(*back[0].days[0].recommended_bid, 11.0);
  EXPECT_FALSE(back[0].days[1].recommended_bid);
  EXPECT_EQ(back[1].days[0].bid, 0.333333333333);

  write_file_atomic(p, "agent_id,date,bid\na,2024-01-02,1\na,2024-01-01,1\n");
  EXPECT_EQ(error_line([&] { read_traces(p); }), 3u);
}

TEST(Files, SpecOverridesAndPreset) {
  const fs::path p = scratch("spec.json");
  write_file_atomic(p, R"({"preset": "adoption-cohort", "regions": 2, "policy_mix": {"fixed": 1}})");
  const auto s = read_spec(p);
  EXPECT_EQ(s.regions, 2u);
  EXPECT_EQ(s.horizon_days, adoption_cohort_spec().horizon_days);
  EXPECT_EQ(s.mix.fixed, 1.0);
  EXPECT_EQ(s.mix.follower, 0.0);
  write_file_atomic(p, R"({"bid_mean": 5, "reserve_mean": 10})");
  EXPECT_THROW(read_spec(p), InvalidInput);
  write_file_atomic(p, R"({"regions": -1})");
  EXPECT_THROW(read_spec(p), InvalidInput);
}

TEST(Files, RegretHistogramCountsEveryReport) {
  std::vector<RegretReport> reps(5);
  for (std::size_t i = 0; i < reps.size(); ++i) reps[i].eps_star = static_cast<double>(i);
  const CsvTable t(regret_hist_csv(reps, 4), "mem");
  double total = 0;
  for (std::size_t r = 0; r < t.size(); ++r) total += t.number(r, "count");
  EXPECT_EQ(total, 5.0);
}
