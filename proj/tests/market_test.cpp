#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "gsp/market.hpp"
#include "test_support.hpp"

using namespace gsp;

TEST(ConvertBudget, ScalesByPageViews) {
  EXPECT_DOUBLE_EQ(convert_budget(300, 100), 9.0);
  EXPECT_DOUBLE_EQ(convert_budget(0, 50), 0.0);
  EXPECT_DOUBLE_EQ(convert_budget(100, 3), 100.0);
}

TEST(ConvertBudget, RejectsNonPositivePageViews) {
  EXPECT_THROW(convert_budget(100, 0), InvalidInput);
  EXPECT_THROW(convert_budget(100, -2), InvalidInput);
}

TEST(ConvertBudget, LinearAndInverseProportional) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 1000.0);
  for (int k = 0; k < 100; ++k) {
    const double m = u(rng), np = u(rng), c = u(rng) / 100;
    EXPECT_NEAR(convert_budget(c * m, np), c * convert_budget(m, np), 1e-9 * convert_budget(c * m, np));
    EXPECT_NEAR(convert_budget(m, c * np), convert_budget(m, np) / c, 1e-9 * convert_budget(m, np));
    EXPECT_NEAR(spend_from_per_mille(convert_budget(m, np), np), m, 1e-9 * m);
  }
}

TEST(PositionWeights, DefaultsAndShownProbabilities) {
  PositionWeights w;
  EXPECT_DOUBLE_EQ(w[0], 0.33);
  EXPECT_DOUBLE_EQ(w[3], 0.17);
  EXPECT_DOUBLE_EQ(w[4], 0.0);
  double shown = 0;
  for (std::size_t r = 0; r < kRanks; ++r) shown += w.shown_probability(r);
  EXPECT_NEAR(shown, 3.0, 1e-12);
}

TEST(PositionWeights, RejectsInvalid) {
  EXPECT_THROW(PositionWeights({0.2, 0.3, 0.3, 0.2}), InvalidInput);
  EXPECT_THROW(PositionWeights({0.4, 0.3, 0.2, 0.2}), InvalidInput);
  EXPECT_THROW(PositionWeights({1.1, -0.1, 0.0, 0.0}), InvalidInput);
  EXPECT_NO_THROW(PositionWeights({1.0, 0.0, 0.0, 0.0}));
}

TEST(CanonicalSort, ReserveFilter) {
  const auto sorted = canonical_sort(fixtures::make_market({20, 30, 10}, 15));
  ASSERT_EQ(sorted.size(), 2u);
  EXPECT_EQ(sorted[0].bid, 30);
  EXPECT_EQ(sorted[1].bid, 20);
}

TEST(CanonicalSort, ReserveBoundaryIsActive) {
  EXPECT_EQ(canonical_sort(fixtures::make_market({15, 14.999}, 15)).size(), 1u);
}

TEST(CanonicalSort, PriorityBreaksTies) {
  MarketSnapshot m;
  m.bidders = {{"x", 20, 0, 2}, {"y", 20, 0, 1}};
  const auto sorted = canonical_sort(m);
  EXPECT_EQ(sorted[0].id, "y");
}

TEST(CanonicalSort, EmptyMarket) { EXPECT_TRUE(canonical_sort(MarketSnapshot{}).empty()); }

TEST(CanonicalSort, DuplicatePriorityRejected) {
  MarketSnapshot m;
  m.bidders = {{"x", 20, 0, 1}, {"y", 25, 0, 1}};
  EXPECT_THROW(canonical_sort(m), InvalidInput);
}

TEST(CanonicalSort, PermutationInvariantAndIdempotent) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = fixtures::random_canonical_market(rng, 15);
    const auto reference = canonical_sort(m);
    std::shuffle(m.bidders.begin(), m.bidders.end(), rng);
    const auto again = canonical_sort(m);
    ASSERT_EQ(reference.size(), again.size());
    for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(reference[i].id, again[i].id);
    const auto twice = canonical_sort(MarketSnapshot{again, m.reserve, m.weights});
    for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(twice[i].id, again[i].id);
  }
}

TEST(Dates, ParseFormatRoundTripAndCalendar) {
  const Date d = parse_date("2024-02-29");
  EXPECT_EQ(format_date(d), "2024-02-29");
  EXPECT_EQ(format_date(month_end(d)), "2024-02-29");
  EXPECT_EQ(format_date(month_start(d)), "2024-02-01");
  EXPECT_EQ(weekday_index(parse_date("2024-01-01")), 0u);  // a Monday
  EXPECT_THROW(parse_date("2023-02-29"), InvalidInput);
  EXPECT_THROW(parse_date("2023/02/01"), InvalidInput);
}

TEST(BidTrace, ChangeFrequency) {
  BidTrace t{"a", {}};
  const Date d0 = parse_date("2024-03-01");
  const double bids[] = {10, 10, 12, 12, 11};
  for (int k = 0; k < 5; ++k) t.days.push_back({d0 + std::chrono::days{k}, bids[k], 0, std::nullopt, true});
  t.days[3].active = false;
  EXPECT_EQ(t.active_days(), 4u);
  EXPECT_EQ(t.bid_changes(), 2u);
  EXPECT_DOUBLE_EQ(t.bid_change_frequency(), 0.5);
  t.days[2].date = t.days[1].date;
  EXPECT_THROW(t.check_dates(), InvalidInput);
}
