#include <gtest/gtest.h>

#include <random>

#include "gsp/recommender.hpp"
#include "test_support.hpp"

using namespace gsp;
using gsp::fixtures::make_market;

namespace {

MarketSnapshot one_opponent() { return make_market({10}, 5); }

const CurvePoint* point_near(const EcpmCurve& c, double bid) {
  for (const auto& p : c.points)
    if (std::abs(p.bid - bid) < 1e-12) return &p;
  return nullptr;
}

// Grid argmax by brute force over a fine bid sweep, opponents frozen.
double best_prob_on_sweep(const MarketSnapshot& opp, std::span<const double> pi, double budget) {
  double best = 0;
  for (double b = opp.reserve; b <= opp.reserve + 40; b += 0.01) {
    const auto o = probe_outcome(opp, pi, b);
    best = std::max(best, smoothed_share(o.eq, o.ecpm, budget));
  }
  return best;
}

}  // namespace

TEST(BuildCurve, NoOpponents) {
  const auto c = build_curve(MarketSnapshot{{}, 5, {}}, std::vector<double>{}, 1e9);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_DOUBLE_EQ(c.points[0].bid, 5);
  EXPECT_NEAR(c.points[0].eq, 0.33, 1e-15);
  EXPECT_NEAR(c.points[0].ecpm, 1.65, 1e-14);
}

TEST(BuildCurve, OneOpponentTwoSteps) {
  const auto c = build_curve(one_opponent(), std::vector<double>{1.0}, 2.0);
  const double eps = c.epsilon;
  EXPECT_NEAR(eps, 1e-5, 1e-18);
  const auto* below = point_near(c, 10 - eps);
  const auto* above = point_near(c, 10 + eps);
  ASSERT_NE(below, nullptr);
  ASSERT_NE(above, nullptr);
  EXPECT_NEAR(below->eq, 0.28, 1e-15);
  EXPECT_NEAR(below->ecpm, 1.4, 1e-14);
  EXPECT_NEAR(above->eq, 0.33, 1e-15);
  EXPECT_NEAR(above->ecpm, 3.3, 1e-14);
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    EXPECT_LT(c.points[k - 1].bid, c.points[k].bid);
    EXPECT_LE(c.points[k - 1].eq, c.points[k].eq);
    EXPECT_LE(c.points[k - 1].ecpm, c.points[k].ecpm);
  }
}

TEST(GridEpsilon, ClampedBelowHalfGap) {
  const auto m = make_market({10, 10.00001}, 5);
  EXPECT_LT(grid_epsilon(m.bidders), 0.5e-5);
  EXPECT_DOUBLE_EQ(grid_epsilon(make_market({3}, 1).bidders), 3e-6);
  EXPECT_DOUBLE_EQ(grid_epsilon(make_market({0.2}, 0.1).bidders), 1e-6);
  EXPECT_DOUBLE_EQ(grid_epsilon(make_market({3}, 1).bidders, 0.01), 0.01);
}

TEST(RecommendBid, NoOpponentsTopCorner) {
  const auto r = recommend_bid(MarketSnapshot{{}, 5, {}}, 10);
  EXPECT_DOUBLE_EQ(r.bid, 10);
  EXPECT_EQ(r.corner_case, Corner::top_bidder);
  EXPECT_NEAR(r.expected_spend, 1.65, 1e-14);
  EXPECT_NEAR(r.expected_share, 0.33, 1e-15);
}

TEST(RecommendBid, SmallBudgetUnderbids) {
  for (bool coupled : {true, false}) {
    RecommendOptions opt;
    opt.full_coupling = coupled;
    const auto r = recommend_bid(one_opponent(), 2.0, opt);
    EXPECT_NEAR(r.bid, 10 - 1e-5, 1e-12);
    EXPECT_NEAR(r.expected_share, 0.28, 1e-12);
    EXPECT_EQ(r.corner_case, Corner::none);
  }
}

TEST(RecommendBid, LargerBudgetOutbids) {
  const auto r = recommend_bid(one_opponent(), 3.5);
  EXPECT_NEAR(r.bid, 10 + 1e-5, 1e-12);
  EXPECT_NEAR(r.expected_share, 0.33, 1e-12);
  EXPECT_NEAR(r.expected_spend, 3.3, 1e-9);
}

TEST(RecommendBid, TopCornerNeedsBudgetAboveOpponents) {
  const auto r = recommend_bid(one_opponent(), 12);
  EXPECT_EQ(r.corner_case, Corner::top_bidder);
  EXPECT_DOUBLE_EQ(r.bid, 12);
}

TEST(RecommendBid, ZeroBudgetIsBottomCorner) {
  const auto r = recommend_bid(one_opponent(), 0.0);
  EXPECT_EQ(r.corner_case, Corner::bottom_bidder);
  EXPECT_DOUBLE_EQ(r.bid, 5);
  EXPECT_EQ(r.expected_spend, 0.0);
  EXPECT_THROW(recommend_bid(one_opponent(), -1), InvalidInput);
}

TEST(RecommendBid, ArgmaxAndBudgetCompliance) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> unit(0, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = trial % 8;
    const auto m = fixtures::random_budgeted_market(rng, n);
    const double budget = 8 * unit(rng);
    for (bool coupled : {true, false}) {
      RecommendOptions opt;
      opt.full_coupling = coupled;
      const auto r = recommend_bid(m, budget, opt);
      EXPECT_LE(r.expected_spend, budget + 1e-9);
      if (!coupled) {
        // Frozen opponents: nothing on a fine sweep beats the grid answer.
        const auto pi = solve_pacing(m).pi;
        EXPECT_GE(r.expected_share, best_prob_on_sweep(canonical_market(m), pi, budget) - 1e-9);
        const auto curve = build_curve(m, pi, budget);
        for (const auto& p : curve.points) EXPECT_GE(r.expected_share, p.prob - 1e-12);
      }
    }
  }
}

TEST(RecommendBid, ExistingBidderIsRemovedFromOpponents) {
  auto m = make_market({10, 8}, 5);
  RecommendOptions opt;
  opt.query_id = "a1";
  const auto r = recommend_bid(m, 2.0, opt);
  EXPECT_NEAR(r.bid, 10 - 1e-5, 1e-12);
}

TEST(RecommendForGoal, Examples) {
  const auto m = one_opponent();
  auto r = recommend_for_goal(m, {330, 1000});
  EXPECT_NEAR(r.bid, 10 + 1e-5, 1e-12);
  EXPECT_NEAR(r.budget_per_mille, 3.3, 1e-12);
  EXPECT_EQ(r.corner_case, Corner::none);
  EXPECT_NEAR(r.monthly_budget, 3.3, 1e-12);

  r = recommend_for_goal(m, {500, 1000});
  EXPECT_EQ(r.corner_case, Corner::high_goal);
  EXPECT_DOUBLE_EQ(r.budget_per_mille, r.bid);
  EXPECT_NEAR(r.bid, 10 + 1e-5, 1e-12);

  r = recommend_for_goal(m, {0, 1000});
  EXPECT_EQ(r.corner_case, Corner::low_goal);
  EXPECT_DOUBLE_EQ(r.bid, 5);
  EXPECT_EQ(r.budget_per_mille, 0.0);

  r = recommend_for_goal(m, {250, 1000});
  EXPECT_DOUBLE_EQ(r.bid, 5);
  EXPECT_NEAR(r.expected_share, 0.28, 1e-12);

  EXPECT_THROW(recommend_for_goal(m, {1001, 1000}), InvalidInput);
  EXPECT_THROW(recommend_for_goal(m, {1, 0}), InvalidInput);
}

TEST(RecommendSimultaneous, SingleMemberMatchesGoal) {
  auto m = make_market({10, 7, 12}, 5, {1.0, 1e9, 2.0});
  const GoalRequest g{280, 1000};
  const auto joint = recommend_simultaneous(m, {{"a1", g}});
  RecommendOptions opt;
  opt.query_id = "a1";
  const auto single = recommend_for_goal(m, g, opt);
  EXPECT_TRUE(joint.converged);
  EXPECT_DOUBLE_EQ(joint.recommendations.at("a1").bid, single.bid);
  EXPECT_DOUBLE_EQ(joint.recommendations.at("a1").budget_per_mille, single.budget_per_mille);
}

TEST(RecommendSimultaneous, SymmetricMembersGetEqualBids) {
  auto m = make_market({10, 5, 5}, 5);
  const auto joint = recommend_simultaneous(m, {{"a1", {220, 1000}}, {"a2", {220, 1000}}});
  EXPECT_TRUE(joint.converged);
  EXPECT_DOUBLE_EQ(joint.recommendations.at("a1").bid, joint.recommendations.at("a2").bid);
}

TEST(RecommendSimultaneous, SolutionSatisfiesGoalsUnderOracle) {
  auto m = make_market({15, 9, 8, 20, 6}, 5, {1e9, 1e9, 1.0, 2.0, 0.5});
  const std::map<std::string, GoalRequest> goals{{"a1", {280, 1000}}, {"a2", {170, 1000}}};
  const auto joint = recommend_simultaneous(m, goals);
  ASSERT_TRUE(joint.converged);
  for (auto& b : m.bidders) {
    if (goals.count(b.id)) {
      b.bid = joint.recommendations.at(b.id).bid;
      b.budget_per_mille = std::numeric_limits<double>::infinity();
    }
  }
  const auto sol = solve_pacing(m);
  const auto canonical = canonical_market(m);
  const auto oracle = outcomes_oracle(canonical, sol.pi);
  for (std::size_t i = 0; i < sol.ids.size(); ++i) {
    if (!goals.count(sol.ids[i])) continue;
    EXPECT_EQ(sol.pi[i], 1.0);
    EXPECT_GE(oracle[i].eq, goals.at(sol.ids[i]).target_share() - 1e-9) << sol.ids[i];
  }
}

TEST(RecommendSimultaneous, RejectsInfeasibleGoals) {
  auto m = make_market({10, 7}, 5);
  EXPECT_THROW(recommend_simultaneous(m, {{"a0", {600, 1000}}, {"a1", {500, 1000}}}), InvalidInput);
  EXPECT_THROW(recommend_simultaneous(m, {}), InvalidInput);
  EXPECT_THROW(recommend_simultaneous(m, {{"zz", {1, 1000}}}), InvalidInput);
}

TEST(IntegritySuite, IdentityScalingIsExact) {
  std::mt19937_64 rng(3);
  IntegrityOptions opt;
  opt.taus = {1.0};
  const auto report = integrity_suite(fixtures::random_budgeted_market(rng, 6), opt);
  EXPECT_TRUE(report.passed());
  for (const auto& c : report.checks) EXPECT_EQ(c.max_violation, 0.0) << c.name;
}

TEST(IntegritySuite, RandomMarketsPass) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto report = integrity_suite(fixtures::random_budgeted_market(rng, 2 + trial % 6));
    for (const auto& c : report.checks) EXPECT_TRUE(c.passed) << c.name << " " << c.max_violation;
  }
}

TEST(IntegritySuite, NonMonotoneMockCurveFails) {
  EcpmCurve mock;
  mock.points = {{5, 0.2, 1.0, 0.2}, {6, 0.3, 1.2, 0.3}, {7, 0.33, 2.0, 0.33}};
  EXPECT_GT(ratio_monotonicity_violation(mock), 0.0);
  mock.points[1].eq = 0.24;
  EXPECT_EQ(ratio_monotonicity_violation(mock), 0.0);
}
