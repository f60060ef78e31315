#pragma once

// Bid recommendation: maximize expected impressions for a budget, bid and
// budget for an impression goal, joint goals for several bidders, and the
// integrity checks the recommendations must satisfy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsp/engine.hpp"
#include "gsp/market.hpp"
#include "gsp/pacing.hpp"

namespace gsp {

inline constexpr double kShareTol = 1e-12;

struct CurvePoint {
  double bid = 0.0;
  double eq = 0.0;
  double ecpm = 0.0;
  double prob = 0.0;  // expected share after own budget smoothing
};

struct EcpmCurve {
  double epsilon = 0.0;
  double budget = 0.0;
  std::vector<CurvePoint> points;
};

enum class Corner { none, top_bidder, bottom_bidder, high_goal, low_goal };

inline const char* to_string(Corner c) {
  switch (c) {
    case Corner::none: return "none";
    case Corner::top_bidder: return "top-bidder";
    case Corner::bottom_bidder: return "bottom-bidder";
    case Corner::high_goal: return "high-goal";
    case Corner::low_goal: return "low-goal";
  }
  return "none";
}

struct Recommendation {
  double bid = 0.0;
  double expected_share = 0.0;
  double expected_spend = 0.0;
  Corner corner_case = Corner::none;
};

struct GoalRequest {
  double goal = 0.0;       // impressions
  double inventory = 0.0;  // projected impressions

  double target_share() const {
    if (!(inventory > 0.0)) throw InvalidInput("inventory must be positive");
    if (!(goal >= 0.0)) throw InvalidInput("goal must be nonnegative");
    if (goal > inventory) throw InvalidInput("goal exceeds inventory");
    return goal / inventory;
  }
};

struct GoalRecommendation {
  double bid = 0.0;
  double budget_per_mille = 0.0;
  double monthly_budget = 0.0;  // per-mille budget times inventory / 1000
  double expected_share = 0.0;  // eQ at the bid, unfiltered
  Corner corner_case = Corner::none;
};

struct RecommendOptions {
  double epsilon = 0.0;        // 0 selects the automatic grid step
  bool full_coupling = true;   // re-solve opponents' filters at every probe
  PacingOptions pacing;
  std::string query_id = "query";  // bidder being advised; removed from the opponents if present
};

/// Prob(b, Budget): eQ if affordable, otherwise the budget-smoothed share.
inline double smoothed_share(double eq, double ecpm, double budget) {
  if (ecpm <= budget) return eq;
  return budget * eq / ecpm;
}

/// max(1e-6, 1e-6 * max bid), or the configured value, kept below half the
/// smallest gap between distinct opponent bids.
inline double grid_epsilon(std::span<const Bidder> opponents, double configured = 0.0) {
  double top = 0.0;
  for (const auto& b : opponents) top = std::max(top, b.bid);
  double eps = configured > 0.0 ? configured : std::max(1e-6, 1e-6 * top);
  std::vector<double> bids;
  for (const auto& b : opponents) bids.push_back(b.bid);
  std::sort(bids.begin(), bids.end());
  bids.erase(std::unique(bids.begin(), bids.end()), bids.end());
  for (std::size_t k = 1; k < bids.size(); ++k) eps = std::min(eps, 0.49 * (bids[k] - bids[k - 1]));
  return eps;
}

/// Candidate bids: every opponent bid plus and minus epsilon, the reserve, and
/// optionally the querying bidder's budget. Points below the reserve are
/// dropped; with no opponents the grid is the reserve alone.
inline std::vector<double> candidate_bids(std::span<const Bidder> opponents, double reserve, double epsilon,
                                          std::optional<double> budget = std::nullopt) {
  std::vector<double> grid{reserve};
  if (opponents.empty()) return grid;
  for (const auto& b : opponents) {
    grid.push_back(b.bid - epsilon);
    grid.push_back(b.bid + epsilon);
  }
  if (budget && std::isfinite(*budget)) grid.push_back(*budget);
  std::erase_if(grid, [&](double b) { return b < reserve; });
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

namespace detail {

struct QueryContext {
  MarketSnapshot opponents;  // canonical, query bidder removed
  std::vector<double> frozen_pi;
  std::string id;
  std::int64_t priority = 0;
};

inline QueryContext make_query(const MarketSnapshot& market, const RecommendOptions& opt) {
  QueryContext q;
  q.id = opt.query_id;
  MarketSnapshot rest{{}, market.reserve, market.weights};
  std::optional<std::int64_t> own_priority;
  std::int64_t worst = 0;
  for (const auto& b : market.bidders) {
    worst = std::max(worst, b.priority);
    if (b.id == q.id) {
      own_priority = b.priority;
    } else {
      rest.bidders.push_back(b);
    }
  }
  q.priority = own_priority.value_or(worst + 1);
  q.opponents = canonical_market(rest);
  if (!opt.full_coupling) q.frozen_pi = solve_pacing(q.opponents, opt.pacing).pi;
  return q;
}

inline ProbeOutcome probe(const QueryContext& q, double bid, double budget, const RecommendOptions& opt) {
  if (bid < q.opponents.reserve) return {};
  if (!opt.full_coupling) return probe_outcome(q.opponents, q.frozen_pi, bid, q.priority, q.id);
  MarketSnapshot m = q.opponents;
  m.bidders.push_back({q.id, bid, budget, q.priority});
  const PacingSolution sol = solve_pacing(m, opt.pacing);
  for (std::size_t i = 0; i < sol.ids.size(); ++i)
    if (sol.ids[i] == q.id) return {sol.outcomes[i].eq, sol.outcomes[i].ecpm};
  return {};
}

inline double top_opponent_bid(const QueryContext& q) {
  return q.opponents.bidders.empty() ? q.opponents.reserve : q.opponents.bidders.front().bid;
}

inline EcpmCurve curve_for(const QueryContext& q, double budget, const RecommendOptions& opt,
                           bool include_budget) {
  EcpmCurve curve;
  curve.epsilon = grid_epsilon(q.opponents.bidders, opt.epsilon);
  curve.budget = budget;
  for (double b : candidate_bids(q.opponents.bidders, q.opponents.reserve, curve.epsilon,
                                 include_budget ? std::optional<double>(budget) : std::nullopt)) {
    const ProbeOutcome o = probe(q, b, budget, opt);
    curve.points.push_back({b, o.eq, o.ecpm, smoothed_share(o.eq, o.ecpm, budget)});
  }
  return curve;
}

}  // namespace detail

/// Curve of the querying bidder against opponents whose filters are fixed.
/// The querying bidder is treated as unfiltered while probing.
inline EcpmCurve build_curve(const MarketSnapshot& opponents, std::span<const double> opponent_pi,
                             double budget, double epsilon = 0.0) {
  const MarketSnapshot sorted = canonical_market(opponents);
  detail::check_filter(opponent_pi, sorted.bidders.size());
  std::int64_t worst = 0;
  for (const auto& b : sorted.bidders) worst = std::max(worst, b.priority);
  EcpmCurve curve;
  curve.epsilon = grid_epsilon(sorted.bidders, epsilon);
  curve.budget = budget;
  for (double b : candidate_bids(sorted.bidders, sorted.reserve, curve.epsilon, budget)) {
    const ProbeOutcome o = probe_outcome(sorted, opponent_pi, b, worst + 1);
    curve.points.push_back({b, o.eq, o.ecpm, smoothed_share(o.eq, o.ecpm, budget)});
  }
  return curve;
}

/// Grid bid maximizing expected impressions for a per-mille budget. Among
/// equally good bids the highest affordable one wins (the point where eCPM
/// meets the budget); if none is affordable, the lowest.
inline Recommendation recommend_bid(const MarketSnapshot& market, double budget,
                                    const RecommendOptions& opt = {}) {
  if (!(budget >= 0.0)) throw InvalidInput("budget must be nonnegative");
  const detail::QueryContext q = detail::make_query(market, opt);
  const EcpmCurve curve = detail::curve_for(q, budget, opt, true);

  double best = 0.0;
  for (const auto& p : curve.points) best = std::max(best, p.prob);
  if (!(best > 0.0)) {
    const ProbeOutcome o = detail::probe(q, q.opponents.reserve, budget, opt);
    return {q.opponents.reserve, smoothed_share(o.eq, o.ecpm, budget), std::min(o.ecpm, budget),
            Corner::bottom_bidder};
  }
  const double cutoff = best - kShareTol * std::max(1.0, best);
  const CurvePoint* chosen = nullptr;
  for (const auto& p : curve.points)
    if (p.prob >= cutoff && p.ecpm <= budget) chosen = &p;
  if (chosen == nullptr)
    for (const auto& p : curve.points)
      if (p.prob >= cutoff) {
        chosen = &p;
        break;
      }

  Recommendation rec{chosen->bid, chosen->prob, std::min(chosen->ecpm, budget), Corner::none};
  const double top = detail::top_opponent_bid(q);
  const bool above_all = q.opponents.bidders.empty() || chosen->bid > top;
  if (above_all && chosen->ecpm <= budget && budget >= top) {
    const double bid = std::max(budget, q.opponents.bidders.empty() ? q.opponents.reserve : top + curve.epsilon);
    const ProbeOutcome o = detail::probe(q, bid, budget, opt);
    rec = {bid, smoothed_share(o.eq, o.ecpm, budget), std::min(o.ecpm, budget), Corner::top_bidder};
  }
  return rec;
}

/// Smallest grid bid whose unfiltered share meets the goal, and the per-mille
/// budget that keeps the bidder unfiltered there.
inline GoalRecommendation recommend_for_goal(const MarketSnapshot& market, const GoalRequest& request,
                                             const RecommendOptions& opt = {}) {
  const double target = request.target_share();
  const double unlimited = std::numeric_limits<double>::infinity();
  const detail::QueryContext q = detail::make_query(market, opt);
  const EcpmCurve curve = detail::curve_for(q, unlimited, opt, false);
  const auto& pts = curve.points;

  GoalRecommendation rec;
  double max_eq = 0.0, min_eq = unlimited;
  for (const auto& p : pts) {
    max_eq = std::max(max_eq, p.eq);
    min_eq = std::min(min_eq, p.eq);
  }
  if (max_eq < target - kShareTol) {
    const CurvePoint& top = pts.back();
    rec = {top.bid, top.bid, 0.0, top.eq, Corner::high_goal};
  } else if (min_eq > target + kShareTol) {
    const CurvePoint& bottom = pts.front();
    const double budget = bottom.eq > 0.0 ? target * bottom.ecpm / bottom.eq : 0.0;
    rec = {bottom.bid, budget, 0.0, bottom.eq, Corner::low_goal};
  } else {
    for (const auto& p : pts)
      if (p.eq >= target - kShareTol) {
        rec = {p.bid, p.ecpm, 0.0, p.eq, Corner::none};
        break;
      }
  }
  rec.monthly_budget = rec.budget_per_mille * request.inventory / 1000.0;
  return rec;
}

struct SimultaneousResult {
  std::map<std::string, GoalRecommendation> recommendations;
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Joint goals for the members of J: members are never filtered, everyone
/// else is budget smoothed. Gauss-Seidel sweeps over J, each member
/// best-responding with recommend_for_goal to the current bids of the rest.
inline SimultaneousResult recommend_simultaneous(const MarketSnapshot& market,
                                                 const std::map<std::string, GoalRequest>& goals,
                                                 const RecommendOptions& opt = {}, double tol = 1e-9,
                                                 std::size_t max_sweeps = 50) {
  if (goals.empty()) throw InvalidInput("simultaneous recommendation needs at least one member");
  double total = 0.0;
  for (const auto& [id, g] : goals) total += g.target_share();
  if (total > 1.0 + kShareTol) throw InvalidInput("joint impression goals exceed the inventory");

  MarketSnapshot current = market;
  for (const auto& [id, g] : goals) {
    const auto it = std::find_if(current.bidders.begin(), current.bidders.end(),
                                 [&](const Bidder& b) { return b.id == id; });
    if (it == current.bidders.end()) throw InvalidInput("goal member '" + id + "' is not in the market");
    it->budget_per_mille = std::numeric_limits<double>::infinity();
  }

  SimultaneousResult result;
  for (result.sweeps = 1; result.sweeps <= max_sweeps; ++result.sweeps) {
    double moved = 0.0;
    for (const auto& [id, g] : goals) {
      RecommendOptions member = opt;
      member.query_id = id;
      const GoalRecommendation rec = recommend_for_goal(current, g, member);
      auto it = std::find_if(current.bidders.begin(), current.bidders.end(),
                             [&](const Bidder& b) { return b.id == id; });
      moved = std::max(moved, std::abs(rec.bid - it->bid));
      it->bid = rec.bid;
      result.recommendations[id] = rec;
    }
    if (moved <= tol) {
      result.converged = true;
      break;
    }
  }
  result.sweeps = std::min(result.sweeps, max_sweeps);
  return result;
}

// ---------------------------------------------------------------------------
// Integrity tests

struct IntegrityCheck {
  std::string name;
  bool passed = true;
  double max_violation = 0.0;
};

struct IntegrityReport {
  std::array<IntegrityCheck, 4> checks{{{"bid-scaling-share", true, 0.0},
                                        {"bid-scaling-spend", true, 0.0},
                                        {"goal-scaling", true, 0.0},
                                        {"ratio-monotonicity", true, 0.0}}};
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const IntegrityCheck& c) { return c.passed; });
  }
};

struct IntegrityOptions {
  std::vector<double> taus{0.5, 2.0, 10.0};
  double inventory = 1e6;
  double tol = 1e-9;
  RecommendOptions recommend;
};

/// Largest increase of eQ/eCPM between consecutive grid points (0 if the
/// ratio is weakly decreasing). Points without spend are skipped.
inline double ratio_monotonicity_violation(const EcpmCurve& curve) {
  double worst = 0.0;
  std::optional<double> prev;
  for (const auto& p : curve.points) {
    if (!(p.ecpm > 0.0)) continue;
    const double ratio = p.eq / p.ecpm;
    if (prev) worst = std::max(worst, ratio - *prev);
    prev = ratio;
  }
  return worst;
}

inline IntegrityReport integrity_suite(const MarketSnapshot& input, const IntegrityOptions& opt = {}) {
  IntegrityReport report;
  const MarketSnapshot market = canonical_market(input);
  const std::size_t n = market.bidders.size();
  const PacingSolution sol = solve_pacing(market, opt.recommend.pacing);
  const OutcomeTable base = outcomes_dp(market, sol.pi);

  auto record = [&](std::size_t k, double v) {
    report.checks[k].max_violation = std::max(report.checks[k].max_violation, v);
  };

  // 1-2: scaling every bid and the reserve with filters held fixed.
  for (double tau : opt.taus) {
    MarketSnapshot scaled = market;
    scaled.reserve *= tau;
    for (auto& b : scaled.bidders) b.bid *= tau;
    const OutcomeTable out = outcomes_dp(scaled, sol.pi);
    for (std::size_t i = 0; i < n; ++i) {
      record(0, std::abs(out[i].eq - base[i].eq));
      record(1, std::abs(out[i].ecpm - tau * base[i].ecpm));
    }
  }

  // 3: scaling inventory and goals leaves bids and per-mille budgets unchanged.
  for (std::size_t k = 0; k < n; ++k) {
    RecommendOptions ro = opt.recommend;
    ro.query_id = market.bidders[k].id;
    const GoalRequest g{base[k].unconditional_share() * opt.inventory, opt.inventory};
    const GoalRecommendation ref = recommend_for_goal(market, g, ro);
    for (double tau : opt.taus) {
      const GoalRecommendation r = recommend_for_goal(market, {tau * g.goal, tau * g.inventory}, ro);
      record(2, std::max(std::abs(r.bid - ref.bid), std::abs(r.budget_per_mille - ref.budget_per_mille)));
    }
  }

  // 4: eQ / eCPM weakly decreasing along each bidder's grid, filters fixed.
  for (std::size_t k = 0; k < n; ++k) {
    MarketSnapshot others{{}, market.reserve, market.weights};
    std::vector<double> others_pi;
    for (std::size_t j = 0; j < n; ++j)
      if (j != k) {
        others.bidders.push_back(market.bidders[j]);
        others_pi.push_back(sol.pi[j]);
      }
    record(3, ratio_monotonicity_violation(build_curve(others, others_pi, market.bidders[k].budget_per_mille)));
  }

  for (auto& c : report.checks) c.passed = c.max_violation <= opt.tol;
  return report;
}

}  // namespace gsp
