#pragma once

// Daily replay of one region: budgets with carryover, weekday volume
// modulation, pacing and expected outcomes per day.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsp/engine.hpp"
#include "gsp/market.hpp"
#include "gsp/pacing.hpp"
#include "gsp/regret.hpp"

namespace gsp {

enum class AllowanceRule {
  remaining,  // (monthly budget - spent this month) / remaining active days
  even,       // monthly budget / active days, plus yesterday's leftover
};

inline AllowanceRule parse_allowance_rule(std::string_view s) {
  if (s == "remaining") return AllowanceRule::remaining;
  if (s == "even") return AllowanceRule::even;
  throw InvalidInput("unknown allowance rule '" + std::string(s) + "'");
}

inline const char* to_string(AllowanceRule r) { return r == AllowanceRule::even ? "even" : "remaining"; }

struct RegionConfig {
  double reserve = 0.0;
  PositionWeights weights;
  std::array<double, 7> weekday_multipliers{1, 1, 1, 1, 1, 1, 1};  // Monday first
  double base_daily_volume = 0.0;                                  // impressions per day
  AllowanceRule allowance_rule = AllowanceRule::remaining;

  void validate() const {
    if (!(reserve >= 0.0) || !std::isfinite(reserve)) throw InvalidInput("reserve must be finite and nonnegative");
    if (!(base_daily_volume >= 0.0) || !std::isfinite(base_daily_volume))
      throw InvalidInput("base daily volume must be finite and nonnegative");
    double sum = 0.0;
    for (double m : weekday_multipliers) {
      if (!(m > 0.0) || !std::isfinite(m)) throw InvalidInput("weekday multipliers must be positive");
      sum += m;
    }
    if (std::abs(sum / 7.0 - 1.0) > 1e-9) throw InvalidInput("weekday multipliers must average 1");
  }
};

inline double modulate_volume(const RegionConfig& region, Date date) {
  return region.base_daily_volume * region.weekday_multipliers[weekday_index(date)];
}

/// Thousands of page views on a day of `volume` impressions, the unit in
/// which budgets are converted to per-mille.
inline double page_views_thousands(double volume) { return volume / 1000.0; }

struct Agent {
  std::string id;
  double monthly_budget = 0.0;
  Date start;
  Date end;
  std::int64_t priority = 0;
  double bid = 0.0;  // standing bid when no trace is given

  bool present(Date d) const { return start <= d && d <= end; }
};

struct DailyLedger {
  Date date;
  std::string agent_id;
  double allowance = 0.0;
  double carryover = 0.0;
  double available = 0.0;
  double spend = 0.0;
};

/// Running budget state of every agent in a region.
class LedgerBook {
 public:
  explicit LedgerBook(AllowanceRule rule = AllowanceRule::remaining) : rule_(rule) {}

  /// Allowance, carryover and available budget for `date`, before spending.
  DailyLedger open(const Agent& a, Date date) const {
    if (!a.present(date)) throw InvalidInput("agent '" + a.id + "' is not active on " + format_date(date));
    const Date first = std::max(month_start(date), a.start);
    const Date last = std::min(month_end(date), a.end);
    const double days_in_month = static_cast<double>((last - first).count() + 1);
    const double remaining_days = static_cast<double>((last - date).count() + 1);

    DailyLedger l{date, a.id, a.monthly_budget / days_in_month, 0.0, 0.0, 0.0};
    const auto it = state_.find(a.id);
    const bool same_month = it != state_.end() && it->second.month == month_start(date);
    if (rule_ == AllowanceRule::remaining) {
      const double spent = same_month ? it->second.spent : 0.0;
      l.available = std::max(0.0, a.monthly_budget - spent) / remaining_days;
      l.carryover = std::max(0.0, l.available - l.allowance);
    } else {
      l.carryover = same_month ? it->second.leftover : 0.0;
      l.available = l.allowance + l.carryover;
    }
    return l;
  }

  /// Records the day's spend, clipped to the available budget.
  DailyLedger close(DailyLedger l, double spend) {
    l.spend = std::clamp(spend, 0.0, l.available);
    auto& s = state_[l.agent_id];
    const Date month = month_start(l.date);
    if (s.month != month) {
      s.month = month;
      s.spent = 0.0;
    }
    s.spent += l.spend;
    s.leftover = l.available - l.spend;
    return l;
  }

  AllowanceRule rule() const { return rule_; }

 private:
  struct State {
    Date month{};
    double spent = 0.0;
    double leftover = 0.0;
  };
  AllowanceRule rule_;
  std::map<std::string, State> state_;
};

struct OutcomeRow {
  Date date;
  std::string agent_id;
  double pi = 0.0;
  double eq = 0.0;
  double ecpm = 0.0;
  double spend = 0.0;
  double volume = 0.0;
};

struct DayResult {
  MarketDay day;
  std::vector<OutcomeRow> outcomes;  // active bidders in canonical order
  std::vector<DailyLedger> ledgers;  // every present agent, input order
  bool converged = true;
};

/// Runs one day: converts each agent's available budget to per-mille via the
/// day's volume, solves pacing, and charges expected spend. A day without
/// volume charges nothing.
inline DayResult run_day(const RegionConfig& region, Date date, LedgerBook& book,
                         const std::vector<std::pair<const Agent*, double>>& bids,
                         const PacingOptions& pacing = {}) {
  DayResult r;
  const double volume = modulate_volume(region, date);
  const double np = page_views_thousands(volume);
  r.day.date = date;
  r.day.volume = volume;
  r.day.market.reserve = region.reserve;
  r.day.market.weights = region.weights;

  std::map<std::string, DailyLedger> open;
  for (const auto& [agent, bid] : bids) {
    const DailyLedger l = book.open(*agent, date);
    const double per_mille = volume > 0.0 ? convert_budget(l.available, np) : std::numeric_limits<double>::infinity();
    r.day.market.bidders.push_back({agent->id, bid, per_mille, agent->priority});
    open.emplace(agent->id, l);
  }
  r.day.pacing = solve_pacing(r.day.market, pacing);
  r.converged = r.day.pacing.converged;

  std::map<std::string, double> spend;
  for (std::size_t i = 0; i < r.day.pacing.ids.size(); ++i) {
    const auto& o = r.day.pacing.outcomes[i];
    const double pi = r.day.pacing.pi[i];
    const double s = volume > 0.0 ? spend_from_per_mille(pi * o.ecpm, np) : 0.0;
    const auto& id = r.day.pacing.ids[i];
    const double charged = std::min(s, open.at(id).available);
    spend[id] = charged;
    r.outcomes.push_back({date, id, pi, o.eq, o.ecpm, charged, volume});
  }
  for (const auto& [agent, bid] : bids) {
    const auto it = spend.find(agent->id);
    r.ledgers.push_back(book.close(open.at(agent->id), it == spend.end() ? 0.0 : it->second));
  }
  return r;
}

struct SimulationResult {
  std::vector<DayResult> days;
  std::vector<Date> unconverged;

  std::vector<MarketDay> history() const {
    std::vector<MarketDay> h;
    h.reserve(days.size());
    for (const auto& d : days) h.push_back(d.day);
    return h;
  }
};

/// Replays a region day by day. An agent's bid on a day comes from its trace
/// when one is given (inactive trace days leave it out of the auction),
/// otherwise from its standing bid over [start, end].
inline SimulationResult simulate(const RegionConfig& region, const std::vector<Agent>& agents,
                                 const std::vector<BidTrace>& traces, const PacingOptions& pacing = {}) {
  region.validate();
  std::map<std::string, const Agent*> by_id;
  for (const auto& a : agents) {
    if (a.end < a.start) throw InvalidInput("agent '" + a.id + "' ends before it starts");
    if (!by_id.emplace(a.id, &a).second) throw InvalidInput("duplicate agent '" + a.id + "'");
  }
  std::map<std::string, std::map<Date, const TraceDay*>> trace_days;
  for (const auto& t : traces) {
    if (!by_id.count(t.agent_id)) throw InvalidInput("trace for unknown agent '" + t.agent_id + "'");
    t.check_dates();
    auto& m = trace_days[t.agent_id];
    for (const auto& d : t.days) m[d.date] = &d;
  }
  if (agents.empty()) return {};

  Date first = agents.front().start, last = agents.front().end;
  for (const auto& a : agents) {
    first = std::min(first, a.start);
    last = std::max(last, a.end);
  }

  SimulationResult out;
  LedgerBook book(region.allowance_rule);
  for (Date d = first; d <= last; d += std::chrono::days{1}) {
    std::vector<std::pair<const Agent*, double>> bids;
    for (const auto& a : agents) {
      if (!a.present(d)) continue;
      const auto t = trace_days.find(a.id);
      if (t == trace_days.end()) {
        bids.emplace_back(&a, a.bid);
        continue;
      }
      const auto day = t->second.find(d);
      if (day == t->second.end() || !day->second->active) continue;
      bids.emplace_back(&a, day->second->bid);
    }
    if (bids.empty()) continue;
    DayResult r = run_day(region, d, book, bids, pacing);
    if (!r.converged) out.unconverged.push_back(d);
    out.days.push_back(std::move(r));
  }
  return out;
}

}  // namespace gsp
