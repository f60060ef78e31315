#pragma once

// Synthetic regions calibrated to published population statistics, with
// scripted bidding policies, platform recommendations, and a daily replay.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gsp/recommender.hpp"
#include "gsp/simulator.hpp"

namespace gsp {

enum class Policy { fixed, random_walk, myopic, follower, day_aware };

inline const char* to_string(Policy p) {
  switch (p) {
    case Policy::fixed: return "fixed";
    case Policy::random_walk: return "random-walk";
    case Policy::myopic: return "myopic";
    case Policy::follower: return "follower";
    case Policy::day_aware: return "day-aware";
  }
  return "fixed";
}

struct PolicyMix {
  double fixed = 0.4;
  double random_walk = 0.6;
  double myopic = 0.0;
  double follower = 0.0;
  double day_aware = 0.0;
};

struct SyntheticMarketSpec {
  std::uint64_t seed = 42;
  std::size_t regions = 1;
  std::string start_date = "2024-01-01";
  int horizon_days = 180;

  double agents_mean = 10.74, agents_sd = 5.32;
  std::size_t min_agents = 2;
  double bid_mean = 18.79, bid_sd = 9.71;
  double daily_budget_mean = 9.22, daily_budget_sd = 4.96;
  double duration_mean = 96.04, duration_sd = 20.74;
  double reserve_mean = 13.39, reserve_sd = 9.55;
  double bid_changes_mean = 0.22;  // agents changing their bid per region-day
  double volume_mean = 5290, volume_sd = 3190;

  std::array<double, 7> weekday_multipliers{1, 1, 1, 1, 1, 1, 1};
  AllowanceRule allowance_rule = AllowanceRule::remaining;
  PolicyMix mix;

  double walk_step = 0.15;         // log-sd of a random-walk bid change
  double value_low = 1.2, value_high = 2.0;  // planted value / first bid
  double bid_noise = 0.02;         // relative noise of myopic bids
  double adoption_start = 0.1;     // follower adoption probability in month 0
  double adoption_per_month = 0.2;
  bool coupled_recommendations = false;

  void validate() const {
    if (regions == 0) throw InvalidInput("at least one region is required");
    if (horizon_days < 1) throw InvalidInput("horizon must be at least one day");
    for (double v : {agents_mean, bid_mean, daily_budget_mean, duration_mean, reserve_mean, volume_mean})
      if (!(v > 0.0)) throw InvalidInput("distribution means must be positive");
    for (double v : {agents_sd, bid_sd, daily_budget_sd, duration_sd, reserve_sd, volume_sd})
      if (!(v >= 0.0)) throw InvalidInput("distribution spreads must be nonnegative");
    if (!(bid_mean > reserve_mean)) throw InvalidInput("mean bid must exceed the mean reserve");
    if (!(bid_changes_mean >= 0.0)) throw InvalidInput("bid change rate must be nonnegative");
    const double w = mix.fixed + mix.random_walk + mix.myopic + mix.follower + mix.day_aware;
    if (!(w > 0.0) || mix.fixed < 0 || mix.random_walk < 0 || mix.myopic < 0 || mix.follower < 0 || mix.day_aware < 0)
      throw InvalidInput("policy weights must be nonnegative with a positive total");
    if (!(value_low > 0.0 && value_high >= value_low)) throw InvalidInput("invalid planted value range");
    parse_date(start_date);
    RegionConfig r;
    r.weekday_multipliers = weekday_multipliers;
    r.validate();
  }
};

/// A cohort where half the agents adopt recommendations at a rate that grows
/// with tenure, plus weekday-aware bidders in a modulated market.
inline SyntheticMarketSpec adoption_cohort_spec(std::uint64_t seed = 42) {
  SyntheticMarketSpec s;
  s.seed = seed;
  s.regions = 30;
  s.horizon_days = 150;
  s.bid_changes_mean = 2.0;
  s.weekday_multipliers = {1.3, 1.1, 1.0, 1.0, 0.9, 0.8, 0.9};
  s.mix = {0.1, 0.3, 0.0, 0.5, 0.1};
  s.adoption_start = 0.1;
  s.adoption_per_month = 0.15;
  return s;
}

struct SyntheticAgent {
  Agent agent;
  Policy policy = Policy::fixed;
  double change_probability = 0.0;
  double planted_value = 0.0;
};

struct RegionDataset {
  std::string name;
  RegionConfig config;
  std::vector<SyntheticAgent> agents;
  std::vector<BidTrace> traces;
  SimulationResult simulation;

  std::vector<Agent> plain_agents() const {
    std::vector<Agent> out;
    for (const auto& a : agents) out.push_back(a.agent);
    return out;
  }
};

namespace detail {

inline double lognormal_draw(std::mt19937_64& rng, double mean, double sd) {
  if (sd == 0.0) return mean;
  const double s2 = std::log1p(sd * sd / (mean * mean));
  std::lognormal_distribution<double> d(std::log(mean) - 0.5 * s2, std::sqrt(s2));
  return d(rng);
}

}  // namespace detail

/// Myopic best response at value v against fixed opponents: the grid bid
/// maximizing v * eQ - eCPM (lowest on ties), moved to the middle of the bid
/// interval that gives the same rank.
inline double best_response(const MarketSnapshot& opponents, std::span<const double> pi, double value,
                            std::int64_t priority, const std::string& id) {
  const double eps = grid_epsilon(opponents.bidders);
  double best = -std::numeric_limits<double>::infinity(), bid = opponents.reserve;
  for (double b : candidate_bids(opponents.bidders, opponents.reserve, eps)) {
    const ProbeOutcome o = probe_outcome(opponents, pi, b, priority, id);
    const double u = value * o.eq - o.ecpm;
    if (u > best + 1e-12) {
      best = u;
      bid = b;
    }
  }
  double lo = opponents.reserve, hi = std::numeric_limits<double>::infinity();
  for (const auto& o : opponents.bidders) {
    if (o.bid < bid) lo = std::max(lo, o.bid);
    if (o.bid > bid) hi = std::min(hi, o.bid);
  }
  return std::isfinite(hi) ? 0.5 * (lo + hi) : std::max(lo, bid) * 1.05;
}

namespace detail {

inline MarketSnapshot others(const MarketSnapshot& m, const std::string& id) {
  MarketSnapshot o{{}, m.reserve, m.weights};
  for (const auto& b : m.bidders)
    if (b.id != id) o.bidders.push_back(b);
  return o;
}

// Opponents in canonical order with the filters of a solved day.
inline std::pair<MarketSnapshot, std::vector<double>> opponents_of(const MarketDay& day, const std::string& id) {
  std::map<std::string, double> pi;
  for (std::size_t i = 0; i < day.pacing.ids.size(); ++i) pi[day.pacing.ids[i]] = day.pacing.pi[i];
  MarketSnapshot o = canonical_market(others(day.market, id));
  std::vector<double> p;
  for (const auto& b : o.bidders) p.push_back(pi.count(b.id) ? pi.at(b.id) : 1.0);
  return {o, p};
}

}  // namespace detail

inline RegionDataset generate_region(const SyntheticMarketSpec& spec, std::size_t index,
                                     const PacingOptions& pacing = {}) {
  std::seed_seq seq{static_cast<std::uint64_t>(spec.seed), static_cast<std::uint64_t>(index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  RegionDataset ds;
  ds.name = "region_" + std::to_string(index);
  ds.config.reserve = detail::lognormal_draw(rng, spec.reserve_mean, spec.reserve_sd);
  ds.config.base_daily_volume = detail::lognormal_draw(rng, spec.volume_mean, spec.volume_sd);
  ds.config.weekday_multipliers = spec.weekday_multipliers;
  ds.config.allowance_rule = spec.allowance_rule;

  const long n = std::max<long>(static_cast<long>(spec.min_agents),
                                std::lround(spec.agents_mean + spec.agents_sd * normal(rng)));
  const Date start = parse_date(spec.start_date);
  const int horizon = spec.horizon_days;
  const std::array<double, 5> weights{spec.mix.fixed, spec.mix.random_walk, spec.mix.myopic, spec.mix.follower,
                                      spec.mix.day_aware};
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  // Change probability of agents that change on a schedule, so that the
  // expected number of changing agents per region-day hits the target.
  const double scheduled = spec.mix.random_walk + spec.mix.follower;
  const double total = spec.mix.fixed + scheduled + spec.mix.myopic + spec.mix.day_aware;
  const double daily_share = (spec.mix.myopic + spec.mix.day_aware) / total;
  const double mean_p = scheduled > 0.0
                            ? std::max(0.0, spec.bid_changes_mean * horizon / (spec.agents_mean * spec.duration_mean) -
                                                daily_share) / (scheduled / total)
                            : 0.0;
  const double bid_ratio = spec.bid_mean / spec.reserve_mean;
  const double bid_ratio_sd = spec.bid_sd / spec.reserve_mean;

  for (long i = 0; i < n; ++i) {
    SyntheticAgent s;
    s.policy = static_cast<Policy>(pick(rng));
    const int dur = std::clamp(static_cast<int>(std::lround(spec.duration_mean + spec.duration_sd * normal(rng))), 1,
                               horizon);
    const int offset = static_cast<int>(unit(rng) * (horizon - dur + 1));
    s.agent.id = "agent_" + std::to_string(i);
    s.agent.priority = i + 1;
    s.agent.start = start + std::chrono::days{std::min(offset, horizon - dur)};
    s.agent.end = s.agent.start + std::chrono::days{dur - 1};
    s.agent.monthly_budget = 30.0 * detail::lognormal_draw(rng, spec.daily_budget_mean, spec.daily_budget_sd);
    s.agent.bid = ds.config.reserve * (1.0 + detail::lognormal_draw(rng, bid_ratio - 1.0, bid_ratio_sd));
    s.planted_value = s.agent.bid * (spec.value_low + (spec.value_high - spec.value_low) * unit(rng));
    std::exponential_distribution<double> spread(1.0);
    switch (s.policy) {
      case Policy::fixed: s.change_probability = 0.0; break;
      case Policy::myopic:
      case Policy::day_aware: s.change_probability = 1.0; break;
      default: s.change_probability = std::min(1.0, mean_p * spread(rng)); break;
    }
    ds.agents.push_back(s);
  }

  // Day loop: the platform recommends against yesterday's bids using the
  // unmodulated volume; each agent then moves by its policy.
  std::map<std::string, double> current;
  std::map<std::string, BidTrace> traces;
  for (const auto& a : ds.agents) {
    current[a.agent.id] = a.agent.bid;
    traces[a.agent.id].agent_id = a.agent.id;
  }
  LedgerBook book(ds.config.allowance_rule);
  const double base_np = page_views_thousands(ds.config.base_daily_volume);
  RecommendOptions reco_opt;
  reco_opt.full_coupling = spec.coupled_recommendations;
  reco_opt.pacing = pacing;
  std::optional<MarketDay> yesterday;
  // Mean-preserving multiplicative step, kept at or above the reserve.
  auto walk = [&](double bid) {
    const double s = spec.walk_step;
    return std::max(ds.config.reserve, bid * std::exp(s * normal(rng) - 0.5 * s * s));
  };

  for (Date d = start; d < start + std::chrono::days{horizon}; d += std::chrono::days{1}) {
    std::vector<const SyntheticAgent*> present;
    for (const auto& a : ds.agents)
      if (a.agent.present(d)) present.push_back(&a);
    if (present.empty()) continue;

    MarketSnapshot platform_view{{}, ds.config.reserve, ds.config.weights};
    MarketSnapshot today_view{{}, ds.config.reserve, ds.config.weights};
    const double volume = modulate_volume(ds.config, d);
    std::map<std::string, double> available;
    for (const auto* a : present) {
      const DailyLedger l = book.open(a->agent, d);
      available[a->agent.id] = l.available;
      const double base_b = base_np > 0.0 ? convert_budget(l.available, base_np) : 1e300;
      const double day_b = volume > 0.0 ? convert_budget(l.available, page_views_thousands(volume)) : 1e300;
      platform_view.bidders.push_back({a->agent.id, current[a->agent.id], base_b, a->agent.priority});
      today_view.bidders.push_back({a->agent.id, current[a->agent.id], day_b, a->agent.priority});
    }

    std::vector<std::pair<const Agent*, double>> bids;
    std::map<std::string, double> recos;
    for (const auto* a : present) {
      const std::string& id = a->agent.id;
      reco_opt.query_id = id;
      const double base_b = platform_view.bidders[bids.size()].budget_per_mille;
      const double reco = recommend_bid(platform_view, base_b, reco_opt).bid;
      recos[id] = reco;
      double bid = current[id];
      const bool first_day = d == a->agent.start;
      const bool change = !first_day && unit(rng) < a->change_probability;
      switch (a->policy) {
        case Policy::fixed: break;
        case Policy::random_walk:
          if (change) bid = walk(bid);
          break;
        case Policy::follower:
          if (change) {
            const int month = months_between(a->agent.start, d);
            const double adopt = std::min(1.0, spec.adoption_start + spec.adoption_per_month * month *
                                                                         (1.0 + a->change_probability / std::max(mean_p, 1e-12)));
            if (unit(rng) < adopt)
              bid = reco;
            else
              bid = walk(bid);
          }
          break;
        case Policy::myopic: {
          MarketSnapshot opp;
          std::vector<double> pi;
          if (yesterday) {
            std::tie(opp, pi) = detail::opponents_of(*yesterday, id);
          } else {
            opp = canonical_market(detail::others(platform_view, id));
            pi = solve_pacing(opp, pacing).pi;
          }
          const double br = best_response(opp, pi, a->planted_value, a->agent.priority, id);
          bid = br * (1.0 + spec.bid_noise * (2.0 * unit(rng) - 1.0));
          break;
        }
        case Policy::day_aware: {
          const MarketSnapshot opp = canonical_market(detail::others(today_view, id));
          const std::vector<double> pi = solve_pacing(opp, pacing).pi;
          bid = best_response(opp, pi, a->planted_value, a->agent.priority, id);
          break;
        }
      }
      bids.emplace_back(&a->agent, bid);
    }

    DayResult r = run_day(ds.config, d, book, bids, pacing);
    for (const auto& [agent, bid] : bids) {
      current[agent->id] = bid;
      traces[agent->id].days.push_back({d, bid, available[agent->id], recos[agent->id], true});
    }
    yesterday = r.day;
    if (!r.converged) ds.simulation.unconverged.push_back(d);
    ds.simulation.days.push_back(std::move(r));
  }
  for (const auto& a : ds.agents) ds.traces.push_back(std::move(traces[a.agent.id]));
  return ds;
}

inline std::vector<RegionDataset> generate_market(const SyntheticMarketSpec& spec, const PacingOptions& pacing = {}) {
  spec.validate();
  std::vector<RegionDataset> out;
  for (std::size_t r = 0; r < spec.regions; ++r) out.push_back(generate_region(spec, r, pacing));
  return out;
}

struct PopulationStats {
  double agents = 0.0;
  double bid = 0.0;           // per-agent mean bid over active days
  double daily_budget = 0.0;  // monthly budget / 30
  double duration = 0.0;      // active days
  double reserve = 0.0;
  double bid_changes = 0.0;   // bid changes per region-day
};

/// Statistics averaged per agent first, then over the agents of a region,
/// then over regions.
inline PopulationStats population_stats(std::span<const RegionDataset> regions) {
  PopulationStats s;
  for (const auto& r : regions) {
    const double n = static_cast<double>(r.agents.size());
    double bid = 0.0, budget = 0.0, duration = 0.0;
    std::size_t changes = 0;
    for (std::size_t i = 0; i < r.agents.size(); ++i) {
      const auto& t = r.traces[i];
      double sum = 0.0;
      for (const auto& d : t.days) sum += d.bid;
      bid += t.days.empty() ? r.agents[i].agent.bid : sum / static_cast<double>(t.days.size());
      budget += r.agents[i].agent.monthly_budget / 30.0;
      duration += static_cast<double>(t.active_days());
      changes += t.bid_changes();
    }
    s.agents += n;
    s.reserve += r.config.reserve;
    s.bid += bid / n;
    s.daily_budget += budget / n;
    s.duration += duration / n;
    if (!r.simulation.days.empty())
      s.bid_changes += static_cast<double>(changes) / static_cast<double>(r.simulation.days.size());
  }
  const double nr = static_cast<double>(regions.size());
  for (double* v : {&s.agents, &s.bid, &s.daily_budget, &s.duration, &s.reserve, &s.bid_changes}) *v /= nr;
  return s;
}

}  // namespace gsp
