#pragma once

// Readers and writers for the market, bidder, trace and result files.

#include <set>

#include "gsp/io/csv.hpp"
#include "gsp/kmeans1d.hpp"
#include "gsp/regret.hpp"
#include "gsp/simulator.hpp"
#include "gsp/synthetic.hpp"
#include "json.hpp"

namespace gsp::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// market.json

struct MarketFile {
  RegionConfig region;
  std::optional<double> page_views_thousands;  // for single-snapshot commands
  bool has_volume = false;                     // base_daily_volume given
};

namespace detail {

inline json load_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    // byte offset -> line
    const std::string text = read_file(path);
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ParseError(path.string(), line, "invalid JSON");
  }
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& name) {
  if (!j.is_object()) throw InvalidInput(name + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw InvalidInput(name + ": unknown key '" + k + "'");
}

inline double number_at(const json& j, const std::string& key, const std::string& name) {
  if (!j.at(key).is_number()) throw InvalidInput(name + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

template <std::size_t N>
std::array<double, N> array_at(const json& j, const std::string& key, const std::string& name) {
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != N)
    throw InvalidInput(name + ": '" + key + "' must be an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!a[i].is_number()) throw InvalidInput(name + ": '" + key + "' must hold numbers");
    out[i] = a[i].get<double>();
  }
  return out;
}

}  // namespace detail

inline MarketFile read_market(const fs::path& path) {
  const std::string name = path.string();
  const json j = detail::load_json(path);
  detail::reject_unknown(j,
                         {"reserve", "gamma", "page_views_thousands", "base_daily_volume", "weekday_multipliers",
                          "allowance_rule"},
                         name);
  if (!j.contains("reserve")) throw InvalidInput(name + ": missing 'reserve'");
  MarketFile m;
  try {
    m.region.reserve = detail::number_at(j, "reserve", name);
    if (j.contains("gamma")) m.region.weights = PositionWeights(detail::array_at<kRanks>(j, "gamma", name));
    if (j.contains("page_views_thousands")) {
      m.page_views_thousands = detail::number_at(j, "page_views_thousands", name);
      if (!(*m.page_views_thousands > 0.0)) throw InvalidInput("'page_views_thousands' must be positive");
    }
    if (j.contains("base_daily_volume")) {
      m.region.base_daily_volume = detail::number_at(j, "base_daily_volume", name);
      m.has_volume = true;
    }
    if (j.contains("weekday_multipliers"))
      m.region.weekday_multipliers = detail::array_at<7>(j, "weekday_multipliers", name);
    if (j.contains("allowance_rule")) {
      if (!j["allowance_rule"].is_string()) throw InvalidInput("'allowance_rule' must be a string");
      m.region.allowance_rule = parse_allowance_rule(j["allowance_rule"].get<std::string>());
    }
    m.region.validate();
    if (!m.page_views_thousands && m.has_volume) {
      // An average month of the base volume.
      double mean_mult = 0.0;
      for (double w : m.region.weekday_multipliers) mean_mult += w / 7.0;
      m.page_views_thousands = m.region.base_daily_volume * mean_mult * (365.25 / 12.0) / 1000.0;
    }
  } catch (const ParseError&) {
    throw;
  } catch (const InvalidInput& e) {
    const std::string what = e.what();
    throw InvalidInput(what.rfind(name, 0) == 0 ? what : name + ": " + what);
  }
  return m;
}

/// Flat JSON object whose values are already serialized, in the given order.
inline std::string json_object(const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string out = "{\n";
  for (std::size_t i = 0; i < fields.size(); ++i)
    out += "  " + json(fields[i].first).dump() + ": " + fields[i].second + (i + 1 < fields.size() ? ",\n" : "\n");
  return out + "}\n";
}

inline std::string json_number(double x) {
  if (!std::isfinite(x)) return "null";
  return format_number(x);
}

template <std::size_t N>
std::string json_numbers(const std::array<double, N>& a) {
  std::string out = "[";
  for (std::size_t i = 0; i < N; ++i) out += (i ? ", " : "") + json_number(a[i]);
  return out + "]";
}

inline std::string market_json(const RegionConfig& r, std::optional<double> page_views_thousands = std::nullopt) {
  std::vector<std::pair<std::string, std::string>> f{{"reserve", json_number(r.reserve)},
                                                     {"gamma", json_numbers(r.weights.values())}};
  if (page_views_thousands) f.emplace_back("page_views_thousands", json_number(*page_views_thousands));
  f.emplace_back("base_daily_volume", json_number(r.base_daily_volume));
  f.emplace_back("weekday_multipliers", json_numbers(r.weekday_multipliers));
  f.emplace_back("allowance_rule", json(to_string(r.allowance_rule)).dump());
  return json_object(f);
}

// ---------------------------------------------------------------------------
// bidders.csv

struct BidderRow {
  std::string agent_id;
  double bid = 0.0;
  double monthly_budget = 0.0;
  std::optional<Date> start, end;
  std::int64_t priority = 0;
  std::optional<double> pi;  // optional column, used by `outcomes`
  std::size_t line = 0;
};

inline std::vector<BidderRow> read_bidders(const fs::path& path) {
  const CsvTable t = CsvTable::load(path);
  t.require({"agent_id", "bid", "monthly_budget", "start_date", "end_date", "priority"});
  std::vector<BidderRow> out;
  std::set<std::string> ids;
  for (std::size_t r = 0; r < t.size(); ++r) {
    BidderRow b;
    b.line = t.line(r);
    b.agent_id = t.text(r, "agent_id");
    if (b.agent_id.empty()) throw ParseError(t.name(), b.line, "empty agent_id");
    if (!ids.insert(b.agent_id).second) throw ParseError(t.name(), b.line, "duplicate agent '" + b.agent_id + "'");
    b.bid = t.number(r, "bid");
    b.monthly_budget = t.number(r, "monthly_budget");
    if (!(b.bid >= 0.0) || !std::isfinite(b.bid)) throw ParseError(t.name(), b.line, "bid must be finite and nonnegative");
    if (!(b.monthly_budget >= 0.0)) throw ParseError(t.name(), b.line, "monthly_budget must be nonnegative");
    if (!t.text(r, "start_date").empty()) b.start = t.date(r, "start_date");
    if (!t.text(r, "end_date").empty()) b.end = t.date(r, "end_date");
    if (b.start && b.end && *b.end < *b.start) throw ParseError(t.name(), b.line, "end_date before start_date");
    b.priority = t.integer(r, "priority");
    b.pi = t.optional_number(r, "pi");
    if (b.pi && !(*b.pi >= 0.0 && *b.pi <= 1.0)) throw ParseError(t.name(), b.line, "pi must be in [0,1]");
    out.push_back(b);
  }
  return out;
}

/// One auction snapshot; monthly budgets are converted with the market's page views.
inline MarketSnapshot snapshot(const MarketFile& m, const std::vector<BidderRow>& rows) {
  MarketSnapshot s;
  s.reserve = m.region.reserve;
  s.weights = m.region.weights;
  for (const auto& b : rows) {
    double per_mille = std::numeric_limits<double>::infinity();
    if (std::isfinite(b.monthly_budget)) {
      if (!m.page_views_thousands) throw InvalidInput("market needs 'page_views_thousands' to convert budgets");
      per_mille = convert_budget(b.monthly_budget, *m.page_views_thousands);
    }
    s.bidders.push_back({b.agent_id, b.bid, per_mille, b.priority});
  }
  validate(s);
  return s;
}

inline std::vector<Agent> agents(const std::vector<BidderRow>& rows, const std::string& name) {
  std::vector<Agent> out;
  for (const auto& b : rows) {
    if (!b.start || !b.end) throw ParseError(name, b.line, "start_date and end_date are required");
    out.push_back({b.agent_id, b.monthly_budget, *b.start, *b.end, b.priority, b.bid});
  }
  return out;
}

inline std::string bidders_csv(const std::vector<Agent>& agents) {
  CsvWriter w{"agent_id", "bid", "monthly_budget", "start_date", "end_date", "priority"};
  for (const auto& a : agents)
    w.row({a.id, format_number(a.bid), format_number(a.monthly_budget), format_date(a.start), format_date(a.end),
           std::to_string(a.priority)});
  return w.str();
}

// ---------------------------------------------------------------------------
// trace.csv

/// Traces in order of first appearance; days missing from the file are days
/// the agent did not bid.
inline std::vector<BidTrace> read_traces(const fs::path& path) {
  const CsvTable t = CsvTable::load(path);
  t.require({"agent_id", "date", "bid"});
  std::vector<BidTrace> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const std::string& id = t.text(r, "agent_id");
    if (id.empty()) throw ParseError(t.name(), t.line(r), "empty agent_id");
    auto [it, fresh] = index.emplace(id, out.size());
    if (fresh) out.push_back({id, {}});
    BidTrace& tr = out[it->second];
    TraceDay d;
    d.date = t.date(r, "date");
    d.bid = t.number(r, "bid");
    if (!(d.bid >= 0.0) || !std::isfinite(d.bid)) throw ParseError(t.name(), t.line(r), "bid must be finite and nonnegative");
    d.recommended_bid = t.optional_number(r, "recommended_bid");
    if (const auto a = t.optional_number(r, "available_daily_budget")) d.available_daily_budget = *a;
    if (!tr.days.empty() && d.date <= tr.days.back().date)
      throw ParseError(t.name(), t.line(r), "dates of '" + id + "' must increase");
    tr.days.push_back(d);
  }
  return out;
}

inline std::string traces_csv(const std::vector<BidTrace>& traces) {
  CsvWriter w{"agent_id", "date", "bid", "recommended_bid", "available_daily_budget"};
  for (const auto& t : traces)
    for (const auto& d : t.days) {
      if (!d.active) continue;
      w.row({t.agent_id, format_date(d.date), format_number(d.bid),
             d.recommended_bid ? format_number(*d.recommended_bid) : "", format_number(d.available_daily_budget)});
    }
  return w.str();
}

// ---------------------------------------------------------------------------
// Results

inline std::string pacing_csv(const PacingSolution& s) {
  CsvWriter w{"agent_id", "pi", "ecpm", "eq", "unconditional_spend"};
  for (std::size_t i = 0; i < s.ids.size(); ++i)
    w.row({s.ids[i], format_number(s.pi[i]), format_number(s.outcomes[i].ecpm), format_number(s.outcomes[i].eq),
           format_number(s.pi[i] * s.outcomes[i].ecpm)});
  return w.str();
}

inline std::string snapshot_outcomes_csv(const MarketSnapshot& m, const OutcomeTable& o) {
  CsvWriter w{"agent_id", "pi", "eq", "ecpm", "unconditional_share", "unconditional_spend"};
  for (std::size_t i = 0; i < o.size(); ++i)
    w.row({m.bidders[i].id, format_number(o[i].pi), format_number(o[i].eq), format_number(o[i].ecpm),
           format_number(o[i].unconditional_share()), format_number(o[i].unconditional_spend())});
  return w.str();
}

inline std::string outcomes_csv(const SimulationResult& sim) {
  CsvWriter w{"date", "agent_id", "pi", "eq", "ecpm", "spend", "volume"};
  for (const auto& d : sim.days)
    for (const auto& o : d.outcomes)
      w.row({format_date(o.date), o.agent_id, format_number(o.pi), format_number(o.eq), format_number(o.ecpm),
             format_number(o.spend), format_number(o.volume)});
  return w.str();
}

inline std::string ledgers_csv(const SimulationResult& sim) {
  CsvWriter w{"date", "agent_id", "allowance", "carryover", "available", "spend"};
  for (const auto& d : sim.days)
    for (const auto& l : d.ledgers)
      w.row({format_date(l.date), l.agent_id, format_number(l.allowance), format_number(l.carryover),
             format_number(l.available), format_number(l.spend)});
  return w.str();
}

inline std::string report_csv(const std::vector<RegretReport>& reports, bool with_reco) {
  CsvWriter w{"agent_id",       "v_star",         "eps_star",     "relative_regret", "per_impression_regret",
              "eps_reco",       "classification", "budget_constrained"};
  for (const auto& r : reports)
    w.row({r.agent_id, format_number(r.v_star), format_number(r.eps_star), format_number(r.relative_regret),
           format_number(r.per_impression_regret), with_reco ? format_number(r.eps_reco) : "",
           with_reco ? to_string(r.classification) : "", r.budget_constrained ? "1" : "0"});
  return w.str();
}

inline std::string clusters_csv(const FrequencyClusters& c, std::span<const BidTrace> traces) {
  CsvWriter w{"agent_id", "frequency", "active_days", "cluster", "adherence"};
  for (std::size_t i = 0; i < c.agents.size(); ++i) {
    const auto& a = c.agents[i];
    const auto f = adherence_fraction(traces[i]);
    w.row({a.agent_id, format_number(a.frequency), std::to_string(a.active_days), std::to_string(a.cluster),
           f ? format_number(*f) : ""});
  }
  return w.str();
}

/// Adherence by tenure month; `group` is "all" or a cluster number.
inline void add_adherence_rows(CsvWriter& w, const std::string& group, const std::vector<AdherencePoint>& curve) {
  for (const auto& p : curve) w.row({group, std::to_string(p.month), format_number(p.fraction), std::to_string(p.agents)});
}

/// Equal-width histogram of eps_star - eps_reco over `bins` bins.
inline std::string regret_hist_csv(const std::vector<RegretReport>& reports, std::size_t bins = 20) {
  std::vector<double> diff;
  for (const auto& r : reports) diff.push_back(r.eps_star - r.eps_reco);
  CsvWriter w{"bin_low", "bin_high", "count"};
  if (diff.empty()) return w.str();
  double lo = *std::min_element(diff.begin(), diff.end()), hi = *std::max_element(diff.begin(), diff.end());
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> count(bins, 0);
  for (double d : diff) ++count[std::min(bins - 1, static_cast<std::size_t>((d - lo) / width))];
  for (std::size_t b = 0; b < bins; ++b)
    w.row({format_number(lo + width * static_cast<double>(b)), format_number(lo + width * static_cast<double>(b + 1)),
           std::to_string(count[b])});
  return w.str();
}

inline std::string truth_csv(const RegionDataset& r) {
  CsvWriter w{"agent_id", "policy", "change_probability", "planted_value"};
  for (const auto& a : r.agents)
    w.row({a.agent.id, to_string(a.policy), format_number(a.change_probability),
           a.policy == Policy::myopic || a.policy == Policy::day_aware ? format_number(a.planted_value) : ""});
  return w.str();
}

// ---------------------------------------------------------------------------
// Synthetic market spec

inline SyntheticMarketSpec read_spec(const fs::path& path) {
  const std::string name = path.string();
  const json j = detail::load_json(path);
  detail::reject_unknown(
      j,
      {"regions", "start_date", "horizon_days", "agents_mean", "agents_sd", "min_agents", "bid_mean", "bid_sd",
       "daily_budget_mean", "daily_budget_sd", "duration_mean", "duration_sd", "reserve_mean", "reserve_sd",
       "bid_changes_mean", "volume_mean", "volume_sd", "weekday_multipliers", "allowance_rule", "policy_mix",
       "walk_step", "value_low", "value_high", "bid_noise", "adoption_start", "adoption_per_month",
       "coupled_recommendations", "preset"},
      name);
  SyntheticMarketSpec s;
  try {
    if (j.contains("preset")) {
      if (j["preset"] != "adoption-cohort") throw InvalidInput("unknown preset");
      s = adoption_cohort_spec();
    }
    auto num = [&](const char* key, double& v) {
      if (j.contains(key)) v = detail::number_at(j, key, name);
    };
    auto count = [&](const char* key, auto& v) {
      if (!j.contains(key)) return;
      if (!j[key].is_number_integer() || j[key].get<long long>() < 0)
        throw InvalidInput(std::string("'") + key + "' must be a nonnegative integer");
      v = static_cast<std::remove_reference_t<decltype(v)>>(j[key].get<long long>());
    };
    count("regions", s.regions);
    count("horizon_days", s.horizon_days);
    count("min_agents", s.min_agents);
    if (j.contains("start_date")) s.start_date = j["start_date"].get<std::string>();
    num("agents_mean", s.agents_mean);
    num("agents_sd", s.agents_sd);
    num("bid_mean", s.bid_mean);
    num("bid_sd", s.bid_sd);
    num("daily_budget_mean", s.daily_budget_mean);
    num("daily_budget_sd", s.daily_budget_sd);
    num("duration_mean", s.duration_mean);
    num("duration_sd", s.duration_sd);
    num("reserve_mean", s.reserve_mean);
    num("reserve_sd", s.reserve_sd);
    num("bid_changes_mean", s.bid_changes_mean);
    num("volume_mean", s.volume_mean);
    num("volume_sd", s.volume_sd);
    num("walk_step", s.walk_step);
    num("value_low", s.value_low);
    num("value_high", s.value_high);
    num("bid_noise", s.bid_noise);
    num("adoption_start", s.adoption_start);
    num("adoption_per_month", s.adoption_per_month);
    if (j.contains("weekday_multipliers")) s.weekday_multipliers = detail::array_at<7>(j, "weekday_multipliers", name);
    if (j.contains("allowance_rule")) s.allowance_rule = parse_allowance_rule(j["allowance_rule"].get<std::string>());
    if (j.contains("coupled_recommendations")) s.coupled_recommendations = j["coupled_recommendations"].get<bool>();
    if (j.contains("policy_mix")) {
      const json& m = j["policy_mix"];
      detail::reject_unknown(m, {"fixed", "random-walk", "myopic", "follower", "day-aware"}, name + " policy_mix");
      s.mix = {0, 0, 0, 0, 0};
      auto w = [&](const char* key, double& v) {
        if (m.contains(key)) v = detail::number_at(m, key, name);
      };
      w("fixed", s.mix.fixed);
      w("random-walk", s.mix.random_walk);
      w("myopic", s.mix.myopic);
      w("follower", s.mix.follower);
      w("day-aware", s.mix.day_aware);
    }
    s.validate();
  } catch (const json::exception& e) {
    throw InvalidInput(name + ": " + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw InvalidInput(name + ": " + e.what());
  }
  return s;
}

}  // namespace gsp::io
