#pragma once

// No-regret inference from bid traces: average regret against fixed bids,
// the rationalizable (value, regret) set, its support function, and the
// comparison with following the platform recommendation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsp/engine.hpp"
#include "gsp/market.hpp"
#include "gsp/pacing.hpp"
#include "gsp/recommender.hpp"

namespace gsp {

/// One simulated day: every bidder present that day (any bid) and the pacing
/// solution over the active ones.
struct MarketDay {
  Date date;
  double volume = 0.0;  // impressions
  MarketSnapshot market;
  PacingSolution pacing;
};

namespace detail {

// One agent's view of one day: opponents with their filters fixed, and a
// cache of outcomes by rank position (the outcome does not depend on the
// exact bid within a position).
class DayView {
 public:
  DayView(const MarketDay& day, const std::string& agent) : id_(agent) {
    opponents_.reserve = day.market.reserve;
    opponents_.weights = day.market.weights;
    std::unordered_map<std::string, double> pi;
    for (std::size_t i = 0; i < day.pacing.ids.size(); ++i) pi[day.pacing.ids[i]] = day.pacing.pi[i];
    bool found = false;
    for (const auto& b : day.market.bidders) {
      if (b.id == agent) {
        priority_ = b.priority;
        found = true;
      }
    }
    if (!found) throw InvalidInput("agent '" + agent + "' missing from the market on " + format_date(day.date));
    for (const auto& b : canonical_sort(day.market)) {
      if (b.id == agent) continue;
      const auto it = pi.find(b.id);
      if (it == pi.end()) throw InvalidInput("no filter for bidder '" + b.id + "' on " + format_date(day.date));
      opponents_.bidders.push_back(b);
      pi_.push_back(it->second);
    }
    cache_.resize(opponents_.bidders.size() + 1);
  }

  ProbeOutcome at(double bid) {
    if (bid < opponents_.reserve) return {};
    const Bidder probe{id_, bid, 0.0, priority_};
    const auto& opp = opponents_.bidders;
    const auto pos = static_cast<std::size_t>(
        std::partition_point(opp.begin(), opp.end(), [&](const Bidder& o) { return ranks_before(o, probe); }) -
        opp.begin());
    if (!cache_[pos]) cache_[pos] = probe_outcome(opponents_, pi_, bid, priority_, id_);
    return *cache_[pos];
  }

  const MarketSnapshot& opponents() const { return opponents_; }

 private:
  std::string id_;
  std::int64_t priority_ = 0;
  MarketSnapshot opponents_;
  std::vector<double> pi_;
  std::vector<std::optional<ProbeOutcome>> cache_;
};

}  // namespace detail

/// Active trace days paired with the history, in date order.
struct AlignedHistory {
  std::vector<double> bids;
  std::vector<const MarketDay*> days;
};

inline AlignedHistory align(const BidTrace& trace, std::span<const MarketDay> history) {
  trace.check_dates();
  std::map<Date, const MarketDay*> by_date;
  for (const auto& d : history) by_date[d.date] = &d;
  AlignedHistory out;
  for (const auto& d : trace.days) {
    if (!d.active) continue;
    const auto it = by_date.find(d.date);
    if (it == by_date.end())
      throw InvalidInput("no market history for '" + trace.agent_id + "' on " + format_date(d.date));
    out.bids.push_back(d.bid);
    out.days.push_back(it->second);
  }
  return out;
}

struct DeltaCurves {
  std::vector<double> grid;
  std::vector<double> d_eq;
  std::vector<double> d_ecpm;
  std::size_t days = 0;
  double played_eq_sum = 0.0;  // sum over days of eQ_t(b_t)
};

inline constexpr std::size_t kUniformGridPoints = 64;

/// Candidate fixed bids: each day's opponent bids plus and minus epsilon and
/// reserve, the played bids, and 64 uniform points over
/// [lowest reserve, 1.5 x highest observed bid].
inline std::vector<double> regret_grid(std::span<detail::DayView> views, std::span<const double> played) {
  std::vector<double> grid(played.begin(), played.end());
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double b : played) hi = std::max(hi, b);
  for (auto& v : views) {
    const auto& opp = v.opponents();
    lo = std::min(lo, opp.reserve);
    grid.push_back(opp.reserve);
    const double eps = grid_epsilon(opp.bidders);
    for (const auto& b : opp.bidders) {
      grid.push_back(b.bid - eps);
      grid.push_back(b.bid + eps);
      hi = std::max(hi, b.bid);
    }
  }
  hi = std::max(1.5 * hi, lo);
  for (std::size_t k = 0; k < kUniformGridPoints; ++k)
    grid.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(kUniformGridPoints - 1));
  std::erase_if(grid, [](double b) { return !(b >= 0.0); });
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

inline DeltaCurves delta_curves(const std::string& agent, const AlignedHistory& h,
                                std::optional<std::vector<double>> grid = std::nullopt) {
  if (h.days.empty()) throw InvalidInput("no active days for '" + agent + "'");
  std::vector<detail::DayView> views;
  views.reserve(h.days.size());
  for (const auto* d : h.days) views.emplace_back(*d, agent);

  DeltaCurves c;
  c.days = views.size();
  c.grid = grid ? std::move(*grid) : regret_grid(views, h.bids);
  if (c.grid.empty()) throw InvalidInput("empty candidate grid");
  const double T = static_cast<double>(c.days);
  double played_eq = 0.0, played_ecpm = 0.0;
  for (std::size_t t = 0; t < views.size(); ++t) {
    const ProbeOutcome o = views[t].at(h.bids[t]);
    played_eq += o.eq;
    played_ecpm += o.ecpm;
  }
  c.played_eq_sum = played_eq;
  c.d_eq.resize(c.grid.size());
  c.d_ecpm.resize(c.grid.size());
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    double eq = 0.0, ecpm = 0.0;
    for (auto& v : views) {
      const ProbeOutcome o = v.at(c.grid[k]);
      eq += o.eq;
      ecpm += o.ecpm;
    }
    c.d_eq[k] = (eq - played_eq) / T;
    c.d_ecpm[k] = (ecpm - played_ecpm) / T;
  }
  return c;
}

/// Average utility of always bidding b_prime minus that of the played
/// sequence, at value v.
inline double average_regret(const BidTrace& trace, std::span<const MarketDay> history, double v, double b_prime) {
  const AlignedHistory h = align(trace, history);
  const DeltaCurves c = delta_curves(trace.agent_id, h, std::vector<double>{b_prime});
  return v * c.d_eq[0] - c.d_ecpm[0];
}

// ---------------------------------------------------------------------------
// Rationalizable set

struct RationalizableSet {
  DeltaCurves curves;
  double v_cap = 0.0;
  double v_star = 0.0;
  double eps_star = 0.0;
  bool budget_constrained = false;

  /// eps(v) = max over the grid of v * dEQ - dECPM.
  double regret_at(double v) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < curves.grid.size(); ++k)
      worst = std::max(worst, v * curves.d_eq[k] - curves.d_ecpm[k]);
    return worst;
  }
};

namespace detail {

struct Line {
  double slope, intercept;
  double at(double x) const { return slope * x + intercept; }
};

// Upper envelope of lines, ordered by slope; consecutive envelope lines
// cross at increasing x.
inline std::vector<Line> upper_envelope(std::vector<Line> lines) {
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return a.slope != b.slope ? a.slope < b.slope : a.intercept < b.intercept;
  });
  std::vector<Line> hull;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (k + 1 < lines.size() && lines[k + 1].slope == lines[k].slope) continue;
    const Line& l = lines[k];
    while (hull.size() >= 2) {
      const Line& a = hull[hull.size() - 2];
      const Line& b = hull.back();
      // b is redundant if l overtakes a no later than b does.
      if ((l.intercept - a.intercept) * (b.slope - a.slope) >= (b.intercept - a.intercept) * (l.slope - a.slope))
        hull.pop_back();
      else
        break;
    }
    hull.push_back(l);
  }
  return hull;
}

inline double crossing(const Line& a, const Line& b) { return (a.intercept - b.intercept) / (b.slope - a.slope); }

}  // namespace detail

/// Minimizes eps(v) over v in [0, v_cap] exactly: eps is the upper envelope of
/// the half-plane boundaries, so the minimum sits at 0, v_cap or an envelope
/// breakpoint. Ties go to the smallest v. If no fixed bid wins more than the
/// played sequence, the set gives no upper bound on the value; the flag is
/// set and v* is reported at the cap.
inline RationalizableSet rationalizable_set(DeltaCurves curves, std::optional<double> v_cap = std::nullopt) {
  RationalizableSet s;
  s.curves = std::move(curves);
  const auto& c = s.curves;
  if (c.grid.empty()) throw InvalidInput("empty candidate grid");
  s.v_cap = v_cap.value_or(c.grid.back());
  double max_slope = -std::numeric_limits<double>::infinity();
  for (double a : c.d_eq) max_slope = std::max(max_slope, a);
  s.budget_constrained = max_slope <= 0.0;

  std::vector<detail::Line> lines;
  for (std::size_t k = 0; k < c.grid.size(); ++k) lines.push_back({c.d_eq[k], -c.d_ecpm[k]});
  const auto hull = detail::upper_envelope(lines);

  std::vector<double> candidates{0.0, s.v_cap};
  for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
    const double x = detail::crossing(hull[k], hull[k + 1]);
    if (x > 0.0 && x < s.v_cap) candidates.push_back(x);
  }
  std::sort(candidates.begin(), candidates.end());
  s.v_star = candidates.front();
  s.eps_star = s.regret_at(s.v_star);
  for (double v : candidates) {
    const double e = s.regret_at(v);
    if (e < s.eps_star) {
      s.eps_star = e;
      s.v_star = v;
    }
  }
  if (s.budget_constrained) {
    s.v_star = s.v_cap;
    s.eps_star = s.regret_at(s.v_cap);
  }
  return s;
}

inline RationalizableSet build_rationalizable_set(const BidTrace& trace, std::span<const MarketDay> history,
                                                  std::optional<double> v_cap = std::nullopt) {
  return rationalizable_set(delta_curves(trace.agent_id, align(trace, history)), v_cap);
}

// ---------------------------------------------------------------------------
// Support function

/// h(u) = sup of u1 * v + u2 * eps over {(v, eps): eps >= v * dEQ(b') - dECPM(b')}
/// with v unrestricted. Finite only for u2 < 0 with s = u1 / |u2| inside
/// [min dEQ, max dEQ]; there h = |u2| times the lower convex hull of the
/// points (dEQ, dECPM) evaluated at s.
inline double support_function(const DeltaCurves& c, double u1, double u2) {
  if (std::abs(std::hypot(u1, u2) - 1.0) > 1e-9) throw InvalidInput("direction must be a unit vector");
  const double inf = std::numeric_limits<double>::infinity();
  if (!(u2 < 0.0) || c.grid.empty()) return inf;
  const double s = u1 / -u2;

  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < c.grid.size(); ++k) pts.emplace_back(c.d_eq[k], c.d_ecpm[k]);
  std::sort(pts.begin(), pts.end());
  if (s < pts.front().first || s > pts.back().first) return inf;

  std::vector<std::pair<double, double>> hull;
  for (const auto& p : pts) {
    if (!hull.empty() && hull.back().first == p.first) continue;  // keep the lowest at equal abscissa
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      if ((b.first - a.first) * (p.second - a.second) - (b.second - a.second) * (p.first - a.first) <= 0.0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(p);
  }
  auto it = std::lower_bound(hull.begin(), hull.end(), s, [](const auto& p, double x) { return p.first < x; });
  double value;
  if (it->first == s || it == hull.begin()) {
    value = it->second;
  } else {
    const auto& a = *(it - 1);
    const auto& b = *it;
    const double w = (s - a.first) / (b.first - a.first);
    value = a.second + w * (b.second - a.second);
  }
  return -u2 * value;
}

// ---------------------------------------------------------------------------
// Comparison with the recommendation

enum class Classification { worse, better, equal };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::worse: return "worse";
    case Classification::better: return "better";
    case Classification::equal: return "equal";
  }
  return "equal";
}

struct RegretReport {
  std::string agent_id;
  double v_star = 0.0;
  double eps_star = 0.0;
  double relative_regret = std::numeric_limits<double>::quiet_NaN();
  double per_impression_regret = std::numeric_limits<double>::quiet_NaN();
  double eps_reco = 0.0;
  Classification classification = Classification::equal;
  bool budget_constrained = false;
};

/// History with the agent's bid replaced by the recommendation each day and
/// pacing re-solved for everyone. Days where the recommendation equals the
/// played bid are reused as they are.
inline std::vector<MarketDay> counterfactual_history(const BidTrace& trace, std::span<const MarketDay> history,
                                                     const PacingOptions& pacing = {}) {
  const AlignedHistory h = align(trace, history);
  std::vector<MarketDay> out;
  std::size_t t = 0;
  for (const auto& d : trace.days) {
    if (!d.active) continue;
    if (!d.recommended_bid)
      throw InvalidInput("trace of '" + trace.agent_id + "' lacks a recommendation on " + format_date(d.date));
    MarketDay day = *h.days[t++];
    if (*d.recommended_bid != d.bid) {
      for (auto& b : day.market.bidders)
        if (b.id == trace.agent_id) b.bid = *d.recommended_bid;
      day.pacing = solve_pacing(day.market, pacing);
    }
    out.push_back(std::move(day));
  }
  return out;
}

inline BidTrace recommended_trace(const BidTrace& trace) {
  BidTrace reco = trace;
  for (auto& d : reco.days)
    if (d.active) {
      if (!d.recommended_bid)
        throw InvalidInput("trace of '" + trace.agent_id + "' lacks a recommendation on " + format_date(d.date));
      d.bid = *d.recommended_bid;
    }
  return reco;
}

inline RegretReport compare_with_recommendation(const BidTrace& trace, std::span<const MarketDay> history,
                                                double delta, const PacingOptions& pacing = {}) {
  if (!(delta >= 0.0)) throw InvalidInput("classification tolerance must be nonnegative");
  const RationalizableSet own = build_rationalizable_set(trace, history);
  const std::vector<MarketDay> cf = counterfactual_history(trace, history, pacing);
  const BidTrace reco = recommended_trace(trace);
  const RationalizableSet alt{delta_curves(trace.agent_id, align(reco, cf)), 0, 0, 0, false};

  RegretReport r;
  r.agent_id = trace.agent_id;
  r.v_star = own.v_star;
  r.eps_star = own.eps_star;
  r.budget_constrained = own.budget_constrained;
  if (own.v_star > 0.0) r.relative_regret = own.eps_star / own.v_star;
  if (own.curves.played_eq_sum > 0.0)
    r.per_impression_regret = own.eps_star * static_cast<double>(own.curves.days) / own.curves.played_eq_sum;
  r.eps_reco = alt.regret_at(own.v_star);
  const double diff = r.eps_star - r.eps_reco;
  r.classification = diff > delta ? Classification::worse : (diff < -delta ? Classification::better : Classification::equal);
  return r;
}

// ---------------------------------------------------------------------------
// Adherence

struct AdherencePoint {
  int month = 0;  // calendar months since the agent's first active day
  double fraction = 0.0;
  std::size_t agents = 0;
};

inline int months_between(Date from, Date to) {
  const std::chrono::year_month_day a{from}, b{to};
  return (static_cast<int>(b.year()) - static_cast<int>(a.year())) * 12 +
         (static_cast<int>(static_cast<unsigned>(b.month())) - static_cast<int>(static_cast<unsigned>(a.month())));
}

/// Fraction of an agent's bid changes that land on that day's
/// recommendation; empty when the bid never changes.
inline std::optional<double> adherence_fraction(const BidTrace& trace, double match_tol = 1e-9) {
  std::size_t followed = 0, changes = 0;
  std::optional<double> prev;
  for (const auto& d : trace.days) {
    if (!d.active) continue;
    if (prev && d.bid != *prev) {
      ++changes;
      if (d.recommended_bid && std::abs(d.bid - *d.recommended_bid) <= match_tol) ++followed;
    }
    prev = d.bid;
  }
  if (changes == 0) return std::nullopt;
  return static_cast<double>(followed) / static_cast<double>(changes);
}

/// Per agent, the fraction of bid changes that land on that day's
/// recommendation, by tenure month; averaged over agents with at least one
/// change in the month.
inline std::vector<AdherencePoint> adherence_curve(std::span<const BidTrace> traces, double match_tol = 1e-9) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& tr : traces) {
    std::optional<Date> first;
    std::optional<double> prev;
    std::map<int, std::pair<std::size_t, std::size_t>> counts;  // month -> (followed, changes)
    for (const auto& d : tr.days) {
      if (!d.active) continue;
      if (!first) first = d.date;
      if (prev && d.bid != *prev) {
        auto& c = counts[months_between(*first, d.date)];
        ++c.second;
        if (d.recommended_bid && std::abs(d.bid - *d.recommended_bid) <= match_tol) ++c.first;
      }
      prev = d.bid;
    }
    for (const auto& [m, c] : counts) {
      auto& a = acc[m];
      a.first += static_cast<double>(c.first) / static_cast<double>(c.second);
      ++a.second;
    }
  }
  std::vector<AdherencePoint> out;
  for (const auto& [m, a] : acc) out.push_back({m, a.first / static_cast<double>(a.second), a.second});
  return out;
}

}  // namespace gsp
