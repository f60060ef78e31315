#pragma once

// Domain types shared by every stage: position weights, bidders, market
// snapshots, budget conversion and per-agent bid traces.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace gsp {

class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::size_t kRanks = 4;
inline constexpr double kSlotsPerPage = 3.0;

/// Impression share per rank. Rank j is shown on a page with probability
/// 3 * gamma[j]; ranks beyond the fourth are never shown.
class PositionWeights {
public:
  PositionWeights() : gamma_{0.33, 0.28, 0.22, 0.17} {}

  explicit PositionWeights(const std::array<double, kRanks>& gamma) : gamma_(gamma) {
    double sum = 0.0;
    for (std::size_t j = 0; j < kRanks; ++j) {
      if (!(gamma_[j] >= 0.0 && gamma_[j] <= 1.0))
        throw InvalidInput("position weight outside [0,1]");
      if (j > 0 && gamma_[j] > gamma_[j - 1])
        throw InvalidInput("position weights must be nonincreasing");
      sum += gamma_[j];
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InvalidInput("position weights must sum to 1");
  }

  double operator[](std::size_t rank) const { return rank < kRanks ? gamma_[rank] : 0.0; }
  const std::array<double, kRanks>& values() const { return gamma_; }
  double shown_probability(std::size_t rank) const { return kSlotsPerPage * (*this)[rank]; }

  friend bool operator==(const PositionWeights&, const PositionWeights&) = default;

private:
  std::array<double, kRanks> gamma_;
};

struct Bidder {
  std::string id;
  double bid = 0.0;               // money per mille
  double budget_per_mille = 0.0;  // B_i; +inf pins the bidder at pi = 1
  std::int64_t priority = 0;      // smaller wins ties
};

struct MarketSnapshot {
  std::vector<Bidder> bidders;
  double reserve = 0.0;
  PositionWeights weights;
};

/// Per-thousand-opportunity budget from a period budget and page views (in
/// thousands). Each page carries three opportunities.
inline double convert_budget(double monthly_budget, double page_views_thousands) {
  if (!(page_views_thousands > 0.0)) throw InvalidInput("page views must be positive");
  if (!(monthly_budget >= 0.0)) throw InvalidInput("budget must be nonnegative");
  return kSlotsPerPage * monthly_budget / page_views_thousands;
}

/// Inverse of convert_budget applied to a realized per-mille spend.
inline double spend_from_per_mille(double per_mille, double page_views_thousands) {
  return per_mille * page_views_thousands / kSlotsPerPage;
}

/// Canonical rank order: bid descending, then priority, then id.
inline bool ranks_before(const Bidder& a, const Bidder& b) {
  if (a.bid != b.bid) return a.bid > b.bid;
  if (a.priority != b.priority) return a.priority < b.priority;
  return a.id < b.id;
}

inline void validate(const MarketSnapshot& market) {
  if (!(market.reserve >= 0.0) || !std::isfinite(market.reserve))
    throw InvalidInput("reserve must be finite and nonnegative");
  std::unordered_set<std::int64_t> priorities;
  std::unordered_set<std::string> ids;
  for (const auto& b : market.bidders) {
    if (!(b.bid >= 0.0) || !std::isfinite(b.bid))
      throw InvalidInput("bid of '" + b.id + "' must be finite and nonnegative");
    if (!(b.budget_per_mille >= 0.0))
      throw InvalidInput("budget of '" + b.id + "' must be nonnegative");
    if (!priorities.insert(b.priority).second)
      throw InvalidInput("duplicate priority " + std::to_string(b.priority));
    if (!ids.insert(b.id).second) throw InvalidInput("duplicate bidder id '" + b.id + "'");
  }
}

/// Active bidders (bid >= reserve) in canonical order.
inline std::vector<Bidder> canonical_sort(const MarketSnapshot& market) {
  validate(market);
  std::vector<Bidder> active;
  active.reserve(market.bidders.size());
  for (const auto& b : market.bidders)
    if (b.bid >= market.reserve) active.push_back(b);
  std::sort(active.begin(), active.end(), ranks_before);
  return active;
}

/// Market restricted to its active bidders, already in canonical order.
inline MarketSnapshot canonical_market(const MarketSnapshot& market) {
  return MarketSnapshot{canonical_sort(market), market.reserve, market.weights};
}

inline bool is_canonical(std::span<const Bidder> bidders, double reserve) {
  for (std::size_t i = 0; i < bidders.size(); ++i) {
    if (bidders[i].bid < reserve) return false;
    if (i > 0 && !ranks_before(bidders[i - 1], bidders[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Calendar dates

using Date = std::chrono::sys_days;

inline Date parse_date(std::string_view text) {
  auto digits = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t k = pos; k < pos + len; ++k) {
      if (text[k] < '0' || text[k] > '9') throw InvalidInput("bad date '" + std::string(text) + "'");
      v = v * 10 + (text[k] - '0');
    }
    return v;
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw InvalidInput("bad date '" + std::string(text) + "', expected YYYY-MM-DD");
  const std::chrono::year_month_day ymd{std::chrono::year{digits(0, 4)},
                                        std::chrono::month{static_cast<unsigned>(digits(5, 2))},
                                        std::chrono::day{static_cast<unsigned>(digits(8, 2))}};
  if (!ymd.ok()) throw InvalidInput("invalid calendar date '" + std::string(text) + "'");
  return Date{ymd};
}

inline std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// 0 = Monday ... 6 = Sunday.
inline unsigned weekday_index(Date d) {
  return std::chrono::weekday{d}.iso_encoding() - 1;
}

inline Date month_start(Date d) {
  const std::chrono::year_month_day ymd{d};
  return Date{ymd.year() / ymd.month() / std::chrono::day{1}};
}

inline Date month_end(Date d) {
  const std::chrono::year_month_day ymd{d};
  return Date{std::chrono::year_month_day_last{ymd.year(), std::chrono::month_day_last{ymd.month()}}};
}

// ---------------------------------------------------------------------------
// Bid traces

struct TraceDay {
  Date date;
  double bid = 0.0;
  double available_daily_budget = 0.0;
  std::optional<double> recommended_bid;
  bool active = true;
};

struct BidTrace {
  std::string agent_id;
  std::vector<TraceDay> days;

  void check_dates() const {
    for (std::size_t t = 1; t < days.size(); ++t)
      if (days[t].date <= days[t - 1].date)
        throw InvalidInput("trace of '" + agent_id + "' has non-increasing dates");
  }

  std::size_t active_days() const {
    return static_cast<std::size_t>(
        std::count_if(days.begin(), days.end(), [](const TraceDay& d) { return d.active; }));
  }

  /// Number of active days whose bid differs from the previous active day.
  std::size_t bid_changes() const {
    std::size_t changes = 0;
    std::optional<double> prev;
    for (const auto& d : days) {
      if (!d.active) continue;
      if (prev && d.bid != *prev) ++changes;
      prev = d.bid;
    }
    return changes;
  }

  double bid_change_frequency() const {
    const auto n = active_days();
    return n == 0 ? 0.0 : static_cast<double>(bid_changes()) / static_cast<double>(n);
  }
};

}  // namespace gsp
