#pragma once

// Expected auction outcomes under independent budget-smoothing filters.
//
// For bidder i (canonical order, conditional on i being eligible):
//   eQ_i   = sum_r gamma[r] * P(exactly r higher-ranked bidders eligible)
//   CPM_i  = E[price per impression] = next eligible bid below i, else reserve
//   eCPM_i = eQ_i * CPM_i
// Rank and price are independent because they depend on disjoint sets of
// opponents, which is what makes the linear-time recurrences possible.

#include <bit>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gsp/market.hpp"

namespace gsp {

struct BidderOutcome {
  double eq = 0.0;    // conditional impression share
  double ecpm = 0.0;  // conditional expected spend per mille
  double pi = 1.0;

  double unconditional_share() const { return pi * eq; }
  double unconditional_spend() const { return pi * ecpm; }
};

using OutcomeTable = std::vector<BidderOutcome>;

class OracleCapExceeded : public InvalidInput {
public:
  using InvalidInput::InvalidInput;
};

enum class Engine { dp, oracle };

inline constexpr std::size_t kDefaultOracleCap = 20;

namespace detail {

inline void check_filter(std::span<const double> pi, std::size_t n) {
  if (pi.size() != n) throw InvalidInput("filter vector length does not match active bidders");
  for (double p : pi)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("filter probability outside [0,1]");
}

inline void check_sorted(const MarketSnapshot& market) {
  if (!is_canonical(market.bidders, market.reserve))
    throw InvalidInput("bidders must be active and in canonical order");
}

// Rolling CPM updates divide by (1 - pi); each one multiplies the inherited
// rounding error by that factor. Past this bound the price is recomputed.
inline constexpr double kMaxAmplification = 1e4;
// The direct price walk stops once the chance that every remaining bidder is
// filtered drops below this; the dropped tail is bounded by it times a bid.
inline constexpr double kTailMass = 1e-18;
inline constexpr double kUnitGuard = 1e-12;

inline double direct_cpm(std::span<const double> bids, std::span<const double> pi,
                         std::size_t i, double reserve) {
  double cpm = 0.0;
  double all_filtered = 1.0;  // q: every bidder strictly between i and j filtered
  for (std::size_t j = i + 1; j < bids.size(); ++j) {
    cpm += bids[j] * pi[j] * all_filtered;
    all_filtered *= 1.0 - pi[j];
    if (all_filtered <= kTailMass) return cpm;
  }
  return cpm + reserve * all_filtered;
}

}  // namespace detail

/// Linear-time eQ / eCPM for bids sorted descending (all >= reserve).
/// Writes one entry per bidder into eq and ecpm.
inline void expected_outcomes(std::span<const double> bids, std::span<const double> pi,
                              const PositionWeights& weights, double reserve,
                              std::span<double> eq, std::span<double> ecpm) {
  const std::size_t n = bids.size();
  std::array<double, kRanks> above{1.0, 0.0, 0.0, 0.0};  // p_{i,r}
  double cpm = 0.0;
  double amplification = 1.0;

  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const double p = pi[i - 1];
      for (std::size_t r = kRanks - 1; r > 0; --r) above[r] = (1.0 - p) * above[r] + p * above[r - 1];
      above[0] *= 1.0 - p;
    }
    double share = 0.0;
    for (std::size_t r = 0; r < kRanks; ++r) share += weights[r] * above[r];

    const double keep = 1.0 - pi[i];
    bool direct = i == 0 || pi[i] >= 1.0 - detail::kUnitGuard || keep < 1e-9 ||
                  amplification / keep > detail::kMaxAmplification;
    if (!direct) {
      const double rolled = (cpm - pi[i] * bids[i]) / keep;
      if (rolled < -1e-9) {
        direct = true;
      } else {
        cpm = std::max(rolled, 0.0);
        amplification /= keep;
      }
    }
    if (direct) {
      cpm = detail::direct_cpm(bids, pi, i, reserve);
      amplification = 1.0;
    }
    eq[i] = share;
    ecpm[i] = share * cpm;
  }
}

/// Outcomes for a canonically sorted active market.
inline OutcomeTable outcomes_dp(const MarketSnapshot& market, std::span<const double> pi) {
  detail::check_sorted(market);
  const std::size_t n = market.bidders.size();
  detail::check_filter(pi, n);
  std::vector<double> bids(n), eq(n), ecpm(n);
  for (std::size_t i = 0; i < n; ++i) bids[i] = market.bidders[i].bid;
  expected_outcomes(bids, pi, market.weights, market.reserve, eq, ecpm);
  OutcomeTable out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {eq[i], ecpm[i], pi[i]};
  return out;
}

/// Exact expectation by enumerating every eligibility configuration of the
/// opponents. Exponential; refuses markets above `cap` active bidders.
inline OutcomeTable outcomes_oracle(const MarketSnapshot& market, std::span<const double> pi,
                                    std::size_t cap = kDefaultOracleCap) {
  detail::check_sorted(market);
  const std::size_t n = market.bidders.size();
  detail::check_filter(pi, n);
  if (n > cap)
    throw OracleCapExceeded("enumeration engine is capped at " + std::to_string(cap) +
                            " active bidders, market has " + std::to_string(n));
  OutcomeTable out(n);
  if (n == 0) return out;
  std::vector<std::size_t> others;
  others.reserve(n - 1);
  const std::uint64_t configs = std::uint64_t{1} << (n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    double eq = 0.0, ecpm = 0.0;
    for (std::uint64_t mask = 0; mask < configs; ++mask) {
      double weight = 1.0;
      std::size_t rank = 0;
      double price = market.reserve;
      bool priced = false;
      for (std::size_t k = 0; k < others.size(); ++k) {
        const std::size_t j = others[k];
        const bool eligible = (mask >> k) & 1U;
        weight *= eligible ? pi[j] : 1.0 - pi[j];
        if (!eligible) continue;
        if (j < i) {
          ++rank;
        } else if (!priced) {
          price = market.bidders[j].bid;
          priced = true;
        }
      }
      const double reward = market.weights[rank];
      eq += weight * reward;
      ecpm += weight * reward * price;
    }
    out[i] = {eq, ecpm, pi[i]};
  }
  return out;
}

inline OutcomeTable evaluate_outcomes(Engine engine, const MarketSnapshot& market,
                                      std::span<const double> pi,
                                      std::size_t oracle_cap = kDefaultOracleCap) {
  return engine == Engine::dp ? outcomes_dp(market, pi) : outcomes_oracle(market, pi, oracle_cap);
}

// ---------------------------------------------------------------------------
// Probing a single bid against fixed opponents

struct ProbeOutcome {
  double eq = 0.0;
  double ecpm = 0.0;
};

/// Outcome of a bidder placing `bid` against canonically sorted opponents
/// whose filters are held fixed. Below the reserve the bidder is inactive.
inline ProbeOutcome probe_outcome(const MarketSnapshot& opponents, std::span<const double> opponent_pi,
                                  double bid, std::int64_t priority = INT64_MAX,
                                  const std::string& id = {}) {
  if (bid < opponents.reserve) return {};
  const std::size_t n = opponents.bidders.size();
  const Bidder probe{id, bid, 0.0, priority};
  std::size_t pos = 0;
  while (pos < n && ranks_before(opponents.bidders[pos], probe)) ++pos;
  std::vector<double> bids(n + 1), pi(n + 1), eq(n + 1), ecpm(n + 1);
  for (std::size_t k = 0, src = 0; k <= n; ++k) {
    if (k == pos) {
      bids[k] = bid;
      pi[k] = 1.0;
    } else {
      bids[k] = opponents.bidders[src].bid;
      pi[k] = opponent_pi[src];
      ++src;
    }
  }
  expected_outcomes(bids, pi, opponents.weights, opponents.reserve, eq, ecpm);
  return {eq[pos], ecpm[pos]};
}

// ---------------------------------------------------------------------------
// Monte-Carlo sampler for one page view

/// Realization of one page view: eligibility draws, display and prices, all in
/// canonical order. Each page carries three opportunities.
struct PageDraw {
  std::vector<char> eligible;
  std::vector<char> shown;
  std::vector<double> price;  // per mille, charged only when shown

  double opportunity_share(std::size_t i) const { return shown[i] ? 1.0 / kSlotsPerPage : 0.0; }
  double opportunity_spend(std::size_t i) const { return shown[i] ? price[i] / kSlotsPerPage : 0.0; }
};

/// Draws eligibility with probability pi, ranks survivors, shows three of the
/// top four (rank j shown with probability 3 * gamma[j]) and charges the next
/// surviving bid or the reserve.
template <class Rng>
PageDraw sample_impression(const MarketSnapshot& market, std::span<const double> pi, Rng& rng) {
  const std::size_t n = market.bidders.size();
  PageDraw draw{std::vector<char>(n, 0), std::vector<char>(n, 0), std::vector<double>(n, 0.0)};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < n; ++i) {
    draw.eligible[i] = unit(rng) < pi[i];
    if (draw.eligible[i]) survivors.push_back(i);
  }
  for (std::size_t s = 0; s < survivors.size(); ++s)
    draw.price[survivors[s]] =
        s + 1 < survivors.size() ? market.bidders[survivors[s + 1]].bid : market.reserve;

  if (survivors.size() >= kRanks) {
    // Exactly three of the top four shown: drop rank j with probability 1 - 3*gamma[j].
    double u = unit(rng), acc = 0.0;
    std::size_t dropped = kRanks - 1;
    for (std::size_t r = 0; r < kRanks; ++r) {
      acc += 1.0 - market.weights.shown_probability(r);
      if (u < acc) {
        dropped = r;
        break;
      }
    }
    for (std::size_t r = 0; r < kRanks; ++r) draw.shown[survivors[r]] = r != dropped;
  } else {
    for (std::size_t r = 0; r < survivors.size(); ++r)
      draw.shown[survivors[r]] = unit(rng) < market.weights.shown_probability(r);
  }
  return draw;
}

inline PageDraw sample_impression(const MarketSnapshot& market, std::span<const double> pi,
                                  std::uint64_t seed) {
  detail::check_sorted(market);
  detail::check_filter(pi, market.bidders.size());
  for (std::size_t r = 0; r < kRanks; ++r)
    if (market.weights.shown_probability(r) > 1.0)
      throw InvalidInput("position weight above 1/3 cannot be a display probability");
  std::mt19937_64 rng(seed);
  return sample_impression(market, pi, rng);
}

}  // namespace gsp
