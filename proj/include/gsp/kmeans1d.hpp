#pragma once

// Exact 1-D k-means by dynamic programming, and the bid-change-frequency
// clustering of agents.

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gsp/market.hpp"

namespace gsp {

struct KMeansResult {
  std::vector<std::size_t> labels;  // 0-based, clusters ordered by center
  std::vector<double> centers;
  double wcss = 0.0;
  bool degenerate = false;  // fewer than k distinct values, fewer clusters returned
};

/// Optimal partition of the values into at most k contiguous groups
/// minimizing the within-cluster sum of squares. Equal values always share a
/// cluster; among equal-cost partitions the one with the earliest last split
/// wins.
inline KMeansResult kmeans_1d(std::span<const double> values, std::size_t k) {
  if (k == 0) throw InvalidInput("k must be positive");
  KMeansResult r;
  const std::size_t n = values.size();
  if (n == 0) {
    r.degenerate = true;
    return r;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = values[order[i]];

  std::size_t distinct = 1;
  for (std::size_t i = 1; i < n; ++i) distinct += x[i] != x[i - 1];
  const std::size_t groups = std::min(k, distinct);
  r.degenerate = groups < k;

  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    s1[i + 1] = s1[i] + x[i];
    s2[i + 1] = s2[i] + x[i] * x[i];
  }
  // Cost of x[l..i) as one cluster.
  auto cost = [&](std::size_t l, std::size_t i) {
    const double m = static_cast<double>(i - l);
    const double s = s1[i] - s1[l];
    return std::max(0.0, (s2[i] - s2[l]) - s * s / m);
  };
  auto boundary = [&](std::size_t l) { return l == 0 || x[l] != x[l - 1]; };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(groups + 1, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::size_t>> split(groups + 1, std::vector<std::size_t>(n + 1, 0));
  best[0][0] = 0.0;
  for (std::size_t j = 1; j <= groups; ++j)
    for (std::size_t i = 1; i <= n; ++i) {
      if (i < n && !boundary(i)) continue;
      for (std::size_t l = j - 1; l < i; ++l) {
        if (!boundary(l) || best[j - 1][l] == inf) continue;
        const double c = best[j - 1][l] + cost(l, i);
        if (c < best[j][i]) {
          best[j][i] = c;
          split[j][i] = l;
        }
      }
    }

  r.wcss = best[groups][n];
  std::vector<std::size_t> sorted_label(n);
  r.centers.assign(groups, 0.0);
  for (std::size_t j = groups, i = n; j > 0; --j) {
    const std::size_t l = split[j][i];
    for (std::size_t p = l; p < i; ++p) sorted_label[p] = j - 1;
    r.centers[j - 1] = (s1[i] - s1[l]) / static_cast<double>(i - l);
    i = l;
  }
  r.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.labels[order[i]] = sorted_label[i];
  return r;
}

inline constexpr std::size_t kMinClusterDays = 7;

struct AgentCluster {
  std::string agent_id;
  double frequency = 0.0;
  std::size_t active_days = 0;
  int cluster = 0;  // 1 = lowest change frequency; 0 = filtered out
};

struct FrequencyClusters {
  std::vector<AgentCluster> agents;
  std::size_t clusters = 0;
  bool degenerate = false;
};

/// Agents active fewer than 7 days or never changing their bid are filtered
/// out (cluster 0); the rest are clustered on bid-change frequency.
inline FrequencyClusters cluster_by_frequency(std::span<const BidTrace> traces, std::size_t k = 3) {
  FrequencyClusters out;
  std::vector<double> freq;
  std::vector<std::size_t> kept;
  for (const auto& t : traces) {
    AgentCluster a{t.agent_id, t.bid_change_frequency(), t.active_days(), 0};
    if (a.active_days >= kMinClusterDays && t.bid_changes() > 0) {
      kept.push_back(out.agents.size());
      freq.push_back(a.frequency);
    }
    out.agents.push_back(a);
  }
  const KMeansResult km = kmeans_1d(freq, k);
  out.clusters = km.centers.size();
  out.degenerate = km.degenerate;
  for (std::size_t i = 0; i < kept.size(); ++i) out.agents[kept[i]].cluster = static_cast<int>(km.labels[i]) + 1;
  return out;
}

}  // namespace gsp
