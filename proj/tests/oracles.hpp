#pragma once

// Reference implementations kept deliberately naive and independent of the library code paths.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

namespace oracle {

using Adj = std::vector<std::vector<int>>;  // adj[u][v] = 1 for u -> v

inline bool has_cycle(const Adj& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> state(n, 0);
  auto dfs = [&](auto&& self, int u) -> bool {
    state[u] = 1;
    for (int v = 0; v < n; ++v) {
      if (!adj[u][v]) continue;
      if (state[v] == 1) return true;
      if (state[v] == 0 && self(self, v)) return true;
    }
    state[u] = 2;
    return false;
  };
  for (int u = 0; u < n; ++u)
    if (state[u] == 0 && dfs(dfs, u)) return true;
  return false;
}

/// Counts DAGs by testing every off-diagonal adjacency bit pattern.
inline std::uint64_t brute_force_dag_count(int n) {
  std::vector<std::pair<int, int>> slots;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (u != v) slots.emplace_back(u, v);
  std::uint64_t count = 0;
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << slots.size()); ++bits) {
    Adj adj(n, std::vector<int>(n, 0));
    for (std::size_t s = 0; s < slots.size(); ++s)
      if (bits >> s & 1) adj[slots[s].first][slots[s].second] = 1;
    if (!has_cycle(adj)) ++count;
  }
  return count;
}

inline double binom(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// a(n) = sum_k (-1)^(k+1) C(n,k) 2^(k(n-k)) a(n-k).
inline double robinson(int n) {
  std::vector<double> a(n + 1, 0.0);
  a[0] = 1;
  for (int m = 1; m <= n; ++m)
    for (int k = 1; k <= m; ++k)
      a[m] += ((k % 2) ? 1.0 : -1.0) * binom(m, k) * std::pow(2.0, k * (m - k)) * a[m - k];
  return a[n];
}

/// Dirichlet-multinomial log evidence with symmetric alpha, from counts grouped by configuration.
inline double dirichlet_evidence(const std::vector<int>& child, const std::vector<long>& config, int card, double alpha) {
  std::map<long, std::vector<int>> counts;
  for (std::size_t i = 0; i < child.size(); ++i) {
    auto& c = counts[config[i]];
    if (c.empty()) c.assign(card, 0);
    ++c[child[i]];
  }
  double s = 0.0;
  for (const auto& [cfg, c] : counts) {
    int total = 0;
    for (int k = 0; k < card; ++k) {
      total += c[k];
      s += std::lgamma(alpha + c[k]) - std::lgamma(alpha);
    }
    s += std::lgamma(card * alpha) - std::lgamma(card * alpha + total);
  }
  return s;
}

/// Per-row next-step log-loss, recounting the whole prefix at every step.
inline std::vector<double> naive_prequential_losses(const std::vector<int>& child, const std::vector<long>& config,
                                                    int card, double alpha) {
  std::vector<double> out(child.size());
  for (std::size_t i = 0; i < child.size(); ++i) {
    double match = 0, total = 0;
    for (std::size_t j = 0; j < i; ++j)
      if (config[j] == config[i]) {
        ++total;
        if (child[j] == child[i]) ++match;
      }
    out[i] = -std::log((match + alpha) / (total + card * alpha));
  }
  return out;
}

inline std::set<std::pair<int, int>> skeleton(const Adj& adj) {
  std::set<std::pair<int, int>> s;
  const int n = static_cast<int>(adj.size());
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (adj[u][v]) s.emplace(std::min(u, v), std::max(u, v));
  return s;
}

/// (a, c, b) with a < b, a -> c <- b, a and b non-adjacent.
inline std::set<std::tuple<int, int, int>> v_structures(const Adj& adj) {
  std::set<std::tuple<int, int, int>> s;
  const int n = static_cast<int>(adj.size());
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (adj[a][c] && adj[b][c] && !adj[a][b] && !adj[b][a]) s.emplace(a, c, b);
  return s;
}

/// Verma-Pearl: same skeleton and same v-structures.
inline bool markov_equivalent(const Adj& a, const Adj& b) {
  return skeleton(a) == skeleton(b) && v_structures(a) == v_structures(b);
}

inline int hamming(const Adj& a, const Adj& b) {
  const int n = static_cast<int>(a.size());
  int d = 0;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (a[u][v] != b[u][v] || a[v][u] != b[v][u]) ++d;
  return d;
}

}  // namespace oracle
