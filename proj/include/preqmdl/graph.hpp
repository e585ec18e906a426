#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "preqmdl/errors.hpp"
#include "preqmdl/rng.hpp"

namespace preqmdl {

/// Bit d set <=> node d is a member.
using NodeMask = std::uint32_t;
inline constexpr int kMaxNodes = 32;
inline constexpr int kMaxEnumerationNodes = 6;

using Edge = std::pair<int, int>;  // (parent, child)

inline NodeMask node_bit(int d) { return NodeMask{1} << d; }

/// True iff the graph given by per-child parent masks has no directed cycle.
inline bool is_acyclic(std::span<const NodeMask> parents) {
  const int n = static_cast<int>(parents.size());
  const NodeMask all = n == 32 ? ~NodeMask{0} : node_bit(n) - 1;
  NodeMask placed = 0;
  while (placed != all) {
    bool progress = false;
    for (int d = 0; d < n; ++d) {
      if ((placed & node_bit(d)) == 0 && (parents[d] & ~placed) == 0) {
        placed |= node_bit(d);
        progress = true;
      }
    }
    if (!progress) return false;
  }
  return true;
}

/// Directed acyclic graph over `num_nodes` indexed nodes, stored as one parent mask per node.
class Dag {
 public:
  Dag() = default;
  explicit Dag(int num_nodes) : parents_(check_size(num_nodes), 0) {}

  static Dag from_parent_masks(std::vector<NodeMask> parents) {
    Dag g;
    check_size(static_cast<int>(parents.size()));
    const NodeMask all = parents.size() == 32 ? ~NodeMask{0} : node_bit(static_cast<int>(parents.size())) - 1;
    for (std::size_t d = 0; d < parents.size(); ++d) {
      if (parents[d] & node_bit(static_cast<int>(d))) throw InvariantError("self-loop on node " + std::to_string(d));
      if (parents[d] & ~all) throw InvariantError("parent index out of range for node " + std::to_string(d));
    }
    if (!is_acyclic(parents)) throw InvariantError("graph contains a directed cycle");
    g.parents_ = std::move(parents);
    return g;
  }

  static Dag from_edges(int num_nodes, std::span<const Edge> edges) {
    std::vector<NodeMask> parents(check_size(num_nodes), 0);
    for (auto [u, v] : edges) {
      if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
        throw InvariantError("edge (" + std::to_string(u) + "," + std::to_string(v) + ") out of range");
      parents[v] |= node_bit(u);
    }
    return from_parent_masks(std::move(parents));
  }

  int num_nodes() const { return static_cast<int>(parents_.size()); }
  NodeMask parents(int child) const { return parents_[child]; }
  const std::vector<NodeMask>& parent_masks() const { return parents_; }

  bool has_edge(int u, int v) const { return (parents_[v] & node_bit(u)) != 0; }
  bool adjacent(int u, int v) const { return has_edge(u, v) || has_edge(v, u); }

  std::size_t num_edges() const {
    std::size_t e = 0;
    for (NodeMask m : parents_) e += static_cast<std::size_t>(std::popcount(m));
    return e;
  }

  /// Edges sorted by (parent, child).
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (int u = 0; u < num_nodes(); ++u)
      for (int v = 0; v < num_nodes(); ++v)
        if (has_edge(u, v)) out.emplace_back(u, v);
    return out;
  }

  bool operator==(const Dag&) const = default;

  /// Orders by edge list, used as the deterministic tie-break everywhere.
  std::strong_ordering operator<=>(const Dag& other) const {
    if (auto c = num_nodes() <=> other.num_nodes(); c != 0) return c;
    auto a = edges();
    auto b = other.edges();
    return std::lexicographical_compare_three_way(a.begin(), a.end(), b.begin(), b.end());
  }

 private:
  static std::size_t check_size(int num_nodes) {
    if (num_nodes < 1 || num_nodes > kMaxNodes)
      throw CapacityError("number of nodes must be in [1, " + std::to_string(kMaxNodes) + "], got " +
                          std::to_string(num_nodes));
    return static_cast<std::size_t>(num_nodes);
  }

  std::vector<NodeMask> parents_;
};

/// Kahn's algorithm; ties broken by ascending node index.
inline std::vector<int> topological_order(const Dag& g) {
  const int n = g.num_nodes();
  std::vector<int> order;
  order.reserve(n);
  NodeMask placed = 0;
  while (static_cast<int>(order.size()) < n) {
    int next = -1;
    for (int d = 0; d < n; ++d) {
      if ((placed & node_bit(d)) == 0 && (g.parents(d) & ~placed) == 0) {
        next = d;
        break;
      }
    }
    if (next < 0) throw InvariantError("cycle detected during topological sort");
    placed |= node_bit(next);
    order.push_back(next);
  }
  return order;
}

/// Nodes reachable from `source` along directed edges, excluding `source`.
inline NodeMask descendants(const Dag& g, int source) {
  NodeMask reached = 0;
  NodeMask frontier = node_bit(source);
  while (frontier) {
    NodeMask next = 0;
    for (int v = 0; v < g.num_nodes(); ++v)
      if ((reached & node_bit(v)) == 0 && (g.parents(v) & frontier)) next |= node_bit(v);
    reached |= next;
    frontier = next;
  }
  return reached;
}

// ---------------------------------------------------------------------------
// Parent sets
// ---------------------------------------------------------------------------

/// (child, parents) pair; the unit every decomposable score is cached by.
struct ParentSet {
  int child = 0;
  NodeMask parents = 0;

  auto operator<=>(const ParentSet&) const = default;
};

/// Removes bit `skip` from `mask`, shifting higher bits down by one.
inline std::uint32_t compress_mask(NodeMask mask, int skip) {
  const NodeMask low = mask & (node_bit(skip) - 1);
  return low | ((mask >> (skip + 1)) << skip);
}

/// Inverse of compress_mask: inserts a zero at bit `skip`.
inline NodeMask expand_mask(std::uint32_t compact, int skip) {
  const NodeMask low = compact & (node_bit(skip) - 1);
  return low | ((compact >> skip) << (skip + 1));
}

inline std::size_t num_parent_sets(int num_nodes) {
  return static_cast<std::size_t>(num_nodes) << (num_nodes - 1);
}

/// Dense index of a parent set in [0, D * 2^(D-1)), matching enumerate_parent_sets order.
inline std::size_t parent_set_index(int num_nodes, const ParentSet& ps) {
  return (static_cast<std::size_t>(ps.child) << (num_nodes - 1)) + compress_mask(ps.parents, ps.child);
}

inline ParentSet parent_set_at(int num_nodes, std::size_t index) {
  const int child = static_cast<int>(index >> (num_nodes - 1));
  const auto compact = static_cast<std::uint32_t>(index & ((std::size_t{1} << (num_nodes - 1)) - 1));
  return {child, expand_mask(compact, child)};
}

/// Every parent set for `num_nodes` nodes: child-major, then ascending mask.
inline std::vector<ParentSet> enumerate_parent_sets(int num_nodes) {
  if (num_nodes < 1 || num_nodes > 20) throw CapacityError("enumerate_parent_sets: node count out of range");
  std::vector<ParentSet> out;
  out.reserve(num_parent_sets(num_nodes));
  for (std::size_t i = 0; i < num_parent_sets(num_nodes); ++i) out.push_back(parent_set_at(num_nodes, i));
  return out;
}

/// Parent sets with at most `max_parents` parents, in enumerate_parent_sets order.
inline std::vector<ParentSet> enumerate_parent_sets(int num_nodes, int max_parents) {
  auto all = enumerate_parent_sets(num_nodes);
  std::erase_if(all, [&](const ParentSet& ps) { return std::popcount(ps.parents) > max_parents; });
  return all;
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// Restartable stream over every labeled DAG on D nodes (1 <= D <= 6).
///
/// D <= 4 walks the off-diagonal adjacency bitmask in increasing order (bit u*D+v is the edge u->v)
/// and filters cyclic graphs. D >= 5 walks per-node parent-set choices (node 0 most significant)
/// depth first, pruning partial assignments that already contain a cycle.
class DagEnumerator {
 public:
  explicit DagEnumerator(int num_nodes) : d_(num_nodes) {
    if (num_nodes < 1 || num_nodes > kMaxEnumerationNodes)
      throw CapacityError("enumerate_dags supports 1 <= D <= " + std::to_string(kMaxEnumerationNodes) +
                          ", got " + std::to_string(num_nodes));
    reset();
  }

  void reset() {
    mask_ = 0;
    done_ = false;
    choice_.assign(d_, 0);
    parents_.assign(d_, 0);
    depth_ = 0;
    started_ = false;
  }

  std::optional<Dag> next() { return d_ <= 4 ? next_bitmask() : next_dfs(); }

 private:
  std::optional<Dag> next_bitmask() {
    const int off = d_ * (d_ - 1);
    const std::uint64_t limit = std::uint64_t{1} << off;
    while (!done_ && mask_ < limit) {
      std::vector<NodeMask> parents(d_, 0);
      int bit = 0;
      for (int u = 0; u < d_; ++u)
        for (int v = 0; v < d_; ++v) {
          if (u == v) continue;
          if (mask_ >> bit & 1) parents[v] |= node_bit(u);
          ++bit;
        }
      ++mask_;
      if (is_acyclic(parents)) return Dag::from_parent_masks(std::move(parents));
    }
    done_ = true;
    return std::nullopt;
  }

  // choice_[k] is the next compact parent mask to try at depth k.
  std::optional<Dag> next_dfs() {
    const std::uint32_t per_node = std::uint32_t{1} << (d_ - 1);
    if (done_) return std::nullopt;
    if (started_) {
      // resume after the leaf we last returned
      depth_ = d_ - 1;
    }
    started_ = true;
    while (depth_ >= 0) {
      if (choice_[depth_] >= per_node) {
        choice_[depth_] = 0;
        parents_[depth_] = 0;
        --depth_;
        continue;
      }
      parents_[depth_] = expand_mask(choice_[depth_], depth_);
      ++choice_[depth_];
      if (!is_acyclic(parents_)) {
        parents_[depth_] = 0;
        continue;
      }
      if (depth_ == d_ - 1) return Dag::from_parent_masks(parents_);
      ++depth_;
    }
    done_ = true;
    return std::nullopt;
  }

  int d_;
  std::uint64_t mask_ = 0;
  bool done_ = false;
  bool started_ = false;
  int depth_ = 0;
  std::vector<std::uint32_t> choice_;
  std::vector<NodeMask> parents_;
};

/// Calls `fn(const Dag&)` for every DAG on `num_nodes` nodes, in enumeration order.
template <typename Fn>
void for_each_dag(int num_nodes, Fn&& fn) {
  DagEnumerator it(num_nodes);
  while (auto g = it.next()) fn(*g);
}

/// Materialized enumeration; D = 6 yields 3.78M graphs, prefer for_each_dag there.
inline std::vector<Dag> enumerate_dags(int num_nodes) {
  std::vector<Dag> out;
  for_each_dag(num_nodes, [&](const Dag& g) { out.push_back(g); });
  return out;
}

/// Number of labeled DAGs on n nodes via Robinson's recurrence.
inline std::uint64_t count_dags(int n) {
  std::vector<std::uint64_t> a(n + 1, 0);
  a[0] = 1;
  auto binom = [](int nn, int k) {
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(nn - k + i) / static_cast<std::uint64_t>(i);
    return r;
  };
  for (int m = 1; m <= n; ++m) {
    std::int64_t sum = 0;
    for (int k = 1; k <= m; ++k) {
      const std::int64_t term =
          static_cast<std::int64_t>(binom(m, k)) * (std::int64_t{1} << (k * (m - k))) * static_cast<std::int64_t>(a[m - k]);
      sum += (k % 2 == 1) ? term : -term;
    }
    a[m] = static_cast<std::uint64_t>(sum);
  }
  return a[n];
}

// ---------------------------------------------------------------------------
// Markov equivalence
// ---------------------------------------------------------------------------

/// Completed partially directed graph; both edge lists sorted, undirected pairs stored as (min, max).
struct Cpdag {
  int num_nodes = 0;
  std::vector<Edge> directed;
  std::vector<Edge> undirected;

  bool operator==(const Cpdag&) const = default;
};

/// Colliders a->c<-b with a, b non-adjacent, as (a, c, b) with a < b.
inline std::vector<std::tuple<int, int, int>> v_structures(const Dag& g) {
  std::vector<std::tuple<int, int, int>> out;
  const int n = g.num_nodes();
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (g.has_edge(a, c) && g.has_edge(b, c) && !g.adjacent(a, b)) out.emplace_back(a, c, b);
  return out;
}

/// Unordered adjacencies as (min, max), sorted.
inline std::vector<Edge> skeleton(const Dag& g) {
  std::vector<Edge> out;
  for (int u = 0; u < g.num_nodes(); ++u)
    for (int v = u + 1; v < g.num_nodes(); ++v)
      if (g.adjacent(u, v)) out.emplace_back(u, v);
  return out;
}

/// Skeleton + v-structures, then Meek rules R1-R4 to a fixed point.
inline Cpdag to_cpdag(const Dag& g) {
  const int n = g.num_nodes();
  // compelled[u][v]: u->v oriented. adj symmetric.
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0)), dir(n, std::vector<char>(n, 0));
  for (auto [u, v] : g.edges()) adj[u][v] = adj[v][u] = 1;
  for (auto [a, c, b] : v_structures(g)) dir[a][c] = dir[b][c] = 1;

  auto undirected = [&](int u, int v) { return adj[u][v] && !dir[u][v] && !dir[v][u]; };

  bool changed = true;
  while (changed) {
    changed = false;
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (a == b || !undirected(a, b)) continue;
        bool orient = false;
        for (int c = 0; c < n && !orient; ++c) {
          if (c == a || c == b) continue;
          // R1: c->a, a-b, c and b non-adjacent
          if (dir[c][a] && !adj[c][b]) orient = true;
          // R2: a->c->b
          if (dir[a][c] && dir[c][b]) orient = true;
        }
        // R3: a-c, a-d, c->b, d->b, c and d non-adjacent
        for (int c = 0; c < n && !orient; ++c) {
          if (c == a || c == b || !undirected(a, c) || !dir[c][b]) continue;
          for (int d = c + 1; d < n && !orient; ++d) {
            if (d == a || d == b || !undirected(a, d) || !dir[d][b]) continue;
            if (!adj[c][d]) orient = true;
          }
        }
        // R4: a-c, c->d, d->b, a adjacent d, c and b non-adjacent
        for (int c = 0; c < n && !orient; ++c) {
          if (c == a || c == b || !undirected(a, c) || adj[c][b]) continue;
          for (int d = 0; d < n && !orient; ++d) {
            if (d == a || d == b || d == c) continue;
            if (dir[c][d] && dir[d][b] && adj[a][d]) orient = true;
          }
        }
        if (orient) {
          dir[a][b] = 1;
          changed = true;
        }
      }
    }
  }

  Cpdag out;
  out.num_nodes = n;
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) {
      if (dir[u][v]) out.directed.emplace_back(u, v);
      if (u < v && undirected(u, v)) out.undirected.emplace_back(u, v);
    }
  return out;
}

inline void require_same_size(const Dag& a, const Dag& b) {
  if (a.num_nodes() != b.num_nodes())
    throw ConfigError("node-count mismatch: " + std::to_string(a.num_nodes()) + " vs " + std::to_string(b.num_nodes()));
}

inline bool same_mec(const Dag& a, const Dag& b) {
  require_same_size(a, b);
  return to_cpdag(a) == to_cpdag(b);
}

/// Structural Hamming distance: one per unordered pair whose state (absent, u->v, v->u) differs.
inline int shd(const Dag& a, const Dag& b) {
  require_same_size(a, b);
  int dist = 0;
  for (int u = 0; u < a.num_nodes(); ++u)
    for (int v = u + 1; v < a.num_nodes(); ++v)
      if (a.has_edge(u, v) != b.has_edge(u, v) || a.has_edge(v, u) != b.has_edge(v, u)) ++dist;
  return dist;
}

/// G(n, p) DAG: each pair i < j independently gets the edge i->j with probability p_link.
/// Pairs are visited row by row (i outer, j inner) so a seed fixes the graph.
inline Dag random_gnp_dag(int num_nodes, double p_link, std::uint64_t seed) {
  if (!(p_link >= 0.0 && p_link <= 1.0)) throw ConfigError("link probability must lie in [0, 1]");
  if (num_nodes < 1 || num_nodes > kMaxNodes) throw CapacityError("random_gnp_dag: node count out of range");
  std::vector<NodeMask> parents(num_nodes, 0);
  Rng rng(seed);
  std::bernoulli_distribution coin(p_link);
  for (int i = 0; i < num_nodes; ++i)
    for (int j = i + 1; j < num_nodes; ++j)
      if (coin(rng)) parents[j] |= node_bit(i);
  return Dag::from_parent_masks(std::move(parents));
}

}  // namespace preqmdl
