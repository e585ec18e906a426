#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "preqmdl/errors.hpp"
#include "preqmdl/graph.hpp"
#include "preqmdl/rng.hpp"
#include "preqmdl/scoring.hpp"

namespace preqmdl {

/// Anything returning the log-score contribution (nats, higher is better) of one family.
template <typename F>
concept FamilyScorer = requires(const F& f, int child, NodeMask parents) {
  { f(child, parents) } -> std::convertible_to<double>;
};

/// Family scorer backed by one cache: -total loss.
inline auto table_scorer(const CpdScoreTable& table) {
  return [&table](int child, NodeMask parents) { return -table.total(child, parents); };
}

template <FamilyScorer Scorer>
double dag_log_score(const Scorer& scorer, const Dag& g) {
  double s = 0.0;
  for (int d = 0; d < g.num_nodes(); ++d) s += scorer(d, g.parents(d));
  return s;
}

struct RankedEntry {
  Dag dag;
  double score_mean = 0.0;
  double score_std = 0.0;  // across replicates; 0 for a single replicate
  std::vector<double> replicate_scores;
};

/// DAGs sorted by mean log-score, descending; ties broken by the DAG edge-list order.
struct RankedStructures {
  std::vector<RankedEntry> entries;

  const RankedEntry& top() const {
    if (entries.empty()) throw InvariantError("empty ranking");
    return entries.front();
  }

  std::optional<std::size_t> rank_of(const Dag& g) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].dag == g) return i;
    return std::nullopt;
  }
};

inline void sort_ranking(RankedStructures& r) {
  std::sort(r.entries.begin(), r.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score_mean != b.score_mean) return a.score_mean > b.score_mean;
    return a.dag < b.dag;
  });
}

/// Mean and sample standard deviation across replicate caches.
inline RankedEntry rank_entry(const Dag& g, std::span<const CpdScoreTable> replicates) {
  RankedEntry e{g, 0.0, 0.0, {}};
  for (const auto& t : replicates) e.replicate_scores.push_back(score_dag(t, g).log_score);
  const double n = static_cast<double>(e.replicate_scores.size());
  for (double s : e.replicate_scores) e.score_mean += s / n;
  if (e.replicate_scores.size() > 1) {
    double ss = 0.0;
    for (double s : e.replicate_scores) ss += (s - e.score_mean) * (s - e.score_mean);
    e.score_std = std::sqrt(ss / (n - 1.0));
  }
  return e;
}

inline constexpr int kMaxExhaustiveNodes = 5;

/// Scores and ranks every DAG on D nodes against each replicate cache.
inline RankedStructures exhaustive_search(std::span<const CpdScoreTable> replicates) {
  if (replicates.empty()) throw ConfigError("exhaustive_search needs at least one score table");
  const int D = replicates.front().num_nodes();
  if (D > kMaxExhaustiveNodes)
    throw CapacityError("exhaustive search supports at most " + std::to_string(kMaxExhaustiveNodes) + " nodes");
  for (const auto& t : replicates)
    if (t.num_nodes() != D) throw ConfigError("replicate tables disagree on node count");
  RankedStructures r;
  for_each_dag(D, [&](const Dag& g) { r.entries.push_back(rank_entry(g, replicates)); });
  sort_ranking(r);
  return r;
}

inline RankedStructures exhaustive_search(const CpdScoreTable& table) { return exhaustive_search(std::span(&table, 1)); }

/// Exhaustive ranking against an arbitrary family scorer.
template <FamilyScorer Scorer>
RankedStructures exhaustive_search(const Scorer& scorer, int num_nodes) {
  if (num_nodes > kMaxExhaustiveNodes)
    throw CapacityError("exhaustive search supports at most " + std::to_string(kMaxExhaustiveNodes) + " nodes");
  RankedStructures r;
  for_each_dag(num_nodes, [&](const Dag& g) {
    const double s = dag_log_score(scorer, g);
    r.entries.push_back({g, s, 0.0, {s}});
  });
  sort_ranking(r);
  return r;
}

// ---------------------------------------------------------------------------
// Hill climbing
// ---------------------------------------------------------------------------

enum class MoveKind { Add = 0, Delete = 1, Reverse = 2 };

/// Single-edge move on u->v. Ordered by (kind, u, v) for tie-breaking.
struct Move {
  MoveKind kind;
  int u;
  int v;

  auto operator<=>(const Move&) const = default;
};

/// Applies `m` to parent masks; returns nullopt when the result is cyclic or violates the in-degree cap.
inline std::optional<std::vector<NodeMask>> apply_move(const std::vector<NodeMask>& parents, const Move& m,
                                                       int max_parents) {
  auto p = parents;
  switch (m.kind) {
    case MoveKind::Add:
      if (p[m.v] & node_bit(m.u) || p[m.u] & node_bit(m.v)) return std::nullopt;
      p[m.v] |= node_bit(m.u);
      break;
    case MoveKind::Delete:
      if (!(p[m.v] & node_bit(m.u))) return std::nullopt;
      p[m.v] &= ~node_bit(m.u);
      break;
    case MoveKind::Reverse:
      if (!(p[m.v] & node_bit(m.u))) return std::nullopt;
      p[m.v] &= ~node_bit(m.u);
      p[m.u] |= node_bit(m.v);
      break;
  }
  for (NodeMask mask : p)
    if (std::popcount(mask) > max_parents) return std::nullopt;
  if (!is_acyclic(p)) return std::nullopt;
  return p;
}

struct HillClimbResult {
  RankedStructures ranking;  // every visited DAG
  std::vector<Dag> visited;  // in first-visit order
  Dag best;
  double best_score = 0.0;
  std::vector<std::vector<double>> trajectories;  // incumbent score after each accepted move, per restart
};

/// Best-improvement hill climbing over add/delete/reverse moves with an in-degree cap.
/// Restart 0 starts from the empty DAG; later restarts from seeded G(n, 0.5) DAGs thinned to the cap.
template <FamilyScorer Scorer>
HillClimbResult hill_climb(const Scorer& scorer, int num_nodes, int max_parents, int restarts, std::uint64_t seed) {
  if (max_parents < 0) throw ConfigError("max_parents must be non-negative");
  if (restarts < 1) throw ConfigError("restarts must be at least 1");
  HillClimbResult result;
  std::map<std::vector<NodeMask>, double> visited;
  auto visit = [&](const std::vector<NodeMask>& p) {
    auto it = visited.find(p);
    if (it != visited.end()) return it->second;
    double s = 0.0;
    for (int d = 0; d < num_nodes; ++d) s += scorer(d, p[d]);
    visited.emplace(p, s);
    result.visited.push_back(Dag::from_parent_masks(p));
    return s;
  };

  bool have_best = false;
  for (int r = 0; r < restarts; ++r) {
    std::vector<NodeMask> current(num_nodes, 0);
    if (r > 0) {
      current = random_gnp_dag(num_nodes, 0.5, derive_seed(seed, {static_cast<std::uint64_t>(r)})).parent_masks();
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r), 1}));
      for (auto& mask : current) {
        while (std::popcount(mask) > max_parents) {
          std::vector<int> bits;
          for (int d = 0; d < num_nodes; ++d)
            if (mask & node_bit(d)) bits.push_back(d);
          mask &= ~node_bit(bits[std::uniform_int_distribution<std::size_t>(0, bits.size() - 1)(rng)]);
        }
      }
    }
    double current_score = visit(current);
    std::vector<double> trajectory{current_score};
    while (true) {
      std::optional<Move> best_move;
      std::vector<NodeMask> best_next;
      double best_next_score = current_score;
      for (int kind = 0; kind < 3; ++kind)
        for (int u = 0; u < num_nodes; ++u)
          for (int v = 0; v < num_nodes; ++v) {
            if (u == v) continue;
            const Move m{static_cast<MoveKind>(kind), u, v};
            auto next = apply_move(current, m, max_parents);
            if (!next) continue;
            const double s = visit(*next);
            // strict improvement; the scan order makes the first maximiser the smallest move
            if (s > best_next_score) {
              best_next_score = s;
              best_move = m;
              best_next = std::move(*next);
            }
          }
      if (!best_move) break;
      current = std::move(best_next);
      current_score = best_next_score;
      trajectory.push_back(current_score);
    }
    if (!have_best || current_score > result.best_score ||
        (current_score == result.best_score && Dag::from_parent_masks(current) < result.best)) {
      result.best = Dag::from_parent_masks(current);
      result.best_score = current_score;
      have_best = true;
    }
    result.trajectories.push_back(std::move(trajectory));
  }
  for (const auto& [p, s] : visited) result.ranking.entries.push_back({Dag::from_parent_masks(p), s, 0.0, {s}});
  sort_ranking(result.ranking);
  return result;
}

// ---------------------------------------------------------------------------
// Posterior approximation
// ---------------------------------------------------------------------------

/// Weights proportional to exp(log_score) over a finite support.
struct PosteriorApproximation {
  std::vector<Dag> support;
  std::vector<double> weights;
};

inline PosteriorApproximation make_posterior(const std::vector<Dag>& dags, const std::vector<double>& log_scores) {
  if (dags.size() != log_scores.size() || dags.empty()) throw ConfigError("posterior needs matching, non-empty inputs");
  const double mx = *std::max_element(log_scores.begin(), log_scores.end());
  PosteriorApproximation p{dags, std::vector<double>(dags.size())};
  double z = 0.0;
  for (std::size_t i = 0; i < dags.size(); ++i) z += p.weights[i] = std::exp(log_scores[i] - mx);
  for (double& w : p.weights) w /= z;
  return p;
}

inline PosteriorApproximation make_posterior(const RankedStructures& r) {
  std::vector<Dag> dags;
  std::vector<double> scores;
  for (const auto& e : r.entries) {
    dags.push_back(e.dag);
    scores.push_back(e.score_mean);
  }
  return make_posterior(dags, scores);
}

struct PosteriorMetrics {
  double pwa_shd = 0.0;         // posterior-weighted structural Hamming distance to the reference
  double expected_links = 0.0;  // posterior-weighted edge count
};

inline PosteriorMetrics posterior_metrics(const PosteriorApproximation& post, const Dag& reference) {
  PosteriorMetrics m;
  for (std::size_t i = 0; i < post.support.size(); ++i) {
    m.pwa_shd += post.weights[i] * shd(post.support[i], reference);
    m.expected_links += post.weights[i] * static_cast<double>(post.support[i].num_edges());
  }
  return m;
}

}  // namespace preqmdl
