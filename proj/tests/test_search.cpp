#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "preqmdl/datagen.hpp"
#include "preqmdl/search.hpp"

using namespace preqmdl;

namespace {

CpdScoreTable tabular_table(const GeneratedData& g, std::size_t n) {
  ModelSpec spec;
  ScoringContext ctx(g.data, spec);
  CpdScoreTable t(g.data.num_nodes(), make_schedule(n, 4, 10));
  fill_score_table(ctx, enumerate_parent_sets(g.data.num_nodes()), t, 0, 1, false);
  return t;
}

/// +1 for each edge of `target`, -1 for any other edge.
auto target_scorer(const Dag& target) {
  return [target](int child, NodeMask parents) {
    double s = 0;
    for (int p = 0; p < 32; ++p)
      if (parents & node_bit(p)) s += target.has_edge(p, child) ? 1.0 : -1.0;
    return s;
  };
}

}  // namespace

TEST(Exhaustive, SortedWithDeterministicTies) {
  const auto g = gen_tabular_chain(3, 1.0, 500, 1);
  const auto t = tabular_table(g, 500);
  const auto r = exhaustive_search(t);
  ASSERT_EQ(r.entries.size(), 25u);
  for (std::size_t i = 1; i < r.entries.size(); ++i) {
    const auto& a = r.entries[i - 1];
    const auto& b = r.entries[i];
    EXPECT_TRUE(a.score_mean > b.score_mean || (a.score_mean == b.score_mean && a.dag < b.dag));
  }
  // a constant scorer ties everything: order falls back to the DAG order
  const auto flat = exhaustive_search([](int, NodeMask) { return 0.0; }, 3);
  for (std::size_t i = 1; i < flat.entries.size(); ++i) EXPECT_LT(flat.entries[i - 1].dag, flat.entries[i].dag);
}

TEST(Exhaustive, FiveNodesAndCapacity) {
  const auto r = exhaustive_search([](int, NodeMask p) { return -static_cast<double>(std::popcount(p)); }, 5);
  EXPECT_EQ(r.entries.size(), 29281u);
  EXPECT_EQ(r.top().dag, Dag(5));
  EXPECT_THROW(exhaustive_search([](int, NodeMask) { return 0.0; }, 6), CapacityError);
}

TEST(Exhaustive, ReplicateMeanAndStd) {
  const auto a = tabular_table(gen_tabular_chain(3, 1.0, 200, 2), 200);
  const auto b = tabular_table(gen_tabular_chain(3, 1.0, 200, 3), 200);
  const std::vector<CpdScoreTable> reps{a, b};
  const auto r = exhaustive_search(std::span<const CpdScoreTable>(reps));
  for (const auto& e : r.entries) {
    const double sa = score_dag(a, e.dag).log_score, sb = score_dag(b, e.dag).log_score;
    EXPECT_NEAR(e.score_mean, (sa + sb) / 2, 1e-9);
    EXPECT_NEAR(e.score_std, std::abs(sa - sb) / std::sqrt(2.0), 1e-9);
  }
  const std::vector<CpdScoreTable> mixed{a, CpdScoreTable(4, a.schedule())};
  EXPECT_THROW(exhaustive_search(std::span<const CpdScoreTable>(mixed)), ConfigError);
}

TEST(Moves, LegalityChecks) {
  const std::vector<NodeMask> chain{0, node_bit(0), node_bit(1)};  // 0->1->2
  EXPECT_FALSE(apply_move(chain, {MoveKind::Add, 2, 0}, 2));        // cycle
  EXPECT_FALSE(apply_move(chain, {MoveKind::Add, 0, 1}, 2));        // already present
  EXPECT_FALSE(apply_move(chain, {MoveKind::Add, 1, 0}, 2));        // reverse already present
  EXPECT_FALSE(apply_move(chain, {MoveKind::Delete, 0, 2}, 2));     // absent
  EXPECT_FALSE(apply_move(chain, {MoveKind::Add, 0, 2}, 1));        // cap
  const auto added = apply_move(chain, {MoveKind::Add, 0, 2}, 2);
  ASSERT_TRUE(added);
  EXPECT_EQ((*added)[2], node_bit(0) | node_bit(1));
  const auto rev = apply_move(chain, {MoveKind::Reverse, 1, 2}, 2);
  ASSERT_TRUE(rev);
  EXPECT_EQ((*rev)[1], node_bit(0) | node_bit(2));
  EXPECT_EQ((*rev)[2], 0u);
  // 0->1->2 plus 0->2: reversing 0->2 closes a cycle
  const std::vector<NodeMask> tri{0, node_bit(0), node_bit(0) | node_bit(1)};
  EXPECT_FALSE(apply_move(tri, {MoveKind::Reverse, 0, 2}, 2));
}

TEST(HillClimb, FindsAPlantedStructure) {
  const std::vector<Edge> e{{0, 2}, {1, 2}, {2, 3}, {3, 4}, {1, 4}};
  const Dag target = Dag::from_edges(5, e);
  const auto hc = hill_climb(target_scorer(target), 5, 4, 1, 0);
  EXPECT_EQ(hc.best, target);
  EXPECT_EQ(hc.best_score, 5.0);
}

TEST(HillClimb, TrajectoriesIncreaseAndVisitedIsSound) {
  const auto g = gen_cancer_network(600, 4);
  const auto t = tabular_table(g, 600);
  const auto hc = hill_climb(table_scorer(t), 5, 2, 4, 9);
  ASSERT_EQ(hc.trajectories.size(), 4u);
  for (const auto& tr : hc.trajectories)
    for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_GT(tr[i], tr[i - 1]);
  for (const auto& d : hc.visited) {
    EXPECT_TRUE(is_acyclic(d.parent_masks()));
    for (int v = 0; v < 5; ++v) EXPECT_LE(std::popcount(d.parents(v)), 2);
  }
  EXPECT_EQ(hc.ranking.entries.size(), hc.visited.size());
  EXPECT_DOUBLE_EQ(hc.ranking.top().score_mean, hc.best_score);
  EXPECT_EQ(hc.ranking.top().dag, hc.best);
  // restart 0 starts from the empty graph
  EXPECT_DOUBLE_EQ(hc.trajectories[0][0], score_dag(t, Dag(5)).log_score);
}

TEST(HillClimb, Deterministic) {
  const auto g = gen_cancer_network(300, 5);
  const auto t = tabular_table(g, 300);
  const auto a = hill_climb(table_scorer(t), 5, 3, 3, 1);
  const auto b = hill_climb(table_scorer(t), 5, 3, 3, 1);
  EXPECT_EQ(a.visited, b.visited);
  EXPECT_EQ(a.best, b.best);
  EXPECT_THROW(hill_climb(table_scorer(t), 5, 3, 0, 1), ConfigError);
}

TEST(HillClimb, TiesTakeTheSmallestMove) {
  // every edge is worth the same, so each step adds the smallest legal (u, v)
  const auto hc = hill_climb([](int, NodeMask p) { return static_cast<double>(std::popcount(p)); }, 3, 2, 1, 0);
  EXPECT_EQ(hc.trajectories[0], (std::vector<double>{0, 1, 2, 3}));
  const std::vector<Edge> full{{0, 1}, {0, 2}, {1, 2}};
  EXPECT_EQ(hc.best, Dag::from_edges(3, full));
}

TEST(HillClimb, MatchesExhaustiveOnSmallTabularInstances) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const auto dags = enumerate_dags(3);
    const Dag truth = dags[rng() % dags.size()];
    const int v = 2 + static_cast<int>(rng() % 3);
    const auto data = gen_tabular_bn(truth, {v, v, v}, 1.0, 300, 50 + s);
    const auto t = tabular_table(data, 300);
    const auto ex = exhaustive_search(t);
    const auto hc = hill_climb(table_scorer(t), 3, 2, 3, s);
    hits += std::abs(hc.best_score - ex.top().score_mean) < 1e-9;
  }
  EXPECT_GE(hits, 18);
}

TEST(Posterior, HandBuiltTwoDags) {
  const Dag ref = Dag::from_edges(3, std::vector<Edge>{{0, 1}, {1, 2}});
  const Dag other = Dag::from_edges(3, std::vector<Edge>{{1, 0}});  // shd 2, 1 link
  const auto post = make_posterior({ref, other}, {-10.0, -10.0 - std::log(3.0)});
  EXPECT_NEAR(post.weights[0], 0.75, 1e-15);
  EXPECT_NEAR(post.weights[1], 0.25, 1e-15);
  const auto m = posterior_metrics(post, ref);
  EXPECT_NEAR(m.pwa_shd, 0.75 * 0 + 0.25 * 2, 1e-12);
  EXPECT_NEAR(m.expected_links, 0.75 * 2 + 0.25 * 1, 1e-12);
}

TEST(Posterior, ShiftInvariantAndStable) {
  const auto dags = enumerate_dags(3);
  std::vector<double> scores;
  Rng rng(1);
  for (std::size_t i = 0; i < dags.size(); ++i) scores.push_back(-1000.0 * static_cast<double>(rng() % 100) / 100.0);
  const auto a = make_posterior(dags, scores);
  for (auto& s : scores) s += 12345.678;
  const auto b = make_posterior(dags, scores);
  double sum = 0;
  for (std::size_t i = 0; i < dags.size(); ++i) {
    EXPECT_NEAR(a.weights[i], b.weights[i], 1e-12);
    sum += a.weights[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  for (auto& s : scores) s -= 1e6;
  const auto c = make_posterior(dags, scores);
  for (double w : c.weights) EXPECT_TRUE(std::isfinite(w));
  EXPECT_THROW(make_posterior({}, {}), ConfigError);
}
