#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "preqmdl/dataset.hpp"
#include "preqmdl/errors.hpp"
#include "preqmdl/graph.hpp"
#include "preqmdl/neural.hpp"
#include "preqmdl/parallel.hpp"
#include "preqmdl/rng.hpp"
#include "preqmdl/tabular.hpp"

namespace preqmdl {

// ---------------------------------------------------------------------------
// Split schedules
// ---------------------------------------------------------------------------

/// Increasing 1-based split points s_1 < ... < s_K = n + 1. Block k covers rows [s_k, s_{k+1}) and is
/// predicted by a model fitted on rows [1, s_k). Rows before s_1 form a head block predicted by the
/// empty-history model.
struct SplitSchedule {
  std::vector<std::size_t> points;

  std::size_t num_rows() const { return points.empty() ? 0 : points.back() - 1; }
  std::size_t num_blocks() const { return points.empty() ? 0 : points.size() - 1; }
  std::size_t first_split() const { return points.front(); }

  /// 0-based half-open row range of block k.
  std::size_t block_begin(std::size_t k) const { return points[k] - 1; }
  std::size_t block_end(std::size_t k) const { return points[k + 1] - 1; }

  void validate(std::size_t n) const {
    if (points.empty()) throw ConfigError("split schedule is empty");
    if (points.front() < 1) throw ConfigError("first split point must be at least 1");
    if (points.back() != n + 1)
      throw ConfigError("last split point must equal n + 1 = " + std::to_string(n + 1));
    for (std::size_t k = 1; k < points.size(); ++k)
      if (points[k] <= points[k - 1]) throw ConfigError("split points must be strictly increasing");
  }

  bool operator==(const SplitSchedule&) const = default;
};

inline std::size_t default_first_split(std::size_t n) {
  return std::clamp<std::size_t>(std::max<std::size_t>(10, n / 1000), 1, std::max<std::size_t>(n, 1));
}

/// Log-equidistant splits: s_k = round(s1 * (n / s1)^((k-1)/(K-1))) for k < K, and s_K = n + 1.
inline SplitSchedule make_schedule(std::size_t n, int num_splits, std::size_t first_split) {
  if (num_splits < 2) throw ConfigError("make_schedule: K must be at least 2");
  if (first_split < 1 || first_split > n)
    throw ConfigError("make_schedule: need 1 <= s1 <= n (s1=" + std::to_string(first_split) +
                      ", n=" + std::to_string(n) + ")");
  SplitSchedule s;
  const double ratio = static_cast<double>(n) / static_cast<double>(first_split);
  for (int k = 1; k < num_splits; ++k) {
    const double e = static_cast<double>(k - 1) / static_cast<double>(num_splits - 1);
    const auto p = static_cast<std::size_t>(std::llround(static_cast<double>(first_split) * std::pow(ratio, e)));
    if (!s.points.empty() && p <= s.points.back())
      throw ConfigError("make_schedule: n=" + std::to_string(n) + " is too small for K=" + std::to_string(num_splits) +
                        " distinct split points from s1=" + std::to_string(first_split) + "; reduce K");
    s.points.push_back(p);
  }
  s.points.push_back(n + 1);
  return s;
}

/// Every row is its own block: {1, 2, ..., n + 1}.
inline SplitSchedule make_exact_schedule(std::size_t n) {
  SplitSchedule s;
  for (std::size_t i = 1; i <= n + 1; ++i) s.points.push_back(i);
  return s;
}

// ---------------------------------------------------------------------------
// Models and score entries
// ---------------------------------------------------------------------------

enum class ModelKind { Tabular, Neural };

inline std::string to_string(ModelKind k) { return k == ModelKind::Tabular ? "tabular" : "neural"; }

struct ModelSpec {
  ModelKind kind = ModelKind::Tabular;
  double alpha = kDefaultAlpha;
  std::vector<int> cardinalities;  // tabular; inferred from data when empty
  MlpCpdConfig mlp;
};

struct BlockScore {
  std::size_t start = 0;  // 1-based first row (s_k)
  std::size_t end = 0;    // 1-based one-past-last row (s_{k+1})
  std::size_t scored_rows = 0;
  double loss = 0.0;      // summed next-step log-loss, nats
  std::optional<TrainReport> report;

  bool operator==(const BlockScore&) const = default;
};

/// Score of one (child, parent set): blocks sum to `total`. `trace` holds per-row losses when kept.
struct CpdScoreEntry {
  ParentSet family;
  std::vector<BlockScore> blocks;
  double total = 0.0;
  std::vector<double> trace;

  bool operator==(const CpdScoreEntry&) const = default;
};

/// Per-parent-set score cache for one dataset, schedule and model configuration.
class CpdScoreTable {
 public:
  CpdScoreTable() = default;
  CpdScoreTable(int num_nodes, SplitSchedule schedule)
      : num_nodes_(num_nodes), schedule_(std::move(schedule)), entries_(num_parent_sets(num_nodes)) {}

  int num_nodes() const { return num_nodes_; }
  const SplitSchedule& schedule() const { return schedule_; }

  std::string dataset_hash;
  std::string config_hash;
  std::vector<std::string> names;

  bool contains(const ParentSet& ps) const { return entries_[parent_set_index(num_nodes_, ps)].has_value(); }

  const CpdScoreEntry& at(const ParentSet& ps) const {
    const auto& e = entries_[parent_set_index(num_nodes_, ps)];
    if (!e) throw CacheError("score cache miss for " + describe(ps));
    return *e;
  }

  double total(int child, NodeMask parents) const { return at({child, parents}).total; }

  void insert(CpdScoreEntry entry) {
    if (entry.family.child < 0 || entry.family.child >= num_nodes_) throw CacheError("entry child out of range");
    entries_[parent_set_index(num_nodes_, entry.family)] = std::move(entry);
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.has_value();
    return n;
  }

  std::vector<ParentSet> missing(const std::vector<ParentSet>& wanted) const {
    std::vector<ParentSet> out;
    for (const auto& ps : wanted)
      if (!contains(ps)) out.push_back(ps);
    return out;
  }

  /// Filled entries in parent-set index order.
  std::vector<const CpdScoreEntry*> entries() const {
    std::vector<const CpdScoreEntry*> out;
    for (const auto& e : entries_)
      if (e) out.push_back(&*e);
    return out;
  }

  std::string describe(const ParentSet& ps) const {
    auto name = [&](int d) { return d < static_cast<int>(names.size()) ? names[d] : std::to_string(d); };
    std::string s = "(node " + name(ps.child) + ", parents {";
    bool first = true;
    for (int d = 0; d < num_nodes_; ++d)
      if (ps.parents & node_bit(d)) {
        s += (first ? "" : ",") + name(d);
        first = false;
      }
    return s + "})";
  }

 private:
  int num_nodes_ = 0;
  SplitSchedule schedule_;
  std::vector<std::optional<CpdScoreEntry>> entries_;
};

/// Dataset prepared once for a model kind: categorical columns for tabular, target bins for neural.
class ScoringContext {
 public:
  ScoringContext(const Dataset& data, ModelSpec spec) : data_(&data), spec_(std::move(spec)) {
    data.validate();
    if (spec_.kind == ModelKind::Tabular) {
      table_ = to_categorical(data, spec_.cardinalities);
    } else {
      spec_.mlp.validate();
      DiscretizationGrid grid(spec_.mlp.num_bins);
      for (int d = 0; d < data.num_nodes(); ++d) bins_.push_back(grid.bins(data.column(d)));
    }
  }

  const Dataset& data() const { return *data_; }
  const ModelSpec& spec() const { return spec_; }
  const CategoricalTable& table() const { return *table_; }
  const std::vector<int>& bins(int node) const { return bins_[node]; }

 private:
  const Dataset* data_;
  ModelSpec spec_;
  std::optional<CategoricalTable> table_;
  std::vector<std::vector<int>> bins_;
};

namespace detail {

inline CpdScoreEntry score_tabular_blocks(const ScoringContext& ctx, const ParentSet& family,
                                          const SplitSchedule& schedule, bool keep_trace) {
  const auto& table = ctx.table();
  const auto pc = encode_parent_configs(table, family.parents);
  const auto& child = table.columns[family.child];
  const int card = table.cardinalities[family.child];
  const std::vector<std::uint8_t>* skip = table.skip.empty() ? nullptr : &table.skip[family.child];
  auto skipped = [&](std::size_t i) { return skip && (*skip)[i]; };

  CategoricalCpd cpd(card, pc.num_configs, ctx.spec().alpha);
  CpdScoreEntry entry;
  entry.family = family;
  if (keep_trace) entry.trace.assign(schedule.num_rows(), 0.0);

  auto score_range = [&](std::size_t begin, std::size_t end, BlockScore& block) {
    for (std::size_t i = begin; i < end; ++i) {
      if (skipped(i)) continue;
      const double loss = -cpd.log_predict(pc.index[i], child[i]);
      block.loss += loss;
      ++block.scored_rows;
      if (keep_trace) entry.trace[i] = loss;
    }
    // counts catch up only after the whole block has been predicted
    for (std::size_t i = begin; i < end; ++i)
      if (!skipped(i)) cpd.observe(pc.index[i], child[i]);
  };

  if (schedule.first_split() > 1) {
    BlockScore head{1, schedule.first_split(), 0, 0.0, std::nullopt};
    score_range(0, schedule.first_split() - 1, head);
    entry.blocks.push_back(head);
  }
  for (std::size_t k = 0; k < schedule.num_blocks(); ++k) {
    BlockScore block{schedule.points[k], schedule.points[k + 1], 0, 0.0, std::nullopt};
    score_range(schedule.block_begin(k), schedule.block_end(k), block);
    entry.blocks.push_back(block);
  }
  for (const auto& b : entry.blocks) entry.total += b.loss;
  return entry;
}

inline CpdHistory gather_history(const ScoringContext& ctx, const ParentSet& family, std::size_t begin,
                                 std::size_t end) {
  const auto& data = ctx.data();
  const auto& bins = ctx.bins(family.child);
  CpdHistory h;
  h.num_inputs = std::popcount(family.parents);
  std::vector<double> row(static_cast<std::size_t>(h.num_inputs));
  for (std::size_t i = begin; i < end; ++i) {
    if (data.masked(i, family.child)) continue;
    int j = 0;
    for (int d = 0; d < data.num_nodes(); ++d)
      if (family.parents & node_bit(d)) row[j++] = data.at(i, d);
    h.push(row, bins[i]);
  }
  return h;
}

inline CpdScoreEntry score_neural_blocks(const ScoringContext& ctx, const ParentSet& family,
                                         const SplitSchedule& schedule, std::uint64_t seed, bool keep_trace) {
  const auto& data = ctx.data();
  const auto& cfg = ctx.spec().mlp;
  const double uniform_loss = std::log(static_cast<double>(cfg.num_bins));
  CpdScoreEntry entry;
  entry.family = family;
  if (keep_trace) entry.trace.assign(schedule.num_rows(), 0.0);

  auto uniform_block = [&](std::size_t begin, std::size_t end, BlockScore& block) {
    for (std::size_t i = begin; i < end; ++i) {
      if (data.masked(i, family.child)) continue;
      block.loss += uniform_loss;
      ++block.scored_rows;
      if (keep_trace) entry.trace[i] = uniform_loss;
    }
  };

  if (schedule.first_split() > 1) {
    BlockScore head{1, schedule.first_split(), 0, 0.0, std::nullopt};
    uniform_block(0, schedule.first_split() - 1, head);
    entry.blocks.push_back(head);
  }
  for (std::size_t k = 0; k < schedule.num_blocks(); ++k) {
    BlockScore block{schedule.points[k], schedule.points[k + 1], 0, 0.0, std::nullopt};
    const std::size_t begin = schedule.block_begin(k), end = schedule.block_end(k);
    const CpdHistory train = gather_history(ctx, family, 0, begin);
    if (validation_size(train.size(), cfg) == 0) {
      uniform_block(begin, end, block);
    } else {
      const std::uint64_t block_seed =
          derive_seed(seed, {static_cast<std::uint64_t>(family.child), family.parents, k});
      const auto trained = train_cpd<float>(train, cfg, block_seed);
      const CpdHistory eval = gather_history(ctx, family, begin, end);
      const auto lp = eval_block(trained.predictor, eval);
      std::size_t j = 0;
      for (std::size_t i = begin; i < end; ++i) {
        if (data.masked(i, family.child)) continue;
        block.loss -= lp[j];
        if (keep_trace) entry.trace[i] = -lp[j];
        ++j;
      }
      block.scored_rows = lp.size();
      block.report = trained.report;
    }
    entry.blocks.push_back(block);
  }
  for (const auto& b : entry.blocks) entry.total += b.loss;
  return entry;
}

}  // namespace detail

/// Block-wise prequential score of one family. Rows masked for the child are neither fitted nor scored.
inline CpdScoreEntry score_cpd_blocks(const ScoringContext& ctx, const ParentSet& family,
                                      const SplitSchedule& schedule, std::uint64_t seed = 0, bool keep_trace = true) {
  schedule.validate(ctx.data().num_rows);
  if (family.child < 0 || family.child >= ctx.data().num_nodes()) throw ConfigError("child index out of range");
  if (family.parents & node_bit(family.child)) throw ConfigError("a node cannot be its own parent");
  if (ctx.spec().kind == ModelKind::Tabular) return detail::score_tabular_blocks(ctx, family, schedule, keep_trace);
  return detail::score_neural_blocks(ctx, family, schedule, seed, keep_trace);
}

/// Scores every family not yet in `table`, in parallel. `on_entry` runs under a lock after each insert.
inline void fill_score_table(const ScoringContext& ctx, const std::vector<ParentSet>& families, CpdScoreTable& table,
                             std::uint64_t seed, int workers, bool keep_trace = true,
                             const std::function<void(const CpdScoreTable&, const CpdScoreEntry&)>& on_entry = {}) {
  const auto todo = table.missing(families);
  std::mutex mutex;
  parallel_for(todo.size(), workers, [&](std::size_t i) {
    auto entry = score_cpd_blocks(ctx, todo[i], table.schedule(), seed, keep_trace);
    std::lock_guard lock(mutex);
    table.insert(entry);
    if (on_entry) on_entry(table, table.at(todo[i]));
  });
}

// ---------------------------------------------------------------------------
// DAG scores
// ---------------------------------------------------------------------------

struct DagScore {
  Dag dag;
  double log_score = 0.0;  // prequential log-likelihood, nats
};

/// Sum of cached family losses; no model work.
inline DagScore score_dag(const CpdScoreTable& table, const Dag& dag) {
  if (dag.num_nodes() != table.num_nodes()) throw ConfigError("DAG node count does not match the score table");
  double total = 0.0;
  for (int d = 0; d < dag.num_nodes(); ++d) total += table.at({d, dag.parents(d)}).total;
  return {dag, -total};
}

enum class CurveResolution { PerStep, PerBlock };

/// Cumulative loss(dag) - loss(reference). `index` holds the 1-based row each value is reported after.
struct ExcessCurve {
  Dag dag;
  std::vector<std::size_t> index;
  std::vector<double> excess;
};

inline std::vector<ExcessCurve> excess_loss_curves(const CpdScoreTable& table, const std::vector<Dag>& dags,
                                                   const Dag& reference, CurveResolution resolution) {
  const std::size_t n = table.schedule().num_rows();
  // per-row or per-block loss of a whole DAG
  auto series = [&](const Dag& g) {
    std::vector<double> s;
    for (int d = 0; d < g.num_nodes(); ++d) {
      const auto& e = table.at({d, g.parents(d)});
      if (resolution == CurveResolution::PerStep) {
        if (e.trace.size() != n)
          throw CacheError("per-step curves need per-row traces, missing for " + table.describe(e.family));
        if (s.empty()) s.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) s[i] += e.trace[i];
      } else {
        if (s.empty()) s.assign(e.blocks.size(), 0.0);
        if (e.blocks.size() != s.size()) throw CacheError("block layout differs between cache entries");
        for (std::size_t k = 0; k < s.size(); ++k) s[k] += e.blocks[k].loss;
      }
    }
    return s;
  };
  std::vector<std::size_t> index;
  if (resolution == CurveResolution::PerStep) {
    for (std::size_t i = 1; i <= n; ++i) index.push_back(i);
  } else {
    const auto& blocks = table.at({0, reference.parents(0)}).blocks;
    for (const auto& b : blocks) index.push_back(b.end - 1);
  }
  const auto ref = series(reference);
  std::vector<ExcessCurve> out;
  for (const auto& g : dags) {
    const auto s = series(g);
    ExcessCurve c{g, index, std::vector<double>(s.size(), 0.0)};
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      acc += s[i] - ref[i];
      c.excess[i] = acc;
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace preqmdl
