#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "preqmdl/dataset.hpp"
#include "preqmdl/errors.hpp"
#include "preqmdl/graph.hpp"
#include "preqmdl/rng.hpp"

namespace preqmdl {

inline constexpr double kDefaultAlpha = 0.5;

/// Conditional probability table with Dirichlet(alpha) smoothing:
/// p(k | l) = (N[l][k] + alpha) / (N[l] + V * alpha).
class CategoricalCpd {
 public:
  CategoricalCpd(int cardinality, std::size_t num_configs, double alpha = kDefaultAlpha)
      : cardinality_(cardinality), num_configs_(num_configs), alpha_(alpha) {
    if (cardinality < 1) throw ConfigError("cardinality must be positive");
    if (num_configs < 1) throw ConfigError("parent configuration count must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a positive finite number");
    counts_.assign(num_configs * static_cast<std::size_t>(cardinality), 0);
    row_totals_.assign(num_configs, 0);
  }

  int cardinality() const { return cardinality_; }
  std::size_t num_configs() const { return num_configs_; }
  double alpha() const { return alpha_; }

  double predict(std::size_t config, int value) const {
    check(config, value);
    return (static_cast<double>(counts_[config * cardinality_ + value]) + alpha_) /
           (static_cast<double>(row_totals_[config]) + cardinality_ * alpha_);
  }

  double log_predict(std::size_t config, int value) const { return std::log(predict(config, value)); }

  void observe(std::size_t config, int value) {
    check(config, value);
    ++counts_[config * cardinality_ + value];
    ++row_totals_[config];
  }

  std::uint64_t count(std::size_t config, int value) const {
    check(config, value);
    return counts_[config * cardinality_ + value];
  }

  std::uint64_t total_count() const {
    return std::accumulate(row_totals_.begin(), row_totals_.end(), std::uint64_t{0});
  }

 private:
  void check(std::size_t config, int value) const {
    if (config >= num_configs_) throw DataError("parent configuration index out of range");
    if (value < 0 || value >= cardinality_) throw DataError("category index out of range");
  }

  int cardinality_;
  std::size_t num_configs_;
  double alpha_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> row_totals_;
};

/// Parent configuration index per row. Mixed radix: the lowest-indexed parent is the most significant digit.
struct ParentConfigs {
  std::vector<std::size_t> index;
  std::size_t num_configs = 1;
};

inline ParentConfigs encode_parent_configs(const CategoricalTable& table, NodeMask parents) {
  ParentConfigs pc;
  pc.index.assign(table.num_rows(), 0);
  for (int d = 0; d < table.num_nodes(); ++d) {
    if ((parents & node_bit(d)) == 0) continue;
    const auto card = static_cast<std::size_t>(table.cardinalities[d]);
    if (pc.num_configs > (std::size_t{1} << 40) / card) throw CapacityError("too many parent configurations");
    pc.num_configs *= card;
    const auto& col = table.columns[d];
    for (std::size_t i = 0; i < pc.index.size(); ++i) pc.index[i] = pc.index[i] * card + static_cast<std::size_t>(col[i]);
  }
  return pc;
}

/// Result of a sequential pass: total log-probability and per-row next-step log-loss (0 for skipped rows).
struct PrequentialResult {
  double log_score = 0.0;
  std::vector<double> next_step_loss;
};

/// Predict-then-observe over rows in order. Skipped rows neither contribute nor update counts.
inline PrequentialResult tabular_cpd_prequential_score(std::span<const int> child, int cardinality,
                                                       std::span<const std::size_t> configs, std::size_t num_configs,
                                                       double alpha, std::span<const std::uint8_t> skip = {}) {
  if (configs.size() != child.size()) throw DataError("child and parent columns differ in length");
  if (!skip.empty() && skip.size() != child.size()) throw DataError("mask length does not match the data");
  CategoricalCpd cpd(cardinality, num_configs, alpha);
  PrequentialResult out;
  out.next_step_loss.assign(child.size(), 0.0);
  for (std::size_t i = 0; i < child.size(); ++i) {
    if (!skip.empty() && skip[i]) continue;
    const double lp = cpd.log_predict(configs[i], child[i]);
    out.next_step_loss[i] = -lp;
    out.log_score += lp;
    cpd.observe(configs[i], child[i]);
  }
  return out;
}

inline PrequentialResult tabular_cpd_prequential_score(const CategoricalTable& table, int child, NodeMask parents,
                                                       double alpha = kDefaultAlpha, bool use_mask = true) {
  const auto pc = encode_parent_configs(table, parents);
  std::span<const std::uint8_t> skip;
  if (use_mask && !table.skip.empty()) skip = table.skip[child];
  return tabular_cpd_prequential_score(table.columns[child], table.cardinalities[child], pc.index, pc.num_configs,
                                       alpha, skip);
}

/// Closed-form Dirichlet-multinomial log evidence, summed over parent configurations.
inline double bayes_dirichlet_score(std::span<const int> child, int cardinality, std::span<const std::size_t> configs,
                                    std::size_t num_configs, double alpha) {
  if (configs.size() != child.size()) throw DataError("child and parent columns differ in length");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  std::vector<std::uint64_t> counts(num_configs * static_cast<std::size_t>(cardinality), 0);
  std::vector<std::uint64_t> totals(num_configs, 0);
  for (std::size_t i = 0; i < child.size(); ++i) {
    if (child[i] < 0 || child[i] >= cardinality || configs[i] >= num_configs) throw DataError("index out of range");
    ++counts[configs[i] * cardinality + child[i]];
    ++totals[configs[i]];
  }
  const double v_alpha = cardinality * alpha;
  const double lg_alpha = std::lgamma(alpha);
  double score = 0.0;
  for (std::size_t l = 0; l < num_configs; ++l) {
    if (totals[l] == 0) continue;
    score += std::lgamma(v_alpha) - std::lgamma(v_alpha + static_cast<double>(totals[l]));
    for (int k = 0; k < cardinality; ++k) {
      const auto c = counts[l * cardinality + k];
      if (c) score += std::lgamma(alpha + static_cast<double>(c)) - lg_alpha;
    }
  }
  return score;
}

inline double bayes_dirichlet_score(const CategoricalTable& table, int child, NodeMask parents,
                                    double alpha = kDefaultAlpha) {
  const auto pc = encode_parent_configs(table, parents);
  return bayes_dirichlet_score(table.columns[child], table.cardinalities[child], pc.index, pc.num_configs, alpha);
}

/// Index-wise mean and (population) standard deviation of the next-step log-loss over row permutations.
struct NextStepLossCurve {
  std::vector<double> mean;
  std::vector<double> stddev;
  int num_permutations = 0;
};

inline NextStepLossCurve permutation_averaged_next_step_loss(const CategoricalTable& table, int child,
                                                             NodeMask parents, double alpha, int num_permutations,
                                                             std::uint64_t seed) {
  if (num_permutations < 1) throw ConfigError("num_permutations must be at least 1");
  const auto pc = encode_parent_configs(table, parents);
  const std::size_t n = table.num_rows();
  const auto& col = table.columns[child];
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<int> permuted_child(n);
  std::vector<std::size_t> permuted_cfg(n);
  // Welford accumulators
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  Rng rng(seed);
  for (int p = 0; p < num_permutations; ++p) {
    // the first pass keeps the stored order
    if (p > 0) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      permuted_child[i] = col[order[i]];
      permuted_cfg[i] = pc.index[order[i]];
    }
    auto res = tabular_cpd_prequential_score(permuted_child, table.cardinalities[child], permuted_cfg, pc.num_configs,
                                             alpha);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = res.next_step_loss[i];
      const double delta = x - mean[i];
      mean[i] += delta / (p + 1);
      m2[i] += delta * (x - mean[i]);
    }
  }
  NextStepLossCurve out;
  out.num_permutations = num_permutations;
  out.stddev.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.stddev[i] = std::sqrt(m2[i] / num_permutations);
  out.mean = std::move(mean);
  return out;
}

}  // namespace preqmdl
