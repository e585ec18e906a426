#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "preqmdl/dataset.hpp"
#include "preqmdl/errors.hpp"
#include "preqmdl/graph.hpp"
#include "preqmdl/rng.hpp"

namespace preqmdl {

// ---------------------------------------------------------------------------
// Structural causal models
// ---------------------------------------------------------------------------

enum class NoiseKind { Gaussian, Uniform };

/// x_d = fn(row, u_d). Gaussian noise has mean 0 and std `noise_std`; Uniform noise is U(0, 1).
/// The function may read only the parent entries of `row`.
struct Mechanism {
  std::function<double(std::span<const double> row, double noise)> fn;
  NoiseKind noise = NoiseKind::Gaussian;
  double noise_std = 0.1;
  int cardinality = 0;      // > 0 for categorical nodes
  std::vector<double> cpt;  // categorical: num_configs x cardinality, row-major
  std::string formula;
};

struct Scm {
  Dag dag;
  std::vector<std::string> names;
  std::vector<Mechanism> mechanisms;

  int num_nodes() const { return dag.num_nodes(); }
  bool categorical() const {
    return std::all_of(mechanisms.begin(), mechanisms.end(), [](const Mechanism& m) { return m.cardinality > 0; });
  }
};

/// Samples plus the exogenous noise that produced them (n x D, row-major), so rows can be re-simulated.
struct GeneratedData {
  Scm scm;
  Dataset data;
  std::vector<double> noise;

  const Dag& truth() const { return scm.dag; }
};

namespace detail {

inline void simulate_row(const Scm& scm, const std::vector<int>& order, std::span<double> row,
                         std::span<const double> noise, NodeMask fixed = 0) {
  for (int d : order) {
    if (fixed & node_bit(d)) continue;
    row[d] = scm.mechanisms[d].fn(row, noise[d]);
  }
}

}  // namespace detail

/// Ancestral sampling; noise is drawn row by row, nodes in topological order.
inline GeneratedData sample_scm(const Scm& scm, std::size_t n, std::uint64_t seed) {
  const int D = scm.num_nodes();
  if (static_cast<int>(scm.mechanisms.size()) != D) throw ConfigError("one mechanism per node is required");
  const auto order = topological_order(scm.dag);
  GeneratedData out{scm, Dataset(scm.names, n), std::vector<double>(n * D, 0.0)};
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> noise(out.noise.data() + i * D, D);
    for (int d : order) {
      const auto& m = scm.mechanisms[d];
      noise[d] = m.noise == NoiseKind::Gaussian ? m.noise_std * normal(rng) : uniform(rng);
    }
    std::span<double> row(out.data.values.data() + i * D, D);
    detail::simulate_row(scm, order, row, noise);
    for (int d = 0; d < D; ++d)
      if (!std::isfinite(row[d]))
        throw DataError("mechanism for node " + scm.names[d] + " produced a non-finite value");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Categorical networks
// ---------------------------------------------------------------------------

inline std::vector<double> sample_dirichlet(int k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (auto& x : p) sum += x = gamma(rng);
  if (sum <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / k);
    return p;
  }
  for (auto& x : p) x /= sum;
  return p;
}

/// Categorical SCM over `dag`: one Dirichlet(alpha_star * 1) row per (node, parent configuration).
/// Parent configurations use the same mixed radix as the scorer (lowest parent index most significant).
inline Scm make_tabular_scm(const Dag& dag, std::vector<int> cardinalities, double alpha_star, std::uint64_t seed,
                            std::vector<std::string> names = {}) {
  const int D = dag.num_nodes();
  if (static_cast<int>(cardinalities.size()) != D) throw ConfigError("one cardinality per node is required");
  for (int c : cardinalities)
    if (c < 2) throw ConfigError("cardinalities must be at least 2");
  if (!(alpha_star > 0.0)) throw ConfigError("alpha_star must be positive");
  Scm scm{dag, names.empty() ? default_node_names(D) : std::move(names), {}};
  Rng rng(seed);
  for (int d = 0; d < D; ++d) {
    const NodeMask pa = dag.parents(d);
    std::size_t configs = 1;
    for (int p = 0; p < D; ++p)
      if (pa & node_bit(p)) configs *= static_cast<std::size_t>(cardinalities[p]);
    Mechanism m;
    m.noise = NoiseKind::Uniform;
    m.cardinality = cardinalities[d];
    for (std::size_t l = 0; l < configs; ++l) {
      auto row = sample_dirichlet(cardinalities[d], alpha_star, rng);
      m.cpt.insert(m.cpt.end(), row.begin(), row.end());
    }
    const int card = cardinalities[d];
    m.formula = "categorical(" + std::to_string(card) + ")";
    m.fn = [pa, card, D, cards = cardinalities, cpt = m.cpt](std::span<const double> row, double u) {
      std::size_t l = 0;
      for (int p = 0; p < D; ++p)
        if (pa & node_bit(p)) l = l * static_cast<std::size_t>(cards[p]) + static_cast<std::size_t>(row[p]);
      double acc = 0.0;
      for (int k = 0; k < card; ++k) {
        acc += cpt[l * card + k];
        if (u < acc) return static_cast<double>(k);
      }
      return static_cast<double>(card - 1);
    };
    scm.mechanisms.push_back(std::move(m));
  }
  return scm;
}

/// Categorical network over `dag` with seeded Dirichlet(alpha_star) CPTs.
inline GeneratedData gen_tabular_bn(const Dag& dag, std::vector<int> cardinalities, double alpha_star, std::size_t n,
                                    std::uint64_t seed) {
  auto scm = make_tabular_scm(dag, std::move(cardinalities), alpha_star, derive_seed(seed, {0}));
  return sample_scm(scm, n, derive_seed(seed, {1}));
}

/// A -> B -> C with V categories each and Dirichlet(alpha_star) CPT rows.
inline GeneratedData gen_tabular_chain(int cardinality, double alpha_star, std::size_t n, std::uint64_t seed) {
  const std::vector<Edge> edges{{0, 1}, {1, 2}};
  return gen_tabular_bn(Dag::from_edges(3, edges), {cardinality, cardinality, cardinality}, alpha_star, n, seed);
}

/// Binary five-node network P -> C <- S, C -> X, C -> D with seeded Dirichlet(alpha_star) CPTs.
inline GeneratedData gen_cancer_network(std::size_t n, std::uint64_t seed, double alpha_star = 1.0) {
  const std::vector<Edge> edges{{0, 2}, {1, 2}, {2, 3}, {2, 4}};
  auto scm = make_tabular_scm(Dag::from_edges(5, edges), {2, 2, 2, 2, 2}, alpha_star, derive_seed(seed, {0}),
                              {"P", "S", "C", "X", "D"});
  return sample_scm(scm, n, derive_seed(seed, {1}));
}

// ---------------------------------------------------------------------------
// Continuous hand-crafted mechanisms
// ---------------------------------------------------------------------------

namespace detail {

inline Mechanism gaussian(double noise_std, std::string formula,
                          std::function<double(std::span<const double>, double)> fn) {
  Mechanism m;
  m.fn = std::move(fn);
  m.noise_std = noise_std;
  m.formula = std::move(formula);
  return m;
}

}  // namespace detail

/// A ~ N(0,1), B = sin(A + eB), C = sin(B + eC), e ~ N(0, 0.1^2).
inline Scm sin_chain3_scm() {
  const std::vector<Edge> edges{{0, 1}, {1, 2}};
  Scm scm{Dag::from_edges(3, edges), {"A", "B", "C"}, {}};
  scm.mechanisms.push_back(detail::gaussian(1.0, "A = eA, eA ~ N(0,1)", [](auto, double e) { return e; }));
  scm.mechanisms.push_back(detail::gaussian(0.1, "B = sin(A + eB)", [](auto r, double e) { return std::sin(r[0] + e); }));
  scm.mechanisms.push_back(detail::gaussian(0.1, "C = sin(B + eC)", [](auto r, double e) { return std::sin(r[1] + e); }));
  return scm;
}

inline GeneratedData gen_sin_chain3(std::size_t n, std::uint64_t seed) { return sample_scm(sin_chain3_scm(), n, seed); }

/// A, B ~ N(0,1); C = sin(2AB + eC); D = sin(C) + eD; E = sin(3C + eE).
inline Scm star5_scm() {
  const std::vector<Edge> edges{{0, 2}, {1, 2}, {2, 3}, {2, 4}};
  Scm scm{Dag::from_edges(5, edges), {"A", "B", "C", "D", "E"}, {}};
  scm.mechanisms.push_back(detail::gaussian(1.0, "A ~ N(0,1)", [](auto, double e) { return e; }));
  scm.mechanisms.push_back(detail::gaussian(1.0, "B ~ N(0,1)", [](auto, double e) { return e; }));
  scm.mechanisms.push_back(
      detail::gaussian(0.1, "C = sin(2AB + eC)", [](auto r, double e) { return std::sin(2.0 * r[0] * r[1] + e); }));
  scm.mechanisms.push_back(
      detail::gaussian(0.1, "D = sin(C) + eD", [](auto r, double e) { return std::sin(r[2]) + e; }));
  scm.mechanisms.push_back(
      detail::gaussian(0.1, "E = sin(3C + eE)", [](auto r, double e) { return std::sin(3.0 * r[2] + e); }));
  return scm;
}

inline GeneratedData gen_star5(std::size_t n, std::uint64_t seed) { return sample_scm(star5_scm(), n, seed); }

/// X1 ~ N(0,1); Xd ~ N(sin(f * X(d-1)), 0.1^2) for d = 2..5, f in {1, 4}.
inline Scm sin_chain5_scm(int frequency) {
  if (frequency != 1 && frequency != 4) throw ConfigError("sin-chain5 frequency must be 1 or 4");
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  Scm scm{Dag::from_edges(5, edges), {"X1", "X2", "X3", "X4", "X5"}, {}};
  scm.mechanisms.push_back(detail::gaussian(1.0, "X1 ~ N(0,1)", [](auto, double e) { return e; }));
  const double f = frequency;
  for (int d = 1; d < 5; ++d) {
    const std::string fs = frequency == 1 ? "" : std::to_string(frequency) + "*";
    scm.mechanisms.push_back(detail::gaussian(
        0.1, "X" + std::to_string(d + 1) + " = sin(" + fs + "X" + std::to_string(d) + ") + e",
        [d, f](auto r, double e) { return std::sin(f * r[d - 1]) + e; }));
  }
  return scm;
}

inline GeneratedData gen_sin_chain5(int frequency, std::size_t n, std::uint64_t seed) {
  return sample_scm(sin_chain5_scm(frequency), n, seed);
}

// ---------------------------------------------------------------------------
// Fixed-point mechanisms with a weighted adjacency matrix
// ---------------------------------------------------------------------------

enum class YuVariant { A, B };

/// weights[i][j] != 0 means edge i -> j with that weight.
using WeightMatrix = std::vector<std::vector<double>>;

inline Dag dag_from_weights(const WeightMatrix& w) {
  const int D = static_cast<int>(w.size());
  std::vector<NodeMask> parents(D, 0);
  for (int i = 0; i < D; ++i) {
    if (static_cast<int>(w[i].size()) != D) throw ConfigError("weight matrix must be square");
    for (int j = 0; j < D; ++j)
      if (w[i][j] != 0.0) {
        if (i == j) throw DataError("weight matrix has a self-loop");
        parents[j] |= node_bit(i);
      }
  }
  if (!is_acyclic(parents)) throw DataError("weighted adjacency is cyclic");
  return Dag::from_parent_masks(std::move(parents));
}

/// G(n, p) structure with weights drawn uniformly from [-2, -0.5] U [0.5, 2].
inline WeightMatrix random_weight_matrix(int num_nodes, double p_link, std::uint64_t seed) {
  const Dag g = random_gnp_dag(num_nodes, p_link, derive_seed(seed, {0}));
  Rng rng(derive_seed(seed, {1}));
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::bernoulli_distribution sign(0.5);
  WeightMatrix w(num_nodes, std::vector<double>(num_nodes, 0.0));
  for (auto [u, v] : g.edges()) w[u][v] = (sign(rng) ? -1.0 : 1.0) * mag(rng);
  return w;
}

/// Right-hand side of the fixed-point equation for node j given the full vector x.
inline double yu_rhs(YuVariant variant, const WeightMatrix& w, std::span<const double> x, int j, double z) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i][j] == 0.0) continue;
    acc += variant == YuVariant::A ? w[i][j] * std::cos(x[i] + 1.0) : w[i][j] * (x[i] + 0.5);
  }
  return variant == YuVariant::A ? acc + z : 2.0 * std::sin(acc) + acc + z;
}

/// (a) X = W^T cos(X + 1) + Z;  (b) X = 2 sin(W^T (X + 0.5)) + W^T (X + 0.5) + Z, with Z ~ N(0, I).
/// One sweep in topological order reaches the fixed point because W is acyclic.
inline Scm yu_scm(YuVariant variant, WeightMatrix weights) {
  const Dag dag = dag_from_weights(weights);
  const int D = dag.num_nodes();
  Scm scm{dag, default_node_names(D), {}};
  auto shared = std::make_shared<const WeightMatrix>(std::move(weights));
  for (int j = 0; j < D; ++j) {
    scm.mechanisms.push_back(detail::gaussian(
        1.0, variant == YuVariant::A ? "X = A^T cos(X + 1) + Z" : "X = 2 sin(A^T (X + 0.5)) + A^T (X + 0.5) + Z",
        [variant, shared, j](std::span<const double> r, double z) { return yu_rhs(variant, *shared, r, j, z); }));
  }
  return scm;
}

inline GeneratedData gen_yu_mechanism(YuVariant variant, WeightMatrix weights, std::size_t n, std::uint64_t seed) {
  return sample_scm(yu_scm(variant, std::move(weights)), n, seed);
}

// ---------------------------------------------------------------------------
// Compound nonlinearities
// ---------------------------------------------------------------------------

/// Building blocks of the compound generators; `e` is N(0, 0.1^2) noise, X, Y, Z the ordered arguments.
enum class CompoundFn {
  Sin30Eps,             // sin(30 e)
  TenEps,               // 10 e
  Sin2X,                // sin(2X) + e
  SinCubeMinusX,        // sin(X^3 - X + e)
  CubePlusEps,          // (X + e)^3
  SgnReciprocal,        // sgn(X) / (|X| + 0.1) + e
  SinReciprocal,        // sin(1 / (|X| + 0.1) + e)
  Sin2CubeMinusSquare,  // sin(2X^3 - Y^2) + e
  SgnSin4Prod,          // sgn(X) sin(4XY + e)
  Sin4Prod,             // sin(4 * prod(args) + e)
  Sin2XSinReciprocal,   // sin(2X) sin(1 / (|Y| + 0.1)) + e
  SgnSin2Prod,          // sgn(X) sin(2XY + e)
  Sin2XSin4Prod,        // sin(2X) sin(4XY + e)
};

struct CompoundCell {
  CompoundFn fn;
  std::vector<int> args;  // node indices in formula order
};

inline int compound_arity(CompoundFn fn) {
  switch (fn) {
    case CompoundFn::Sin30Eps:
    case CompoundFn::TenEps: return 0;
    case CompoundFn::Sin2X:
    case CompoundFn::SinCubeMinusX:
    case CompoundFn::CubePlusEps:
    case CompoundFn::SgnReciprocal:
    case CompoundFn::SinReciprocal: return 1;
    case CompoundFn::Sin4Prod: return -1;  // two or more
    default: return 2;
  }
}

inline double sgn(double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); }

inline double eval_compound(const CompoundCell& c, std::span<const double> row, double e) {
  auto arg = [&](std::size_t k) { return row[c.args.at(k)]; };
  switch (c.fn) {
    case CompoundFn::Sin30Eps: return std::sin(30.0 * e);
    case CompoundFn::TenEps: return 10.0 * e;
    case CompoundFn::Sin2X: return std::sin(2.0 * arg(0)) + e;
    case CompoundFn::SinCubeMinusX: {
      const double x = arg(0);
      return std::sin(x * x * x - x + e);
    }
    case CompoundFn::CubePlusEps: {
      const double t = arg(0) + e;
      return t * t * t;
    }
    case CompoundFn::SgnReciprocal: return sgn(arg(0)) / (std::abs(arg(0)) + 0.1) + e;
    case CompoundFn::SinReciprocal: return std::sin(1.0 / (std::abs(arg(0)) + 0.1) + e);
    case CompoundFn::Sin2CubeMinusSquare: {
      const double x = arg(0), y = arg(1);
      return std::sin(2.0 * x * x * x - y * y) + e;
    }
    case CompoundFn::SgnSin4Prod: return sgn(arg(0)) * std::sin(4.0 * arg(0) * arg(1) + e);
    case CompoundFn::Sin4Prod: {
      double p = 4.0;
      for (std::size_t k = 0; k < c.args.size(); ++k) p *= arg(k);
      return std::sin(p + e);
    }
    case CompoundFn::Sin2XSinReciprocal: return std::sin(2.0 * arg(0)) * std::sin(1.0 / (std::abs(arg(1)) + 0.1)) + e;
    case CompoundFn::SgnSin2Prod: return sgn(arg(0)) * std::sin(2.0 * arg(0) * arg(1) + e);
    case CompoundFn::Sin2XSin4Prod: return std::sin(2.0 * arg(0)) * std::sin(4.0 * arg(0) * arg(1) + e);
  }
  return 0.0;
}

inline std::string compound_formula(const CompoundCell& c, const std::vector<std::string>& names) {
  auto n = [&](std::size_t k) { return names.at(c.args.at(k)); };
  switch (c.fn) {
    case CompoundFn::Sin30Eps: return "sin(30*e)";
    case CompoundFn::TenEps: return "10*e";
    case CompoundFn::Sin2X: return "sin(2*" + n(0) + ") + e";
    case CompoundFn::SinCubeMinusX: return "sin(" + n(0) + "^3 - " + n(0) + " + e)";
    case CompoundFn::CubePlusEps: return "(" + n(0) + " + e)^3";
    case CompoundFn::SgnReciprocal: return "sgn(" + n(0) + ")/(|" + n(0) + "| + 0.1) + e";
    case CompoundFn::SinReciprocal: return "sin(1/(|" + n(0) + "| + 0.1) + e)";
    case CompoundFn::Sin2CubeMinusSquare: return "sin(2*" + n(0) + "^3 - " + n(1) + "^2) + e";
    case CompoundFn::SgnSin4Prod: return "sgn(" + n(0) + ")*sin(4*" + n(0) + "*" + n(1) + " + e)";
    case CompoundFn::Sin4Prod: {
      std::string p;
      for (std::size_t k = 0; k < c.args.size(); ++k) p += "*" + n(k);
      return "sin(4" + p + " + e)";
    }
    case CompoundFn::Sin2XSinReciprocal: return "sin(2*" + n(0) + ")*sin(1/(|" + n(1) + "| + 0.1)) + e";
    case CompoundFn::SgnSin2Prod: return "sgn(" + n(0) + ")*sin(2*" + n(0) + "*" + n(1) + " + e)";
    case CompoundFn::Sin2XSin4Prod: return "sin(2*" + n(0) + ")*sin(4*" + n(0) + "*" + n(1) + " + e)";
  }
  return {};
}

/// Five columns A..E; cells evaluated in that order.
using CompoundSpec = std::array<CompoundCell, 5>;

inline constexpr int kCompoundCatalogSize = 20;

/// The 20 five-node generating systems, 1-based index.
inline CompoundSpec compound_catalog(int index) {
  using F = CompoundFn;
  constexpr int A = 0, B = 1, C = 2, D = 3;
  static const std::array<CompoundSpec, kCompoundCatalogSize> catalog{{
      {{{F::Sin30Eps, {}}, {F::Sin2X, {A}}, {F::SinCubeMinusX, {B}}, {F::CubePlusEps, {C}}, {F::SgnReciprocal, {A}}}},
      {{{F::TenEps, {}}, {F::CubePlusEps, {A}}, {F::Sin2X, {A}}, {F::SinReciprocal, {C}}, {F::Sin2X, {A}}}},
      {{{F::TenEps, {}}, {F::TenEps, {}}, {F::SgnReciprocal, {B}}, {F::Sin2CubeMinusSquare, {C, B}}, {F::SgnSin4Prod, {D, A}}}},
      {{{F::TenEps, {}}, {F::SgnReciprocal, {A}}, {F::TenEps, {}}, {F::Sin2CubeMinusSquare, {C, A}}, {F::SgnSin4Prod, {D, A}}}},
      {{{F::Sin30Eps, {}}, {F::CubePlusEps, {A}}, {F::Sin30Eps, {}}, {F::CubePlusEps, {C}}, {F::SinCubeMinusX, {C}}}},
      {{{F::TenEps, {}}, {F::Sin30Eps, {}}, {F::Sin2CubeMinusSquare, {B, A}}, {F::SgnSin4Prod, {C, A}}, {F::SinReciprocal, {D}}}},
      {{{F::Sin30Eps, {}}, {F::SinCubeMinusX, {A}}, {F::Sin2XSinReciprocal, {B, A}}, {F::Sin4Prod, {C, B, A}}, {F::Sin2CubeMinusSquare, {D, C}}}},
      {{{F::Sin30Eps, {}}, {F::SinCubeMinusX, {A}}, {F::Sin2XSinReciprocal, {B, A}}, {F::SgnReciprocal, {A}}, {F::Sin2XSinReciprocal, {D, A}}}},
      {{{F::TenEps, {}}, {F::TenEps, {}}, {F::Sin4Prod, {B, A}}, {F::Sin30Eps, {}}, {F::Sin4Prod, {D, C, A}}}},
      {{{F::Sin30Eps, {}}, {F::SinCubeMinusX, {A}}, {F::Sin2CubeMinusSquare, {B, A}}, {F::TenEps, {}}, {F::Sin2XSin4Prod, {B, A}}}},
      {{{F::Sin30Eps, {}}, {F::Sin30Eps, {}}, {F::SgnSin2Prod, {B, A}}, {F::Sin30Eps, {}}, {F::Sin2XSin4Prod, {D, A}}}},
      {{{F::Sin30Eps, {}}, {F::Sin2X, {A}}, {F::Sin4Prod, {B, A}}, {F::Sin2XSinReciprocal, {C, B}}, {F::SgnReciprocal, {C}}}},
      {{{F::TenEps, {}}, {F::CubePlusEps, {A}}, {F::Sin4Prod, {B, A}}, {F::SgnSin2Prod, {C, A}}, {F::Sin4Prod, {D, A}}}},
      {{{F::Sin30Eps, {}}, {F::CubePlusEps, {A}}, {F::TenEps, {}}, {F::Sin4Prod, {C, A}}, {F::SgnReciprocal, {D}}}},
      {{{F::TenEps, {}}, {F::SinCubeMinusX, {A}}, {F::CubePlusEps, {B}}, {F::SinCubeMinusX, {C}}, {F::Sin2X, {A}}}},
      {{{F::Sin30Eps, {}}, {F::SgnReciprocal, {A}}, {F::SgnReciprocal, {B}}, {F::Sin2X, {C}}, {F::SgnSin4Prod, {D, A}}}},
      {{{F::Sin30Eps, {}}, {F::SgnReciprocal, {A}}, {F::Sin2CubeMinusSquare, {B, A}}, {F::TenEps, {}}, {F::SgnReciprocal, {D}}}},
      {{{F::TenEps, {}}, {F::Sin30Eps, {}}, {F::SgnSin2Prod, {B, A}}, {F::Sin2XSinReciprocal, {C, B}}, {F::Sin4Prod, {D, A}}}},
      {{{F::Sin30Eps, {}}, {F::SinReciprocal, {A}}, {F::CubePlusEps, {B}}, {F::Sin2CubeMinusSquare, {B, A}}, {F::SinCubeMinusX, {B}}}},
      {{{F::Sin30Eps, {}}, {F::SinReciprocal, {A}}, {F::SinCubeMinusX, {B}}, {F::SinReciprocal, {B}}, {F::Sin30Eps, {}}}},
  }};
  if (index < 1 || index > kCompoundCatalogSize)
    throw ConfigError("compound generator index must be in [1, 20], got " + std::to_string(index));
  return catalog[index - 1];
}

inline Scm compound_scm(const CompoundSpec& spec) {
  const std::vector<std::string> names{"A", "B", "C", "D", "E"};
  std::vector<NodeMask> parents(5, 0);
  for (int d = 0; d < 5; ++d) {
    const int arity = compound_arity(spec[d].fn);
    const int nargs = static_cast<int>(spec[d].args.size());
    if ((arity >= 0 && nargs != arity) || (arity < 0 && nargs < 2))
      throw ConfigError("compound cell for " + names[d] + " has the wrong number of arguments");
    for (int a : spec[d].args) {
      if (a < 0 || a >= 5 || a == d) throw ConfigError("compound cell argument out of range");
      parents[d] |= node_bit(a);
    }
  }
  Scm scm{Dag::from_parent_masks(parents), names, {}};
  for (int d = 0; d < 5; ++d) {
    const CompoundCell cell = spec[d];
    scm.mechanisms.push_back(detail::gaussian(0.1, names[d] + " = " + compound_formula(cell, names),
                                              [cell](std::span<const double> r, double e) {
                                                return eval_compound(cell, r, e);
                                              }));
  }
  return scm;
}

/// Candidate building blocks for a node with `in_degree` parents.
inline std::vector<CompoundFn> compound_candidates(int in_degree) {
  using F = CompoundFn;
  switch (in_degree) {
    case 0: return {F::Sin30Eps, F::TenEps};
    case 1: return {F::Sin2X, F::SinCubeMinusX, F::CubePlusEps, F::SgnReciprocal, F::SinReciprocal};
    case 2:
      return {F::Sin2CubeMinusSquare, F::SgnSin4Prod, F::Sin4Prod, F::Sin2XSinReciprocal, F::SgnSin2Prod,
              F::Sin2XSin4Prod};
    default: return {F::Sin4Prod};
  }
}

/// Random G(5, p_link) DAG; each node draws a building block uniformly among those matching its in-degree,
/// with its parents in random argument order.
inline CompoundSpec random_compound_spec(std::uint64_t seed, double p_link = 0.25) {
  const Dag g = random_gnp_dag(5, p_link, derive_seed(seed, {0}));
  Rng rng(derive_seed(seed, {1}));
  CompoundSpec spec;
  for (int d = 0; d < 5; ++d) {
    std::vector<int> args;
    for (int p = 0; p < 5; ++p)
      if (g.parents(d) & node_bit(p)) args.push_back(p);
    std::shuffle(args.begin(), args.end(), rng);
    const auto cands = compound_candidates(static_cast<int>(args.size()));
    spec[d] = {cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)], args};
  }
  return spec;
}

inline GeneratedData gen_compound_nonlinear(const CompoundSpec& spec, std::size_t n, std::uint64_t seed) {
  return sample_scm(compound_scm(spec), n, seed);
}

inline GeneratedData gen_compound_nonlinear(int index, std::size_t n, std::uint64_t seed) {
  return gen_compound_nonlinear(compound_catalog(index), n, seed);
}

// ---------------------------------------------------------------------------
// Interventions
// ---------------------------------------------------------------------------

/// Rows [window_begin, window_end) (0-based) each get, with `probability`, one uniformly chosen node
/// set to a random value: uniform over categories, or uniform over the node's observed range.
struct InterventionPolicy {
  std::size_t window_begin = 0;
  std::size_t window_end = 0;
  double probability = 0.5;

  void validate(std::size_t n) const {
    if (window_begin > window_end || window_end > n) throw ConfigError("intervention window outside [0, n)");
    if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("intervention probability must lie in [0, 1]");
  }
};

/// Sets the mask bit of every intervened cell and re-simulates descendants from the stored noise.
inline void apply_interventions(GeneratedData& gen, const InterventionPolicy& policy, std::uint64_t seed) {
  auto& data = gen.data;
  const int D = data.num_nodes();
  policy.validate(data.num_rows);
  if (!data.has_mask()) data.mask.assign(data.values.size(), 0);
  std::vector<double> lo(D, 0.0), hi(D, 0.0);
  for (int d = 0; d < D; ++d) {
    if (data.num_rows == 0) break;
    auto col = data.column(d);
    auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    lo[d] = *mn;
    hi[d] = *mx;
  }
  const auto order = topological_order(gen.scm.dag);
  Rng rng(seed);
  std::bernoulli_distribution coin(policy.probability);
  std::uniform_int_distribution<int> pick_node(0, D - 1);
  for (std::size_t i = policy.window_begin; i < policy.window_end; ++i) {
    if (!coin(rng)) continue;
    const int node = pick_node(rng);
    const auto& m = gen.scm.mechanisms[node];
    double value;
    if (m.cardinality > 0) {
      value = static_cast<double>(std::uniform_int_distribution<int>(0, m.cardinality - 1)(rng));
    } else {
      value = std::uniform_real_distribution<double>(lo[node], std::nextafter(hi[node], hi[node] + 1.0))(rng);
    }
    std::span<double> row(data.values.data() + i * D, D);
    row[node] = value;
    data.set_masked(i, node, true);
    NodeMask fixed = ~descendants(gen.scm.dag, node);
    detail::simulate_row(gen.scm, order, row, std::span<const double>(gen.noise.data() + i * D, D), fixed);
  }
}

}  // namespace preqmdl
