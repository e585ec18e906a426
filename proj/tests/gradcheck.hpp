#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "preqmdl/neural.hpp"

namespace gradcheck {

using namespace preqmdl;

struct Result {
  double max_rel_error = 0.0;
  double beta_rel_error = 0.0;
  std::size_t checked = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

/// Below the floor the check is effectively absolute: dead units have exactly zero gradient.
inline double rel_error(double a, double n) { return std::abs(a - n) / std::max(1e-6, std::abs(a) + std::abs(n)); }

/// Analytic vs finite-difference gradients of the calibrated loss of a double-precision MLP.
/// With dropout, every evaluation replays the same mask by reseeding.
inline Result run(int hidden_layers, int width, int bins, double dropout, double beta, std::uint64_t seed) {
  Rng rng(seed);
  const int inputs = 2, fourier = 4, batch = 6;
  auto emb = FourierEmbedding<double>::sample(fourier, inputs, 1.0, rng);
  Mat<double> x(inputs, batch);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const Mat<double> feats = emb.embed(x);
  auto p = init_mlp<double>(emb.output_dim(), hidden_layers, width, bins, rng);
  p.log_beta = std::log(beta);
  std::vector<int> y(batch);
  for (auto& t : y) t = static_cast<int>(rng() % bins);
  const std::uint64_t mask_seed = rng();

  auto loss = [&](const MlpParams<double>& q) {
    Rng r(mask_seed);
    const Mat<double> h = mlp_forward<double>(q, feats, dropout, dropout > 0 ? &r : nullptr, nullptr);
    return softmax_cross_entropy<double>(h, y, std::exp(q.log_beta), false).loss;
  };

  Rng r(mask_seed);
  ForwardCache<double> cache;
  const Mat<double> h = mlp_forward<double>(p, feats, dropout, dropout > 0 ? &r : nullptr, &cache);
  const auto ce = softmax_cross_entropy<double>(h, y, std::exp(p.log_beta));
  MlpParams<double> g;
  mlp_backward<double>(p, cache, ce.dlogits, g);

  Result res;
  // five-point stencil: truncation O(h^4), roundoff ~ 1e-16 / step
  const double step = 1e-4;
  auto stencil = [&](auto&& f, double x) {
    return (-f(x + 2 * step) + 8 * f(x + step) - 8 * f(x - step) + f(x - 2 * step)) / (12 * step);
  };
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    const double numeric = stencil(
        [&](double v) {
          param = v;
          return loss(p);
        },
        keep);
    param = keep;
    if (rel_error(analytic, numeric) > res.max_rel_error) {
      res.max_rel_error = rel_error(analytic, numeric);
      res.worst_analytic = analytic;
      res.worst_numeric = numeric;
    }
    ++res.checked;
  };
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) probe(p.weights[l].data()[i], g.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) probe(p.biases[l].data()[i], g.biases[l].data()[i]);
  }
  // beta itself, not log beta
  const double b0 = std::exp(p.log_beta);
  auto loss_beta = [&](double b) {
    Rng rr(mask_seed);
    const Mat<double> hh = mlp_forward<double>(p, feats, dropout, dropout > 0 ? &rr : nullptr, nullptr);
    return softmax_cross_entropy<double>(hh, y, b, false).loss;
  };
  const double numeric_beta = stencil(loss_beta, b0);
  res.beta_rel_error = rel_error(ce.dbeta, numeric_beta);
  ++res.checked;
  return res;
}

}  // namespace gradcheck
