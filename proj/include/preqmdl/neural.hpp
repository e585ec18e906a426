#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "preqmdl/errors.hpp"
#include "preqmdl/rng.hpp"

namespace preqmdl {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Architecture and optimisation recipe for one neural CPD.
struct MlpCpdConfig {
  int hidden_layers = 3;
  int hidden_width = 512;
  double dropout_rate = 0.5;
  int fourier_features = 512;
  double fourier_scale = 10.0;  // std of the sampled frequencies
  int num_bins = 128;
  int batch_size = 128;
  std::vector<double> candidate_learning_rates{1e-4, 3e-4};
  int max_steps = 25000;
  int theta_steps_per_beta_step = 10;
  double validation_fraction = 0.1;
  int max_validation_rows = 1024;
  int eval_interval = 100;
  int patience = 10;                // evaluations without sufficient improvement before stopping
  double min_improvement = 1e-4;    // nats
  double beta_learning_rate = 1e-2; // Adam step size on log(beta)

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("MlpCpdConfig: " + m); };
    if (hidden_layers < 1) fail("hidden_layers must be positive");
    if (hidden_width < 1) fail("hidden_width must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
    if (fourier_features < 1) fail("fourier_features must be positive");
    if (!(fourier_scale > 0.0)) fail("fourier_scale must be positive");
    if (num_bins < 2) fail("num_bins must be at least 2");
    if (batch_size < 1) fail("batch_size must be positive");
    if (candidate_learning_rates.empty()) fail("at least one learning rate is required");
    for (double lr : candidate_learning_rates)
      if (!(lr > 0.0)) fail("learning rates must be positive");
    if (max_steps < 1) fail("max_steps must be positive");
    if (theta_steps_per_beta_step < 1) fail("theta_steps_per_beta_step must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in (0, 1)");
    if (max_validation_rows < 1) fail("max_validation_rows must be positive");
    if (eval_interval < 1 || patience < 1) fail("eval_interval and patience must be positive");
    if (!(beta_learning_rate > 0.0)) fail("beta_learning_rate must be positive");
  }
};

/// tanh squashing into [-1, 1] followed by a uniform grid of `num_bins` cells.
class DiscretizationGrid {
 public:
  explicit DiscretizationGrid(int num_bins = 128) : num_bins_(num_bins) {
    if (num_bins < 1) throw ConfigError("num_bins must be positive");
  }

  int num_bins() const { return num_bins_; }

  int bin(double value) const {
    if (!std::isfinite(value)) throw DataError("cannot discretize a non-finite value");
    const double u = (std::tanh(value) + 1.0) * 0.5 * num_bins_;
    return std::clamp(static_cast<int>(std::floor(u)), 0, num_bins_ - 1);
  }

  std::vector<int> bins(std::span<const double> values) const {
    std::vector<int> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = bin(values[i]);
    return out;
  }

 private:
  int num_bins_;
};

// ---------------------------------------------------------------------------
// Fourier features
// ---------------------------------------------------------------------------

/// Frozen random frequencies F; x -> [sin(F x); cos(F x)].
template <typename Scalar>
struct FourierEmbedding {
  Mat<Scalar> freqs;  // num_features x num_inputs

  static FourierEmbedding sample(int num_features, int num_inputs, double scale, Rng& rng) {
    FourierEmbedding e;
    e.freqs.resize(num_features, num_inputs);
    std::normal_distribution<double> normal(0.0, scale);
    for (int j = 0; j < num_inputs; ++j)
      for (int i = 0; i < num_features; ++i) e.freqs(i, j) = static_cast<Scalar>(normal(rng));
    return e;
  }

  int num_inputs() const { return static_cast<int>(freqs.cols()); }
  int output_dim() const { return 2 * static_cast<int>(freqs.rows()); }

  /// `inputs` is num_inputs x batch; result is 2*num_features x batch.
  Mat<Scalar> embed(const Mat<Scalar>& inputs) const {
    if (inputs.rows() != freqs.cols())
      throw DataError("fourier_embed: expected " + std::to_string(freqs.cols()) + " inputs, got " +
                      std::to_string(inputs.rows()));
    const Mat<Scalar> proj = freqs * inputs;
    Mat<Scalar> out(2 * freqs.rows(), inputs.cols());
    out.topRows(freqs.rows()) = proj.array().sin().matrix();
    out.bottomRows(freqs.rows()) = proj.array().cos().matrix();
    return out;
  }
};

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

/// ReLU MLP weights; the last layer emits logits h. Calibration temperature beta = exp(log_beta).
template <typename Scalar>
struct MlpParams {
  std::vector<Mat<Scalar>> weights;  // out x in
  std::vector<Vec<Scalar>> biases;
  Scalar log_beta = 0;

  std::size_t num_layers() const { return weights.size(); }

  /// Same shapes, all zeros.
  MlpParams zeros_like() const {
    MlpParams z;
    for (const auto& w : weights) z.weights.push_back(Mat<Scalar>::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) z.biases.push_back(Vec<Scalar>::Zero(b.size()));
    return z;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n + 1;
  }
};

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), for weights and biases.
template <typename Scalar>
MlpParams<Scalar> init_mlp(int input_dim, int hidden_layers, int width, int outputs, Rng& rng) {
  MlpParams<Scalar> p;
  int fan_in = input_dim;
  for (int l = 0; l <= hidden_layers; ++l) {
    const int out = l == hidden_layers ? outputs : width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat<Scalar> w(out, fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(u(rng));
    Vec<Scalar> b(out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = static_cast<Scalar>(u(rng));
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
    fan_in = out;
  }
  return p;
}

template <typename Scalar>
struct ForwardCache {
  std::vector<Mat<Scalar>> inputs;  // input to each layer
  std::vector<Mat<Scalar>> pre;     // hidden pre-activations
  std::vector<Mat<Scalar>> masks;   // scaled dropout masks (empty when dropout is off)
};

/// Logits for a batch of feature columns. Dropout is applied only when `rng` is given.
template <typename Scalar>
Mat<Scalar> mlp_forward(const MlpParams<Scalar>& p, const Mat<Scalar>& features, double dropout_rate, Rng* rng,
                        ForwardCache<Scalar>* cache) {
  if (features.rows() != p.weights.front().cols()) throw DataError("mlp_forward: feature dimension mismatch");
  const std::size_t hidden = p.num_layers() - 1;
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->masks.clear();
  }
  Mat<Scalar> a = features;
  const bool drop = rng != nullptr && dropout_rate > 0.0;
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - dropout_rate));
  std::bernoulli_distribution keep(1.0 - dropout_rate);
  for (std::size_t l = 0; l < hidden; ++l) {
    Mat<Scalar> z = p.weights[l] * a;
    z.colwise() += p.biases[l];
    if (cache) {
      cache->inputs.push_back(std::move(a));
      cache->pre.push_back(z);
    }
    a = z.cwiseMax(Scalar(0));
    if (drop) {
      Mat<Scalar> m(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = keep(*rng) ? keep_scale : Scalar(0);
      a = a.cwiseProduct(m);
      if (cache) cache->masks.push_back(std::move(m));
    }
  }
  Mat<Scalar> h = p.weights[hidden] * a;
  h.colwise() += p.biases[hidden];
  if (cache) cache->inputs.push_back(std::move(a));
  return h;
}

/// Accumulates d loss / d params into `grads` (overwritten) given d loss / d logits.
template <typename Scalar>
void mlp_backward(const MlpParams<Scalar>& p, const ForwardCache<Scalar>& cache, const Mat<Scalar>& dlogits,
                  MlpParams<Scalar>& grads) {
  const std::size_t L = p.num_layers();
  if (grads.weights.size() != L) grads = p.zeros_like();
  Mat<Scalar> delta = dlogits;
  for (std::size_t k = L; k-- > 0;) {
    grads.weights[k].noalias() = delta * cache.inputs[k].transpose();
    grads.biases[k] = delta.rowwise().sum();
    if (k == 0) break;
    Mat<Scalar> da = p.weights[k].transpose() * delta;
    const std::size_t h = k - 1;
    if (!cache.masks.empty()) da = da.cwiseProduct(cache.masks[h]);
    delta = da.cwiseProduct((cache.pre[h].array() > Scalar(0)).template cast<Scalar>().matrix());
  }
}

/// Mean cross-entropy of softmax(beta * h) against integer targets.
template <typename Scalar>
struct SoftmaxLoss {
  double loss = 0.0;
  Mat<Scalar> dlogits;  // d loss / d h
  double dbeta = 0.0;   // d loss / d beta
};

template <typename Scalar>
SoftmaxLoss<Scalar> softmax_cross_entropy(const Mat<Scalar>& logits, std::span<const int> targets, double beta,
                                          bool want_grad = true) {
  const Eigen::Index B = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != B) throw DataError("softmax_cross_entropy: target count mismatch");
  SoftmaxLoss<Scalar> out;
  if (want_grad) out.dlogits.resize(logits.rows(), B);
  const Scalar b = static_cast<Scalar>(beta);
  double total = 0.0, dbeta = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto h = logits.col(j);
    const Scalar mx = (b * h).maxCoeff();
    Vec<Scalar> e = ((b * h).array() - mx).exp().matrix();
    const Scalar s = e.sum();
    const int y = targets[j];
    if (y < 0 || y >= logits.rows()) throw DataError("target bin out of range");
    total += -(static_cast<double>(b * h(y) - mx) - std::log(static_cast<double>(s)));
    if (want_grad) {
      Vec<Scalar> prob = e / s;
      dbeta += static_cast<double>(prob.dot(h)) - static_cast<double>(h(y));
      prob(y) -= Scalar(1);
      out.dlogits.col(j) = prob * (b / static_cast<Scalar>(B));
    }
  }
  out.loss = total / static_cast<double>(B);
  out.dbeta = dbeta / static_cast<double>(B);
  return out;
}

/// Log-probability of each target under softmax(beta * h).
template <typename Scalar>
std::vector<double> target_log_probs(const Mat<Scalar>& logits, std::span<const int> targets, double beta) {
  std::vector<double> out(targets.size());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Vec<double> z = logits.col(j).template cast<double>() * beta;
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    out[j] = z(targets[j]) - lse;
  }
  return out;
}

/// Adam over every tensor of an MlpParams (log_beta excluded).
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

  void step(MlpParams<Scalar>& p, const MlpParams<Scalar>& g) {
    if (m_.weights.empty()) {
      m_ = p.zeros_like();
      v_ = p.zeros_like();
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    const auto alpha = static_cast<Scalar>(lr_ * std::sqrt(c2) / c1);
    const auto b1 = static_cast<Scalar>(b1_), b2 = static_cast<Scalar>(b2_);
    const auto eps = static_cast<Scalar>(eps_ * std::sqrt(c2));
    auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
      m = b1 * m + (Scalar(1) - b1) * grad;
      v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
      param.array() -= alpha * m.array() / (v.array().sqrt() + eps);
    };
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      update(p.weights[l], m_.weights[l], v_.weights[l], g.weights[l]);
      update(p.biases[l], m_.biases[l], v_.biases[l], g.biases[l]);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  MlpParams<Scalar> m_, v_;
};

/// Scalar Adam, used for log(beta).
class ScalarAdam {
 public:
  explicit ScalarAdam(double lr) : lr_(lr) {}
  double step(double x, double grad) {
    ++t_;
    m_ = 0.9 * m_ + 0.1 * grad;
    v_ = 0.999 * v_ + 0.001 * grad * grad;
    const double mh = m_ / (1.0 - std::pow(0.9, t_));
    const double vh = v_ / (1.0 - std::pow(0.999, t_));
    return x - lr_ * mh / (std::sqrt(vh) + 1e-8);
  }

 private:
  double lr_;
  int t_ = 0;
  double m_ = 0.0, v_ = 0.0;
};

// ---------------------------------------------------------------------------
// Conditional model
// ---------------------------------------------------------------------------

/// Rows of (parent values, child bin). Zero inputs means a root node; a constant 1 is fed instead.
struct CpdHistory {
  int num_inputs = 0;
  std::vector<double> inputs;  // row-major, rows x num_inputs
  std::vector<int> targets;

  std::size_t size() const { return targets.size(); }

  void push(std::span<const double> parent_values, int target) {
    if (static_cast<int>(parent_values.size()) != num_inputs) throw DataError("CpdHistory: input width mismatch");
    inputs.insert(inputs.end(), parent_values.begin(), parent_values.end());
    targets.push_back(target);
  }
};

/// Trained network, frozen Fourier frequencies and calibration temperature.
template <typename Scalar = float>
class CalibratedPredictor {
 public:
  CalibratedPredictor() = default;
  CalibratedPredictor(FourierEmbedding<Scalar> embedding, MlpParams<Scalar> params, int num_inputs)
      : embedding_(std::move(embedding)), params_(std::move(params)), num_inputs_(num_inputs) {}

  int num_inputs() const { return num_inputs_; }
  int num_bins() const { return static_cast<int>(params_.weights.back().rows()); }
  double beta() const { return std::exp(static_cast<double>(params_.log_beta)); }
  const MlpParams<Scalar>& params() const { return params_; }
  const FourierEmbedding<Scalar>& embedding() const { return embedding_; }

  /// Raw inputs (row-major, rows x num_inputs) to embedding columns.
  Mat<Scalar> features(std::span<const double> inputs, std::size_t first, std::size_t count) const {
    return embedding_.embed(input_matrix(inputs, num_inputs_, first, count));
  }

  /// Uncalibrated logits h for `count` rows starting at `first`.
  Mat<Scalar> logits(std::span<const double> inputs, std::size_t first, std::size_t count) const {
    return mlp_forward<Scalar>(params_, features(inputs, first, count), 0.0, nullptr, nullptr);
  }

  /// Calibrated output distribution for one input row.
  std::vector<double> distribution(std::span<const double> input_row) const {
    Mat<Scalar> h = logits(input_row, 0, 1);
    Vec<double> z = h.col(0).template cast<double>() * beta();
    const double mx = z.maxCoeff();
    Vec<double> e = (z.array() - mx).exp().matrix();
    e /= e.sum();
    return {e.data(), e.data() + e.size()};
  }

  static Mat<Scalar> input_matrix(std::span<const double> inputs, int num_inputs, std::size_t first,
                                  std::size_t count) {
    if (num_inputs == 0) return Mat<Scalar>::Ones(1, static_cast<Eigen::Index>(count));
    if (inputs.size() < (first + count) * static_cast<std::size_t>(num_inputs))
      throw DataError("input buffer too short");
    Mat<Scalar> x(num_inputs, static_cast<Eigen::Index>(count));
    for (std::size_t j = 0; j < count; ++j)
      for (int i = 0; i < num_inputs; ++i)
        x(i, static_cast<Eigen::Index>(j)) = static_cast<Scalar>(inputs[(first + j) * num_inputs + i]);
    return x;
  }

 private:
  FourierEmbedding<Scalar> embedding_;
  MlpParams<Scalar> params_;
  int num_inputs_ = 0;
};

/// Per-row calibrated log-probability of the true bin; never mutates the predictor.
template <typename Scalar>
std::vector<double> eval_block(const CalibratedPredictor<Scalar>& predictor, const CpdHistory& rows,
                               std::size_t chunk = 512) {
  if (rows.num_inputs != predictor.num_inputs()) throw DataError("eval_block: input width mismatch");
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t first = 0; first < rows.size(); first += chunk) {
    const std::size_t count = std::min(chunk, rows.size() - first);
    const Mat<Scalar> h = predictor.logits(rows.inputs, first, count);
    auto lp = target_log_probs<Scalar>(h, std::span(rows.targets).subspan(first, count), predictor.beta());
    out.insert(out.end(), lp.begin(), lp.end());
  }
  return out;
}

struct TrainReport {
  double learning_rate = 0.0;
  int steps = 0;
  double validation_loss = 0.0;  // calibrated, nats per row, at the returned checkpoint
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> run_seeds;  // one per candidate learning rate
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;

  bool operator==(const TrainReport&) const = default;
};

template <typename Scalar = float>
struct TrainedCpd {
  CalibratedPredictor<Scalar> predictor;
  TrainReport report;
};

/// Rows reserved for calibration: the last fraction of the prefix, at least 1, at most max_validation_rows,
/// always leaving one training row.
inline std::size_t validation_size(std::size_t rows, const MlpCpdConfig& config) {
  if (rows < 2) return 0;
  auto v = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(rows)));
  v = std::clamp<std::size_t>(v, 1, static_cast<std::size_t>(config.max_validation_rows));
  return std::min(v, rows - 1);
}

namespace detail {

template <typename Scalar>
double mean_calibrated_loss(const MlpParams<Scalar>& p, const Mat<Scalar>& features, std::span<const int> targets) {
  const Mat<Scalar> h = mlp_forward<Scalar>(p, features, 0.0, nullptr, nullptr);
  return softmax_cross_entropy<Scalar>(h, targets, std::exp(static_cast<double>(p.log_beta)), false).loss;
}

struct SingleRun {
  double validation_loss;
  int steps;
};

template <typename Scalar>
SingleRun train_single(const CpdHistory& history, std::size_t train_rows, const MlpCpdConfig& cfg, double lr,
                       std::uint64_t seed, CalibratedPredictor<Scalar>& result) {
  Rng rng(seed);
  const int inputs = std::max(history.num_inputs, 1);
  auto embedding = FourierEmbedding<Scalar>::sample(cfg.fourier_features, inputs, cfg.fourier_scale, rng);
  auto params = init_mlp<Scalar>(embedding.output_dim(), cfg.hidden_layers, cfg.hidden_width, cfg.num_bins, rng);

  const std::size_t val_rows = history.size() - train_rows;
  const Mat<Scalar> val_features = embedding.embed(
      CalibratedPredictor<Scalar>::input_matrix(history.inputs, history.num_inputs, train_rows, val_rows));
  const std::span<const int> val_targets = std::span(history.targets).subspan(train_rows, val_rows);

  Adam<Scalar> adam(lr);
  ScalarAdam beta_adam(cfg.beta_learning_rate);
  MlpParams<Scalar> grads = params.zeros_like();
  ForwardCache<Scalar> cache;
  std::uniform_int_distribution<std::size_t> pick_train(0, train_rows - 1);
  std::uniform_int_distribution<std::size_t> pick_val(0, val_rows - 1);

  const auto B = static_cast<std::size_t>(cfg.batch_size);
  Mat<Scalar> x(inputs, static_cast<Eigen::Index>(B));
  std::vector<int> y(B);
  const bool full_val_batch = val_rows <= B;
  Mat<Scalar> vx_sub;
  std::vector<int> vy_sub(full_val_batch ? val_rows : B);

  double best = mean_calibrated_loss(params, val_features, val_targets);
  double reference = best;
  MlpParams<Scalar> best_params = params;
  int stale = 0;
  int step = 0;
  bool stopped = false;
  for (step = 1; step <= cfg.max_steps; ++step) {
    for (std::size_t j = 0; j < B; ++j) {
      const std::size_t r = pick_train(rng);
      if (history.num_inputs == 0) {
        x(0, static_cast<Eigen::Index>(j)) = Scalar(1);
      } else {
        for (int i = 0; i < history.num_inputs; ++i)
          x(i, static_cast<Eigen::Index>(j)) = static_cast<Scalar>(history.inputs[r * history.num_inputs + i]);
      }
      y[j] = history.targets[r];
    }
    const Mat<Scalar> feats = embedding.embed(x);
    const Mat<Scalar> h = mlp_forward<Scalar>(params, feats, cfg.dropout_rate, &rng, &cache);
    const auto ce = softmax_cross_entropy<Scalar>(h, y, 1.0);
    mlp_backward<Scalar>(params, cache, ce.dlogits, grads);
    adam.step(params, grads);

    if (step % cfg.theta_steps_per_beta_step == 0) {
      Mat<Scalar> hv;
      std::span<const int> vy;
      if (full_val_batch) {
        hv = mlp_forward<Scalar>(params, val_features, 0.0, nullptr, nullptr);
        vy = val_targets;
      } else {
        vx_sub.resize(val_features.rows(), static_cast<Eigen::Index>(B));
        for (std::size_t j = 0; j < B; ++j) {
          const std::size_t r = pick_val(rng);
          vx_sub.col(static_cast<Eigen::Index>(j)) = val_features.col(static_cast<Eigen::Index>(r));
          vy_sub[j] = val_targets[r];
        }
        hv = mlp_forward<Scalar>(params, vx_sub, 0.0, nullptr, nullptr);
        vy = vy_sub;
      }
      const double beta = std::exp(static_cast<double>(params.log_beta));
      const auto cal = softmax_cross_entropy<Scalar>(hv, vy, beta);
      // chain rule into log-space
      params.log_beta = static_cast<Scalar>(beta_adam.step(static_cast<double>(params.log_beta), cal.dbeta * beta));
    }

    if (step % cfg.eval_interval == 0 || step == cfg.max_steps) {
      const double loss = mean_calibrated_loss(params, val_features, val_targets);
      if (loss < best) {
        best = loss;
        best_params = params;
      }
      if (loss <= reference - cfg.min_improvement) {
        reference = loss;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        stopped = true;
        break;
      }
    }
  }
  const int steps = stopped ? step : cfg.max_steps;
  result = CalibratedPredictor<Scalar>(std::move(embedding), std::move(best_params), history.num_inputs);
  return {best, steps};
}

}  // namespace detail

/// Fits one CPD per candidate learning rate and keeps the one with the lower calibrated validation loss.
/// The last validation_size() rows of `history` are used only for calibration and early stopping.
template <typename Scalar = float>
TrainedCpd<Scalar> train_cpd(const CpdHistory& history, const MlpCpdConfig& config, std::uint64_t seed) {
  config.validate();
  if (history.size() == 0) throw DataError("train_cpd: empty history");
  const std::size_t val = validation_size(history.size(), config);
  if (val == 0) throw DataError("train_cpd: validation split is empty (need at least 2 rows)");
  for (int t : history.targets)
    if (t < 0 || t >= config.num_bins) throw DataError("train_cpd: target bin out of range");
  const std::size_t train_rows = history.size() - val;

  TrainedCpd<Scalar> best;
  best.report.validation_loss = std::numeric_limits<double>::infinity();
  best.report.seed = seed;
  best.report.train_rows = train_rows;
  best.report.validation_rows = val;
  for (std::size_t k = 0; k < config.candidate_learning_rates.size(); ++k) {
    const double lr = config.candidate_learning_rates[k];
    const std::uint64_t run_seed = derive_seed(seed, {k});
    best.report.run_seeds.push_back(run_seed);
    CalibratedPredictor<Scalar> predictor;
    const auto run = detail::train_single<Scalar>(history, train_rows, config, lr, run_seed, predictor);
    if (run.validation_loss < best.report.validation_loss) {
      best.predictor = std::move(predictor);
      best.report.learning_rate = lr;
      best.report.steps = run.steps;
      best.report.validation_loss = run.validation_loss;
      best.report.beta = best.predictor.beta();
    }
  }
  return best;
}

}  // namespace preqmdl
