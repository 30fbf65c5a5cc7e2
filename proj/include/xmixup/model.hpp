#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "xmixup/linalg.hpp"
#include "xmixup/rng.hpp"

namespace xmixup {

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out

  std::size_t inputs() const noexcept { return weights.cols(); }
  std::size_t outputs() const noexcept { return weights.rows(); }

  bool operator==(const Layer&) const = default;
};

/// Feed-forward feature extractor (ReLU after every layer) followed by a
/// linear head over the label space.
struct ModelParams {
  std::vector<Layer> extractor;
  Layer head;

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::size_t label_count() const noexcept { return head.outputs(); }

  /// Throws ArgumentError on broken shape chaining, NumericError on non-finite
  /// entries.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

/// A flat view of one parameter tensor. `decays` is false for biases.
struct ParamBlock {
  std::span<double> values;
  bool decays;
};
struct ConstParamBlock {
  std::span<const double> values;
  bool decays;
};

/// Parameter tensors in a fixed order: extractor (W, b) pairs, then head.
std::vector<ParamBlock> param_blocks(ModelParams& params);
std::vector<ConstParamBlock> param_blocks(const ModelParams& params);

ModelParams zeros_like(const ModelParams& params);

/// Probability vector over the label space.
struct SoftLabel {
  Vector p;

  static SoftLabel one_hot(std::size_t labels, std::size_t index);
  /// Nonnegative entries summing to 1 within 1e-9; throws ArgumentError.
  void validate() const;

  bool operator==(const SoftLabel&) const = default;
};

/// Half-open range of logits that take part in the softmax for an example.
/// Logits outside it receive no gradient.
struct LogitRange {
  std::size_t begin = 0;
  std::size_t end = std::numeric_limits<std::size_t>::max();
};

struct Example {
  Vector x;
  SoftLabel y;
  LogitRange active{};
};

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int iterations = 3000;
  int lr_drop_at = 2000;
  double lr_drop_factor = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ForwardResult {
  Vector features;
  Vector logits;
};

Layer init_layer(std::size_t inputs, std::size_t outputs, Rng& rng);

/// Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)), zero biases.
ModelParams init_model(std::size_t dim, std::span<const std::size_t> hidden,
                       std::size_t labels, std::uint64_t seed);

ForwardResult forward(const ModelParams& params, std::span<const double> x);
Vector extract_features(const ModelParams& params, std::span<const double> x);

struct SoftmaxLoss {
  double loss = 0.0;
  Vector dlogits;  // d loss / d logits, zero outside the active range
};

/// -sum_k p_k log softmax(logits)_k restricted to `active`, with max
/// subtraction. Label mass outside the active range is an error.
SoftmaxLoss softmax_cross_entropy(std::span<const double> logits,
                                  const SoftLabel& target, LogitRange active = {});

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grads;
};

/// Mean soft-target cross-entropy over the batch and its exact gradient.
LossAndGrad loss_and_grad(const ModelParams& params, std::span<const Example> batch);
double batch_loss(const ModelParams& params, std::span<const Example> batch);

/// Learning rate in effect at iteration `iter` (0-based).
double effective_lr(const TrainConfig& cfg, int iter);

/// v <- momentum v - lr (g + wd w); w <- w + v. Biases are not decayed.
void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity,
              const TrainConfig& cfg, int iter);

/// Binary checkpoint: "XMXCKPT1", u64 extractor layer count, then for each
/// layer and the head: u64 rows, u64 cols, rows*cols weights (row-major),
/// rows biases. All integers and IEEE-754 doubles little-endian.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace xmixup
