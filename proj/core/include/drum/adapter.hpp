// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drum/embedding_store.hpp"
#include "drum/guidance.hpp"
#include "drum/tensor.hpp"

namespace drum {

/// Architecture of the conditioning adapter: a stack of pre-norm
/// cross-attention layers with residual connections and no feed-forward
/// sublayers or positional encodings. When d_model != d_cond a linear map
/// projects queries and conditions into d_model before the stack and a
/// second one maps the result back to d_cond.
struct AdapterConfig {
  Index d_cond = 64;
  Index d_model = 64;
  Index n_heads = 4;
  Index n_layers = 10;
  double ln_eps = 1e-5;

  bool projected() const { return d_model != d_cond; }
  Index head_dim() const { return d_model / n_heads; }
  void validate() const;
};

/// Tensors of one attention layer, in checkpoint order.
enum class LayerTensor : int {
  ln_gain,
  ln_bias,
  q_weight,
  q_bias,
  k_weight,  // keys carry no bias: it shifts every score in a row equally
  v_weight,
  v_bias,
  o_weight,
  o_bias,
  count,
};

struct TensorSpec {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  Index offset = 0;
};

/// All learnable tensors in one flat buffer. Weights act on row vectors
/// (y = x W + b) and have shape d_in x d_out; biases are 1 x d_out.
///
/// Fixed order: [pre.weight, pre.bias] when projected; then per layer
/// ln.gain, ln.bias, q.weight, q.bias, k.weight, v.weight, v.bias,
/// o.weight, o.bias; then [post.weight, post.bias] when projected.
class AdapterParams {
 public:
  AdapterParams() = default;
  /// Zero-initialized parameters for `config`.
  explicit AdapterParams(const AdapterConfig& config);

  /// Fan-based uniform init U(-sqrt(6 / (fan_in + fan_out)), +...) for
  /// weights, zero biases, unit layer-norm gains.
  static AdapterParams initialize(const AdapterConfig& config, std::uint64_t seed);

  const AdapterConfig& config() const { return config_; }
  const std::vector<TensorSpec>& tensors() const { return specs_; }
  Index size() const { return static_cast<Index>(values_.size()); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  MatrixMap tensor(std::size_t id);
  ConstMatrixMap tensor(std::size_t id) const;
  MatrixMap layer(Index layer, LayerTensor which);
  ConstMatrixMap layer(Index layer, LayerTensor which) const;
  MatrixMap pre_weight() { return tensor(0); }
  MatrixMap pre_bias() { return tensor(1); }
  ConstMatrixMap pre_weight() const { return tensor(0); }
  ConstMatrixMap pre_bias() const { return tensor(1); }
  MatrixMap post_weight() { return tensor(specs_.size() - 2); }
  MatrixMap post_bias() { return tensor(specs_.size() - 1); }
  ConstMatrixMap post_weight() const { return tensor(specs_.size() - 2); }
  ConstMatrixMap post_bias() const { return tensor(specs_.size() - 1); }

  void set_zero();
  bool all_finite() const;
  bool operator==(const AdapterParams& other) const;

 private:
  std::size_t layer_tensor_id(Index layer, LayerTensor which) const;

  AdapterConfig config_;
  std::vector<TensorSpec> specs_;
  std::vector<double> values_;
};

/// Intermediates of one layer kept for the reverse pass.
struct LayerTape {
  Matrix input;     // residual stream entering the layer
  Matrix normed;    // (input - mean) / std, before gain/bias
  Vector inv_std;
  Matrix queries_in;  // layer-normed queries fed to the q projection
  Matrix q, k, v;
  std::vector<Matrix> scores;   // per head, Q x T
  std::vector<Matrix> weights;  // per head, Q x T
  Matrix attended;              // concatenated head outputs, Q x d_model
};

struct AdapterTape {
  Matrix query_source;  // queries as given (d_cond)
  Matrix key_source;    // concatenated conditions as given (d_cond)
  Matrix keys;          // conditions after pre projection (d_model)
  std::vector<LayerTape> layers;
  Matrix stream;  // final residual stream before post projection
  SegmentLayout layout;
  GuidanceConfig guidance;
};

/// Cross-attention stack on raw matrices.
///   queries:    Q x d_cond
///   conditions: T x d_cond, segments concatenated per `layout`
/// Returns Q x d_cond. When `tape` is given it receives every intermediate.
Matrix run_adapter(const AdapterParams& params, const Matrix& queries, const Matrix& conditions,
                   const SegmentLayout& layout, const GuidanceConfig& guidance, AdapterTape* tape = nullptr);

/// One layer on d_model-wide inputs: pre-norm on queries, per-head scaled
/// dot-product scores (1 / sqrt(head_dim)), segment-aware weights, weighted
/// value sum, output projection, residual from the layer input.
Matrix attention_layer(const AdapterParams& params, Index layer, const Matrix& x, const Matrix& keys,
                       const SegmentLayout& layout, const GuidanceConfig& guidance, LayerTape* tape = nullptr);

struct PersonalizationRequest {
  PromptRecord target;
  std::vector<PromptRecord> references;
  GuidanceConfig guidance;
  Matrix uncond;
};

struct PersonalizedCondition {
  Matrix condition;                       // uncond tokens x d_cond
  std::optional<Vector> class_embedding;  // present when the target has one
};

/// Builds the key layout: references in request order, target last.
SegmentLayout request_layout(const PersonalizationRequest& request);

/// Queries come from uncond, keys/values from [references | target].
PersonalizedCondition forward(const AdapterParams& params, const PersonalizationRequest& request);

}  // namespace drum
