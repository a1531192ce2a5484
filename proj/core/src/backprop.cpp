// SPDX-License-Identifier: Apache-2.0
#include "drum/backprop.hpp"

#include <cmath>

#include "drum/error.hpp"

namespace drum {

namespace {

/// Backward through one attention layer. Returns d loss / d layer input and
/// accumulates into grad_keys.
Matrix layer_backward(const AdapterParams& params, Index layer, const LayerTape& tape, const Matrix& keys,
                      const SegmentLayout& layout, const GuidanceConfig& guidance, const Matrix& grad_out,
                      Matrix& grad_keys, AdapterParams& grads) {
  const auto& cfg = params.config();
  const Index hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Matrix grad_x = grad_out;  // residual

  grads.layer(layer, LayerTensor::o_weight).noalias() += tape.attended.transpose() * grad_out;
  grads.layer(layer, LayerTensor::o_bias) += grad_out.colwise().sum();
  const Matrix grad_attended = grad_out * params.layer(layer, LayerTensor::o_weight).transpose();

  Matrix grad_q(tape.q.rows(), tape.q.cols());
  Matrix grad_k(tape.k.rows(), tape.k.cols());
  Matrix grad_v(tape.v.rows(), tape.v.cols());
  for (Index h = 0; h < cfg.n_heads; ++h) {
    const auto& weights = tape.weights[static_cast<std::size_t>(h)];
    const auto& scores = tape.scores[static_cast<std::size_t>(h)];
    const auto dh = grad_attended.middleCols(h * hd, hd);
    const Matrix grad_weights = dh * tape.v.middleCols(h * hd, hd).transpose();
    grad_v.middleCols(h * hd, hd) = weights.transpose() * dh;
    const Matrix grad_scores = attention_weights_backward(layout, scores, weights, grad_weights, guidance) * scale;
    grad_q.middleCols(h * hd, hd) = grad_scores * tape.k.middleCols(h * hd, hd);
    grad_k.middleCols(h * hd, hd) = grad_scores.transpose() * tape.q.middleCols(h * hd, hd);
  }

  grads.layer(layer, LayerTensor::q_weight).noalias() += tape.queries_in.transpose() * grad_q;
  grads.layer(layer, LayerTensor::q_bias) += grad_q.colwise().sum();
  grads.layer(layer, LayerTensor::k_weight).noalias() += keys.transpose() * grad_k;
  grads.layer(layer, LayerTensor::v_weight).noalias() += keys.transpose() * grad_v;
  grads.layer(layer, LayerTensor::v_bias) += grad_v.colwise().sum();
  grad_keys.noalias() += grad_k * params.layer(layer, LayerTensor::k_weight).transpose();
  grad_keys.noalias() += grad_v * params.layer(layer, LayerTensor::v_weight).transpose();

  // Layer norm on the query stream.
  const Matrix grad_queries_in = grad_q * params.layer(layer, LayerTensor::q_weight).transpose();
  grads.layer(layer, LayerTensor::ln_gain) += grad_queries_in.cwiseProduct(tape.normed).colwise().sum();
  grads.layer(layer, LayerTensor::ln_bias) += grad_queries_in.colwise().sum();
  const Matrix grad_normed =
      grad_queries_in.array().rowwise() * params.layer(layer, LayerTensor::ln_gain).row(0).array();
  const double width = static_cast<double>(cfg.d_model);
  const Vector mean_grad = grad_normed.rowwise().sum() / width;
  const Vector mean_proj = grad_normed.cwiseProduct(tape.normed).rowwise().sum() / width;
  const Matrix centered = (grad_normed.colwise() - mean_grad) - (tape.normed.array().colwise() * mean_proj.array()).matrix();
  grad_x += (centered.array().colwise() * tape.inv_std.array()).matrix();
  return grad_x;
}

}  // namespace

void backward(const AdapterParams& params, const AdapterTape& tape, const Matrix& grad_output, AdapterParams& grads) {
  const auto& cfg = params.config();
  if (grads.size() != params.size()) throw DimensionError("backward: gradient buffer has the wrong architecture");
  if (tape.layers.size() != static_cast<std::size_t>(cfg.n_layers)) throw DimensionError("backward: tape incomplete");
  if (grad_output.rows() != tape.query_source.rows() || grad_output.cols() != cfg.d_cond) {
    throw DimensionError("backward: output gradient shape mismatch");
  }

  Matrix grad_stream;
  if (cfg.projected()) {
    grads.post_weight().noalias() += tape.stream.transpose() * grad_output;
    grads.post_bias() += grad_output.colwise().sum();
    grad_stream = grad_output * params.post_weight().transpose();
  } else {
    grad_stream = grad_output;
  }

  Matrix grad_keys = Matrix::Zero(tape.keys.rows(), tape.keys.cols());
  for (Index l = cfg.n_layers - 1; l >= 0; --l) {
    grad_stream = layer_backward(params, l, tape.layers[static_cast<std::size_t>(l)], tape.keys, tape.layout,
                                 tape.guidance, grad_stream, grad_keys, grads);
  }

  if (cfg.projected()) {
    grads.pre_weight().noalias() += tape.query_source.transpose() * grad_stream;
    grads.pre_weight().noalias() += tape.key_source.transpose() * grad_keys;
    grads.pre_bias() += grad_stream.colwise().sum() + grad_keys.colwise().sum();
  }
}

}  // namespace drum
