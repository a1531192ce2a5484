// SPDX-License-Identifier: Apache-2.0
#include "drum/adapter.hpp"

#include <cmath>

#include "drum/error.hpp"
#include "drum/rng.hpp"

namespace drum {

void AdapterConfig::validate() const {
  if (d_cond < 1 || d_model < 1 || n_heads < 1 || n_layers < 1) {
    throw ConfigError("adapter dimensions, heads and layers must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (!(ln_eps > 0.0)) throw ConfigError("layer-norm epsilon must be positive");
}

AdapterParams::AdapterParams(const AdapterConfig& config) : config_(config) {
  config_.validate();
  const Index dc = config_.d_cond;
  const Index dm = config_.d_model;
  Index offset = 0;
  auto add = [&](std::string name, Index rows, Index cols) {
    specs_.push_back({std::move(name), rows, cols, offset});
    offset += rows * cols;
  };
  if (config_.projected()) {
    add("pre.weight", dc, dm);
    add("pre.bias", 1, dm);
  }
  for (Index l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "ln.gain", 1, dm);
    add(p + "ln.bias", 1, dm);
    add(p + "q.weight", dm, dm);
    add(p + "q.bias", 1, dm);
    add(p + "k.weight", dm, dm);
    add(p + "v.weight", dm, dm);
    add(p + "v.bias", 1, dm);
    add(p + "o.weight", dm, dm);
    add(p + "o.bias", 1, dm);
  }
  if (config_.projected()) {
    add("post.weight", dm, dc);
    add("post.bias", 1, dc);
  }
  values_.assign(static_cast<std::size_t>(offset), 0.0);
}

AdapterParams AdapterParams::initialize(const AdapterConfig& config, std::uint64_t seed) {
  AdapterParams params(config);
  Rng rng(seed);
  for (std::size_t id = 0; id < params.specs_.size(); ++id) {
    const auto& spec = params.specs_[id];
    auto t = params.tensor(id);
    if (spec.name.ends_with(".gain")) {
      t.setOnes();
    } else if (spec.rows > 1) {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }
  return params;
}

std::size_t AdapterParams::layer_tensor_id(Index layer, LayerTensor which) const {
  const std::size_t base = config_.projected() ? 2 : 0;
  return base + static_cast<std::size_t>(layer) * static_cast<std::size_t>(LayerTensor::count) +
         static_cast<std::size_t>(which);
}

MatrixMap AdapterParams::tensor(std::size_t id) {
  const auto& s = specs_.at(id);
  return MatrixMap(values_.data() + s.offset, s.rows, s.cols);
}

ConstMatrixMap AdapterParams::tensor(std::size_t id) const {
  const auto& s = specs_.at(id);
  return ConstMatrixMap(values_.data() + s.offset, s.rows, s.cols);
}

MatrixMap AdapterParams::layer(Index layer, LayerTensor which) { return tensor(layer_tensor_id(layer, which)); }

ConstMatrixMap AdapterParams::layer(Index layer, LayerTensor which) const {
  return tensor(layer_tensor_id(layer, which));
}

void AdapterParams::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

bool AdapterParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool AdapterParams::operator==(const AdapterParams& other) const {
  const auto& a = config_;
  const auto& b = other.config_;
  return a.d_cond == b.d_cond && a.d_model == b.d_model && a.n_heads == b.n_heads && a.n_layers == b.n_layers &&
         a.ln_eps == b.ln_eps && values_ == other.values_;
}

Matrix attention_layer(const AdapterParams& params, Index layer, const Matrix& x, const Matrix& keys,
                       const SegmentLayout& layout, const GuidanceConfig& guidance, LayerTape* tape) {
  const auto& cfg = params.config();
  if (x.cols() != cfg.d_model || keys.cols() != cfg.d_model) throw DimensionError("attention_layer: width != d_model");
  if (keys.rows() != layout.total_tokens()) throw DimensionError("attention_layer: key rows != segment tokens");

  const Vector mean = x.rowwise().mean();
  const Matrix centered = x.colwise() - mean;
  const Vector inv_std =
      ((centered.array().square().rowwise().sum() / static_cast<double>(x.cols())) + cfg.ln_eps).rsqrt().matrix();
  Matrix normed = centered.array().colwise() * inv_std.array();
  const auto gain = params.layer(layer, LayerTensor::ln_gain);
  const auto bias = params.layer(layer, LayerTensor::ln_bias);
  Matrix queries_in = (normed.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();

  Matrix q = (queries_in * params.layer(layer, LayerTensor::q_weight)).rowwise() +
             params.layer(layer, LayerTensor::q_bias).row(0);
  Matrix k = keys * params.layer(layer, LayerTensor::k_weight);
  Matrix v = (keys * params.layer(layer, LayerTensor::v_weight)).rowwise() +
             params.layer(layer, LayerTensor::v_bias).row(0);

  const Index hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix attended(x.rows(), cfg.d_model);
  if (tape) {
    tape->scores.clear();
    tape->weights.clear();
  }
  for (Index h = 0; h < cfg.n_heads; ++h) {
    Matrix scores = (q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose()) * scale;
    Matrix weights = attention_weights(layout, scores, guidance);
    attended.middleCols(h * hd, hd) = weights * v.middleCols(h * hd, hd);
    if (tape) {
      tape->scores.push_back(std::move(scores));
      tape->weights.push_back(std::move(weights));
    }
  }

  Matrix out = x + ((attended * params.layer(layer, LayerTensor::o_weight)).rowwise() +
                    params.layer(layer, LayerTensor::o_bias).row(0));
  if (tape) {
    tape->input = x;
    tape->normed = std::move(normed);
    tape->inv_std = inv_std;
    tape->queries_in = std::move(queries_in);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->attended = std::move(attended);
  }
  return out;
}

Matrix run_adapter(const AdapterParams& params, const Matrix& queries, const Matrix& conditions,
                   const SegmentLayout& layout, const GuidanceConfig& guidance, AdapterTape* tape) {
  const auto& cfg = params.config();
  if (queries.cols() != cfg.d_cond || conditions.cols() != cfg.d_cond) {
    throw DimensionError("adapter: inputs must have d_cond=" + std::to_string(cfg.d_cond) + " columns");
  }
  if (queries.rows() < 1) throw DimensionError("adapter: no query tokens");
  if (conditions.rows() != layout.total_tokens()) throw DimensionError("adapter: condition rows != segment tokens");

  Matrix stream;
  Matrix keys;
  if (cfg.projected()) {
    stream = (queries * params.pre_weight()).rowwise() + params.pre_bias().row(0);
    keys = (conditions * params.pre_weight()).rowwise() + params.pre_bias().row(0);
  } else {
    stream = queries;
    keys = conditions;
  }

  if (tape) {
    tape->layers.assign(static_cast<std::size_t>(cfg.n_layers), LayerTape{});
    tape->layout = layout;
    tape->guidance = guidance;
  }
  for (Index l = 0; l < cfg.n_layers; ++l) {
    stream = attention_layer(params, l, stream, keys, layout, guidance,
                             tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr);
  }

  Matrix out = cfg.projected() ? Matrix((stream * params.post_weight()).rowwise() + params.post_bias().row(0))
                               : stream;
  if (tape) {
    tape->query_source = queries;
    tape->key_source = conditions;
    tape->keys = std::move(keys);
    tape->stream = std::move(stream);
  }
  return out;
}

SegmentLayout request_layout(const PersonalizationRequest& request) {
  std::vector<Segment> segments;
  for (const auto& ref : request.references) {
    segments.push_back({SegmentRole::reference, ref.preference, ref.tokens()});
  }
  segments.push_back({SegmentRole::target, 1.0, request.target.tokens()});
  return SegmentLayout(std::move(segments));
}

PersonalizedCondition forward(const AdapterParams& params, const PersonalizationRequest& request) {
  const Index d_cond = params.config().d_cond;
  Index total = 0;
  for (const auto& ref : request.references) {
    if (ref.condition.cols() != d_cond) throw DimensionError("reference '" + ref.id + "' width != d_cond");
    total += ref.tokens();
  }
  if (request.target.condition.cols() != d_cond) throw DimensionError("target width != d_cond");
  total += request.target.tokens();

  Matrix conditions(total, d_cond);
  Index row = 0;
  for (const auto& ref : request.references) {
    conditions.middleRows(row, ref.tokens()) = ref.condition;
    row += ref.tokens();
  }
  conditions.middleRows(row, request.target.tokens()) = request.target.condition;

  PersonalizedCondition out;
  out.condition = run_adapter(params, request.uncond, conditions, request_layout(request), request.guidance);

  if (request.target.class_embedding) {
    std::vector<ClassInput> inputs;
    for (const auto& ref : request.references) {
      if (!ref.class_embedding) throw ValidationError("reference '" + ref.id + "' lacks a class embedding");
      inputs.push_back({SegmentRole::reference, ref.preference, *ref.class_embedding});
    }
    inputs.push_back({SegmentRole::target, 1.0, *request.target.class_embedding});
    out.class_embedding = guide_class_embeddings(inputs, request.guidance);
  }
  return out;
}

}  // namespace drum
