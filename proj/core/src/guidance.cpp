// SPDX-License-Identifier: Apache-2.0
#include "drum/guidance.hpp"

#include <cmath>
#include <string>

#include "drum/error.hpp"

namespace drum {

SegmentLayout::SegmentLayout(std::vector<Segment> segments) : segments_(std::move(segments)) {
  std::size_t targets = 0;
  for (std::size_t g = 0; g < segments_.size(); ++g) {
    const auto& seg = segments_[g];
    if (seg.tokens < 1) throw DimensionError("segment " + std::to_string(g) + " has no tokens");
    if (seg.role == SegmentRole::target) {
      ++targets;
      target_ = g;
    } else if (!(seg.preference >= 0.0) || !std::isfinite(seg.preference)) {
      throw ValidationError("reference preferences must be finite and >= 0");
    }
    offsets_.push_back(total_);
    total_ += seg.tokens;
  }
  if (targets != 1) throw ValidationError("segment layout needs exactly one target segment");
}

SegmentLayout SegmentLayout::single(Index tokens) {
  return SegmentLayout({Segment{SegmentRole::target, 1.0, tokens}});
}

namespace {

void check_scores(const SegmentLayout& layout, const Matrix& scores) {
  if (scores.cols() != layout.total_tokens()) throw DimensionError("score columns != total segment tokens");
  if (scores.array().isNaN().any()) throw ValidationError("attention scores contain NaN");
}

void check_alpha(const GuidanceConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
}

/// In-place softmax of each row of a block, with max subtraction.
template <typename Block>
void softmax_rows(Block&& block) {
  for (Index r = 0; r < block.rows(); ++r) {
    auto row = block.row(r);
    const double peak = row.maxCoeff();
    row = (row.array() - peak).exp();
    row /= row.sum();
  }
}

}  // namespace

std::vector<double> segment_masses(const SegmentLayout& layout, const GuidanceConfig& cfg) {
  check_alpha(cfg);
  double pref_total = 0.0;
  for (const auto& seg : layout.segments()) {
    if (seg.role == SegmentRole::reference) pref_total += seg.preference;
  }
  if (cfg.alpha > 0.0 && !(pref_total > 0.0)) {
    throw DegenerateError("guidance: alpha > 0 but references carry no preference mass");
  }
  std::vector<double> masses;
  masses.reserve(layout.segments().size());
  for (const auto& seg : layout.segments()) {
    if (seg.role == SegmentRole::target) {
      masses.push_back(1.0 - cfg.alpha);
    } else {
      masses.push_back(cfg.alpha > 0.0 ? cfg.alpha * seg.preference / pref_total : 0.0);
    }
  }
  return masses;
}

Matrix guided_weights(const SegmentLayout& layout, const Matrix& scores, const GuidanceConfig& cfg) {
  check_scores(layout, scores);
  const auto masses = segment_masses(layout, cfg);
  Matrix weights = scores;
  for (std::size_t g = 0; g < layout.segments().size(); ++g) {
    auto block = weights.middleCols(layout.offset(g), layout.segments()[g].tokens);
    softmax_rows(block);
    block *= masses[g];
  }
  return weights;
}

Matrix guided_weights(const SegmentedScores& scores, const GuidanceConfig& cfg) {
  return guided_weights(scores.layout, scores.scores, cfg);
}

Matrix fused_weights(const Matrix& scores) {
  if (scores.array().isNaN().any()) throw ValidationError("attention scores contain NaN");
  Matrix weights = scores;
  softmax_rows(weights);
  return weights;
}

Matrix fused_weights(const SegmentedScores& scores) {
  check_scores(scores.layout, scores.scores);
  return fused_weights(scores.scores);
}

Matrix attention_weights(const SegmentLayout& layout, const Matrix& scores, const GuidanceConfig& cfg) {
  if (cfg.enabled) return guided_weights(layout, scores, cfg);
  check_scores(layout, scores);
  return fused_weights(scores);
}

Matrix attention_weights_backward(const SegmentLayout& layout, const Matrix& scores, const Matrix& weights,
                                  const Matrix& grad_weights, const GuidanceConfig& cfg) {
  // For w = m * softmax(s) over a block: ds_j = w_j * (dw_j - sum_k softmax_k dw_k).
  auto block_backward = [](const auto& w, const auto& dw, double mass, auto&& ds) {
    for (Index r = 0; r < w.rows(); ++r) {
      if (mass == 0.0) {
        ds.row(r).setZero();
        continue;
      }
      const double inner = w.row(r).dot(dw.row(r)) / mass;
      ds.row(r) = w.row(r).array() * (dw.row(r).array() - inner);
    }
  };

  Matrix grad_scores(scores.rows(), scores.cols());
  if (!cfg.enabled) {
    block_backward(weights, grad_weights, 1.0, grad_scores);
    return grad_scores;
  }
  const auto masses = segment_masses(layout, cfg);
  for (std::size_t g = 0; g < layout.segments().size(); ++g) {
    const Index off = layout.offset(g);
    const Index len = layout.segments()[g].tokens;
    block_backward(weights.middleCols(off, len), grad_weights.middleCols(off, len), masses[g],
                   grad_scores.middleCols(off, len));
  }
  return grad_scores;
}

Vector guide_class_embeddings(std::span<const ClassInput> inputs, const GuidanceConfig& cfg) {
  const ClassInput* target = nullptr;
  std::vector<Segment> segments;
  for (const auto& in : inputs) {
    if (in.role == SegmentRole::target) {
      if (target) throw ValidationError("class guidance: more than one target");
      target = &in;
    }
    segments.push_back({in.role, in.preference, 1});
  }
  if (!target) throw ValidationError("class guidance: missing target");
  for (const auto& in : inputs) {
    if (in.embedding.size() != target->embedding.size()) throw DimensionError("class guidance: length mismatch");
  }

  Vector out = Vector::Zero(target->embedding.size());
  if (!cfg.enabled) {
    for (const auto& in : inputs) out += in.embedding;
    return out / static_cast<double>(inputs.size());
  }
  const auto masses = segment_masses(SegmentLayout(std::move(segments)), cfg);
  for (std::size_t g = 0; g < inputs.size(); ++g) {
    if (masses[g] != 0.0) out += masses[g] * inputs[g].embedding;
  }
  return out;
}

}  // namespace drum
