// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "drum/tensor.hpp"

namespace drum {

enum class SegmentRole { target, reference };

/// One condition's slice of the concatenated key axis.
struct Segment {
  SegmentRole role = SegmentRole::target;
  double preference = 1.0;
  Index tokens = 0;
};

/// Segments laid out back to back along the key/token axis.
class SegmentLayout {
 public:
  SegmentLayout() = default;
  explicit SegmentLayout(std::vector<Segment> segments);

  /// Single target segment of `tokens` tokens.
  static SegmentLayout single(Index tokens);

  const std::vector<Segment>& segments() const { return segments_; }
  Index offset(std::size_t segment) const { return offsets_[segment]; }
  Index total_tokens() const { return total_; }
  std::size_t target_segment() const { return target_; }
  std::size_t reference_count() const { return segments_.size() - 1; }

 private:
  std::vector<Segment> segments_;
  std::vector<Index> offsets_;
  Index total_ = 0;
  std::size_t target_ = 0;
};

struct GuidanceConfig {
  double alpha = 0.3;    // personalization degree, [0, 1]
  bool enabled = true;   // false routes through the joint softmax
};

/// Raw scaled dot-product scores (Q x total_tokens) plus their segmentation.
struct SegmentedScores {
  SegmentLayout layout;
  Matrix scores;
};

/// Per-segment softmax with mass split between target and references:
///   target token j:       (1 - alpha) * softmax_target(s)_j
///   reference token j, g: alpha * softmax_g(s)_j * p_g / sum_h p_h
/// Every row sums to 1. Throws DegenerateError when alpha > 0 and the
/// references carry no preference mass, ValidationError on NaN scores or
/// alpha outside [0, 1].
Matrix guided_weights(const SegmentedScores& scores, const GuidanceConfig& cfg);
Matrix guided_weights(const SegmentLayout& layout, const Matrix& scores, const GuidanceConfig& cfg);

/// Single softmax over the whole concatenated token axis; alpha and p unused.
Matrix fused_weights(const SegmentedScores& scores);
Matrix fused_weights(const Matrix& scores);

/// guided_weights when cfg.enabled, fused_weights otherwise.
Matrix attention_weights(const SegmentLayout& layout, const Matrix& scores, const GuidanceConfig& cfg);

/// Vector-Jacobian product of attention_weights: d loss / d scores given
/// d loss / d weights. `weights` must be the forward output for `scores`.
Matrix attention_weights_backward(const SegmentLayout& layout, const Matrix& scores, const Matrix& weights,
                                  const Matrix& grad_weights, const GuidanceConfig& cfg);

/// Mass assigned to each segment: 1 - alpha for the target and
/// alpha * p_g / sum p for reference g. Validates like guided_weights.
std::vector<double> segment_masses(const SegmentLayout& layout, const GuidanceConfig& cfg);

struct ClassInput {
  SegmentRole role = SegmentRole::reference;
  double preference = 1.0;
  Vector embedding;
};

/// Class embeddings behave as one-token segments, whose softmax is 1:
///   guided: (1 - alpha) * target + alpha * sum_g (p_g / sum_h p_h) * ref_g
///   fused:  plain mean over target and references (joint softmax over
///           equal scores), independent of alpha and p.
Vector guide_class_embeddings(std::span<const ClassInput> inputs, const GuidanceConfig& cfg);

}  // namespace drum
