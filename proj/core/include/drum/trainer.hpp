// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drum/adapter.hpp"
#include "drum/embedding_store.hpp"

namespace drum {

struct TrainConfig {
  Index batch_size = 16;
  double lr_init = 5e-4;
  std::optional<double> lr_floor;  // defaults to lr_init / 100
  Index total_steps = 2000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  bool grad_check = false;
  int threads = 1;

  double floor() const { return lr_floor.value_or(lr_init / 100.0); }
  void validate() const;
};

struct TrainReport {
  std::vector<double> loss;  // batch mean loss per step, before the update
  double train_cosine = 0.0;
  std::optional<double> heldout_cosine;
  std::optional<double> grad_check_error;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  Index steps = 0;
};

/// One supervised reconstruction (or guided) sample.
struct TrainingExample {
  std::string id;
  Matrix queries;     // Q x d_cond
  Matrix conditions;  // concatenated key/value tokens
  SegmentLayout layout;
  GuidanceConfig guidance{0.0, false};
  Matrix target;  // Q x d_cond
};

/// 1 - mean_t cos(output_t, target_t). Throws DegenerateError on a zero-norm
/// row and DimensionError on shape mismatch.
double recon_loss(const Matrix& output, const Matrix& target);

/// d recon_loss / d output.
Matrix recon_loss_grad(const Matrix& output, const Matrix& target);

/// Learning rate at `step` (0-based): floor + (init - floor) * (1 + cos(pi * step / total)) / 2.
double cosine_lr(const TrainConfig& cfg, Index step);

/// uncond rows repeated cyclically (or truncated) to exactly `tokens` rows.
Matrix training_queries(const Matrix& uncond, Index tokens);

/// Reconstruction sample: queries from uncond aligned to the record's
/// token count, the record's condition as the only key/value segment,
/// guidance disabled.
TrainingExample reconstruction_example(const PromptRecord& record, const Matrix& uncond);

/// Mean loss over `batch` (evaluated in order).
double batch_loss(const AdapterParams& params, std::span<const TrainingExample> batch);

/// Mean loss and its gradient. Per-sample gradients are summed in sample
/// order, so the result is bitwise independent of `threads`.
double batch_loss_and_grad(const AdapterParams& params, std::span<const TrainingExample> batch,
                           AdapterParams& grads, int threads = 1);

/// Decoupled-weight-decay Adam.
class AdamW {
 public:
  AdamW(Index size, double beta1, double beta2, double epsilon, double weight_decay);

  void step(std::span<double> params, std::span<const double> grads, double lr);
  Index steps() const { return t_; }

 private:
  double beta1_, beta2_, epsilon_, weight_decay_;
  std::vector<double> m_, v_;
  Index t_ = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  Index checked = 0;
  std::string worst_tensor;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences of loss() against `analytic`, perturbing `point` in
/// place (restored afterwards) one coordinate at a time. Every coordinate is
/// checked when `coordinates` is empty; worst_index is the coordinate.
GradCheckResult finite_difference_check(std::span<double> point, const std::function<double()>& loss,
                                        std::span<const double> analytic, double epsilon,
                                        std::span<const Index> coordinates = {});

/// Compares backward() with central differences of batch_loss, entry by
/// entry: |a - f| / max(|a|, |f|, 1e-8). `max_coordinates` > 0 checks a
/// seeded random subset instead of every parameter.
GradCheckResult grad_check(const AdapterParams& params, std::span<const TrainingExample> batch, double epsilon,
                           Index max_coordinates = 0, std::uint64_t seed = 0);

struct TrainResult {
  AdapterParams params;
  TrainReport report;
};

/// Minibatch reconstruction training with AdamW and cosine annealing.
/// Batches come from a seeded shuffle per epoch; the trailing partial batch
/// is dropped. Throws NumericError naming the step and batch ids when the
/// loss turns non-finite.
TrainResult train(const EmbeddingCorpus& corpus, AdapterParams init, const TrainConfig& cfg,
                  const EmbeddingCorpus* heldout = nullptr);

/// Mean per-token reconstruction cosine over every record of `corpus`.
double reconstruction_cosine(const AdapterParams& params, const EmbeddingCorpus& corpus);

}  // namespace drum
