// SPDX-License-Identifier: Apache-2.0
#include "drum/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "drum/backprop.hpp"
#include "drum/error.hpp"
#include "drum/parallel.hpp"
#include "drum/rng.hpp"

namespace drum {

void TrainConfig::validate() const {
  if (batch_size < 1 || total_steps < 1) throw ConfigError("batch_size and total_steps must be positive");
  if (!(lr_init >= 0.0) || !(floor() >= 0.0) || floor() > lr_init) {
    throw ConfigError("learning rates must satisfy 0 <= floor <= lr_init");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(weight_decay >= 0.0 && weight_decay < 1.0)) throw ConfigError("weight decay must be in [0, 1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

double recon_loss(const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw DimensionError("recon_loss: output and target shapes differ");
  }
  if (output.rows() == 0) throw DimensionError("recon_loss: no tokens");
  double total = 0.0;
  for (Index t = 0; t < output.rows(); ++t) {
    const double no = output.row(t).norm();
    const double nt = target.row(t).norm();
    if (no == 0.0 || nt == 0.0) throw DegenerateError("recon_loss: zero-norm token " + std::to_string(t));
    total += output.row(t).dot(target.row(t)) / (no * nt);
  }
  return 1.0 - total / static_cast<double>(output.rows());
}

Matrix recon_loss_grad(const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw DimensionError("recon_loss_grad: output and target shapes differ");
  }
  const double inv_tokens = 1.0 / static_cast<double>(output.rows());
  Matrix grad(output.rows(), output.cols());
  for (Index t = 0; t < output.rows(); ++t) {
    const double no = output.row(t).norm();
    const double nt = target.row(t).norm();
    if (no == 0.0 || nt == 0.0) throw DegenerateError("recon_loss_grad: zero-norm token " + std::to_string(t));
    const double cos = output.row(t).dot(target.row(t)) / (no * nt);
    // d cos / d o = t / (|o||t|) - cos * o / |o|^2
    grad.row(t) = -inv_tokens * (target.row(t) / (no * nt) - cos * output.row(t) / (no * no));
  }
  return grad;
}

double cosine_lr(const TrainConfig& cfg, Index step) {
  const double progress = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.floor() + 0.5 * (cfg.lr_init - cfg.floor()) * (1.0 + std::cos(std::numbers::pi * progress));
}

Matrix training_queries(const Matrix& uncond, Index tokens) {
  if (uncond.rows() < 1) throw DimensionError("uncond has no tokens");
  Matrix q(tokens, uncond.cols());
  for (Index t = 0; t < tokens; ++t) q.row(t) = uncond.row(t % uncond.rows());
  return q;
}

TrainingExample reconstruction_example(const PromptRecord& record, const Matrix& uncond) {
  TrainingExample ex;
  ex.id = record.id;
  ex.queries = training_queries(uncond, record.tokens());
  ex.conditions = record.condition;
  ex.layout = SegmentLayout::single(record.tokens());
  ex.target = record.condition;
  return ex;
}

double batch_loss(const AdapterParams& params, std::span<const TrainingExample> batch) {
  if (batch.empty()) throw DimensionError("empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    total += recon_loss(run_adapter(params, ex.queries, ex.conditions, ex.layout, ex.guidance), ex.target);
  }
  return total / static_cast<double>(batch.size());
}

double batch_loss_and_grad(const AdapterParams& params, std::span<const TrainingExample> batch,
                           AdapterParams& grads, int threads) {
  if (batch.empty()) throw DimensionError("empty batch");
  const auto n = static_cast<std::int64_t>(batch.size());
  std::vector<double> losses(batch.size());
  std::vector<AdapterParams> per_sample(batch.size(), AdapterParams(params.config()));
  parallel_for(n, threads, [&](std::int64_t i) {
    const auto& ex = batch[static_cast<std::size_t>(i)];
    AdapterTape tape;
    const Matrix out = run_adapter(params, ex.queries, ex.conditions, ex.layout, ex.guidance, &tape);
    losses[static_cast<std::size_t>(i)] = recon_loss(out, ex.target);
    backward(params, tape, recon_loss_grad(out, ex.target), per_sample[static_cast<std::size_t>(i)]);
  });

  grads.set_zero();
  auto acc = grads.values();
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    total += losses[i];
    const auto g = per_sample[i].values();
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
  }
  for (double& v : acc) v *= inv;
  return total * inv;
}

AdamW::AdamW(Index size, double beta1, double beta2, double epsilon, double weight_decay)
    : beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      weight_decay_(weight_decay),
      m_(static_cast<std::size_t>(size), 0.0),
      v_(static_cast<std::size_t>(size), 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double update = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
    params[i] -= lr * (update + weight_decay_ * params[i]);
  }
}

GradCheckResult finite_difference_check(std::span<double> point, const std::function<double()>& loss,
                                        std::span<const double> analytic, double epsilon,
                                        std::span<const Index> coordinates) {
  if (analytic.size() != point.size()) throw DimensionError("finite_difference_check: gradient size != point size");
  std::vector<Index> all;
  if (coordinates.empty()) {
    all.resize(point.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Index>(i);
    coordinates = all;
  }

  GradCheckResult result;
  for (const Index c : coordinates) {
    auto& slot = point[static_cast<std::size_t>(c)];
    const double original = slot;
    slot = original + epsilon;
    const double up = loss();
    slot = original - epsilon;
    const double down = loss();
    slot = original;

    const double a = analytic[static_cast<std::size_t>(c)];
    const double f = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-8});
    ++result.checked;
    if (result.checked == 1 || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = c;
      result.analytic = a;
      result.numeric = f;
    }
  }
  return result;
}

GradCheckResult grad_check(const AdapterParams& params, std::span<const TrainingExample> batch, double epsilon,
                           Index max_coordinates, std::uint64_t seed) {
  AdapterParams analytic(params.config());
  batch_loss_and_grad(params, batch, analytic);

  std::vector<Index> coords(static_cast<std::size_t>(params.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = static_cast<Index>(i);
  if (max_coordinates > 0 && max_coordinates < params.size()) {
    Rng rng(seed);
    rng.shuffle(std::span<Index>(coords));
    coords.resize(static_cast<std::size_t>(max_coordinates));
    std::sort(coords.begin(), coords.end());
  }

  AdapterParams probe = params;
  GradCheckResult result = finite_difference_check(
      probe.values(), [&] { return batch_loss(probe, batch); }, analytic.values(), epsilon, coords);
  for (const auto& spec : params.tensors()) {
    if (result.worst_index >= spec.offset && result.worst_index < spec.offset + spec.rows * spec.cols) {
      result.worst_tensor = spec.name;
      result.worst_index -= spec.offset;
      break;
    }
  }
  return result;
}

double reconstruction_cosine(const AdapterParams& params, const EmbeddingCorpus& corpus) {
  if (corpus.records.empty()) throw DimensionError("reconstruction_cosine: empty corpus");
  double total = 0.0;
  for (const auto& rec : corpus.records) {
    const auto ex = reconstruction_example(rec, corpus.uncond);
    total += 1.0 - recon_loss(run_adapter(params, ex.queries, ex.conditions, ex.layout, ex.guidance), ex.target);
  }
  return total / static_cast<double>(corpus.records.size());
}

TrainResult train(const EmbeddingCorpus& corpus, AdapterParams init, const TrainConfig& cfg,
                  const EmbeddingCorpus* heldout) {
  cfg.validate();
  if (corpus.records.empty()) throw ConfigError("train: corpus is empty");
  if (cfg.batch_size > corpus.size()) {
    throw ConfigError("train: batch_size " + std::to_string(cfg.batch_size) + " exceeds corpus size " +
                      std::to_string(corpus.size()));
  }
  if (init.config().d_cond != corpus.d_cond) throw DimensionError("train: adapter d_cond != corpus d_cond");

  const auto started = std::chrono::steady_clock::now();
  std::vector<TrainingExample> examples;
  examples.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) examples.push_back(reconstruction_example(rec, corpus.uncond));

  TrainResult result{std::move(init), {}};
  auto& params = result.params;
  auto& report = result.report;
  report.seed = cfg.seed;
  report.loss.reserve(static_cast<std::size_t>(cfg.total_steps));

  Rng rng(cfg.seed);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(examples.size());
  std::size_t cursor = order.size();  // forces a shuffle before the first step
  std::vector<TrainingExample> current;
  current.reserve(batch);

  AdamW optimizer(params.size(), cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay);
  AdapterParams grads(params.config());

  for (Index step = 0; step < cfg.total_steps; ++step) {
    if (cursor + batch > order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    std::vector<std::size_t> picked(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                    order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
    cursor += batch;
    std::sort(picked.begin(), picked.end());
    current.clear();
    for (const auto i : picked) current.push_back(examples[i]);

    if (step == 0 && cfg.grad_check) {
      report.grad_check_error = grad_check(params, current, 1e-4, 256, cfg.seed).max_relative_error;
    }

    auto where = [&] {
      std::string ids;
      for (const auto& ex : current) ids += (ids.empty() ? "" : ",") + ex.id;
      return " at step " + std::to_string(step) + " (batch: " + ids + ")";
    };
    double loss = 0.0;
    try {
      loss = batch_loss_and_grad(params, current, grads, cfg.threads);
    } catch (const ValidationError& e) {
      throw NumericError(std::string("non-finite forward pass") + where() + ": " + e.what());
    }
    if (!std::isfinite(loss)) throw NumericError("non-finite loss" + where());
    report.loss.push_back(loss);
    optimizer.step(params.values(), grads.values(), cosine_lr(cfg, step));
  }
  report.steps = cfg.total_steps;

  report.train_cosine = reconstruction_cosine(params, corpus);
  if (heldout && !heldout->records.empty()) report.heldout_cosine = reconstruction_cosine(params, *heldout);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace drum
