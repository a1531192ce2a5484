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

struct AlignRef {
  std::reference_wrapper<const Vector> embedding;
  double preference = 1.0;
};

/// Text align: mean over refs of sim_clip(personalized_class, r_i, p_i).
double text_align(const Vector& personalized_class, std::span<const AlignRef> refs);

/// Token-aligned condition similarity: mean over the first min(T_a, T_b)
/// tokens of cos(a_t, b_t).
double condition_cosine(const Matrix& a, const Matrix& b);

/// (score - baseline) / |baseline| * 100; empty when baseline is 0.
std::optional<double> improvement(double score, double baseline);

/// A user's records: history in corpus order, target = most recent record.
/// Users are keyed by the id prefix before the last '/'; ids without '/'
/// all belong to one anonymous user "".
struct UserHistory {
  std::string user;
  std::vector<Index> history;
  Index target = 0;
};

/// Users sorted by key. Throws ValidationError for a user with no history.
std::vector<UserHistory> split_users(const EmbeddingCorpus& corpus);

enum class SamplingMethod { coreset, random, uniform, full };
enum class HistoryMode { full, recent2 };

std::string to_string(SamplingMethod method);
SamplingMethod parse_sampling_method(const std::string& name);
std::string to_string(HistoryMode mode);
HistoryMode parse_history_mode(const std::string& name);

struct ProfileOptions {
  SamplingMethod method = SamplingMethod::coreset;
  double ratio = 0.1;
  std::optional<Index> approx_size;  // coreset k; defaults to the history size
  bool use_preferences = true;
  std::uint64_t seed = 0;
};

/// Picks n = ceil(ratio * |history|) records out of `history` (corpus
/// indices) and returns corpus indices in selection order.
///   coreset: greedy coreset over the history's sim embeddings
///   random:  first n of a seeded shuffle
///   uniform: every floor(1 / ratio)-th record by position
///   full:    the whole history
std::vector<Index> select_profile(const EmbeddingCorpus& corpus, std::span<const Index> history,
                                  const ProfileOptions& options);

struct EvalConfig {
  std::string label = "drum";
  double alpha = 0.3;
  bool guidance = true;
  ProfileOptions profile;
  HistoryMode history = HistoryMode::full;
  int threads = 1;
};

struct UserEval {
  std::string user;
  std::string target_id;
  std::vector<std::string> profile_ids;
  double target_align = 0.0;
  double history_align = 0.0;
  double baseline_history_align = 0.0;
  std::optional<double> condition_target_align;
  std::optional<double> condition_history_align;
};

struct EvalReport {
  EvalConfig config;
  std::vector<UserEval> users;
  double target_align = 0.0;
  double history_align = 0.0;
  double baseline_target_align = 0.0;
  double baseline_history_align = 0.0;
  std::optional<double> improvement_target;
  std::optional<double> improvement_history;
  std::optional<double> improvement;  // mean of the two
  std::optional<double> condition_target_align;
  std::optional<double> condition_history_align;
};

/// Personalizes every user's target with its sampled profile and scores it.
/// The baseline is the unpersonalized target (class embedding and condition
/// used as-is). `params` may be null, in which case only class-embedding
/// metrics are produced. Users are evaluated independently; per-user seeds
/// derive from profile.seed and the user's position.
EvalReport evaluate(const EmbeddingCorpus& corpus, const AdapterParams* params, const EvalConfig& cfg);

/// One report per (method, ratio), methods outermost.
std::vector<EvalReport> run_sampling_sweep(const EmbeddingCorpus& corpus, const AdapterParams* params,
                                           std::span<const SamplingMethod> methods, std::span<const double> ratios,
                                           const EvalConfig& base);

/// Rows: full, w/o S (whole history), w/o G (joint softmax), w/o S & G.
std::vector<EvalReport> run_ablation(const EmbeddingCorpus& corpus, const AdapterParams* params,
                                     const EvalConfig& base);

struct AlphaSweepRow {
  double alpha = 0.0;
  PersonalizedCondition output;
  std::optional<double> target_align;      // class embedding vs target sim embedding
  std::optional<double> reference_align;   // class embedding vs references
  double condition_target_align = 0.0;     // condition_cosine vs target condition
  double condition_reference_align = 0.0;  // preference-weighted mean over references
};

std::vector<AlphaSweepRow> run_alpha_sweep(const PromptRecord& target, std::span<const PromptRecord> references,
                                           const Matrix& uncond, const AdapterParams& params,
                                           std::span<const double> alphas);

}  // namespace drum
