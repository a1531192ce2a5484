// SPDX-License-Identifier: Apache-2.0
#include "drum/eval.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <map>

#include "drum/coreset.hpp"
#include "drum/error.hpp"
#include "drum/parallel.hpp"
#include "drum/rng.hpp"

namespace drum {

double text_align(const Vector& personalized_class, std::span<const AlignRef> refs) {
  if (refs.empty()) throw ValidationError("text_align: empty reference list");
  double total = 0.0;
  for (const auto& ref : refs) total += sim_clip(personalized_class, ref.embedding.get(), ref.preference);
  return total / static_cast<double>(refs.size());
}

double condition_cosine(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("condition_cosine: widths differ");
  const Index tokens = std::min(a.rows(), b.rows());
  if (tokens == 0) throw DimensionError("condition_cosine: no tokens");
  double total = 0.0;
  for (Index t = 0; t < tokens; ++t) {
    const double na = a.row(t).norm();
    const double nb = b.row(t).norm();
    if (na == 0.0 || nb == 0.0) throw DegenerateError("condition_cosine: zero-norm token");
    total += a.row(t).dot(b.row(t)) / (na * nb);
  }
  return total / static_cast<double>(tokens);
}

std::optional<double> improvement(double score, double baseline) {
  if (baseline == 0.0) return std::nullopt;
  return (score - baseline) / std::abs(baseline) * 100.0;
}

std::vector<UserHistory> split_users(const EmbeddingCorpus& corpus) {
  std::map<std::string, std::vector<Index>> grouped;
  for (Index i = 0; i < corpus.size(); ++i) {
    const auto& id = corpus.records[static_cast<std::size_t>(i)].id;
    const auto slash = id.rfind('/');
    grouped[slash == std::string::npos ? std::string() : id.substr(0, slash)].push_back(i);
  }
  std::vector<UserHistory> users;
  for (auto& [user, indices] : grouped) {
    if (indices.size() < 2) throw ValidationError("user '" + user + "' has a target but no history");
    UserHistory u;
    u.user = user;
    u.target = indices.back();
    indices.pop_back();
    u.history = std::move(indices);
    users.push_back(std::move(u));
  }
  return users;
}

std::string to_string(SamplingMethod method) {
  switch (method) {
    case SamplingMethod::coreset: return "coreset";
    case SamplingMethod::random: return "random";
    case SamplingMethod::uniform: return "uniform";
    case SamplingMethod::full: return "full";
  }
  return "unknown";
}

SamplingMethod parse_sampling_method(const std::string& name) {
  for (auto m : {SamplingMethod::coreset, SamplingMethod::random, SamplingMethod::uniform, SamplingMethod::full}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown sampling method '" + name + "'");
}

std::string to_string(HistoryMode mode) { return mode == HistoryMode::full ? "full" : "recent2"; }

HistoryMode parse_history_mode(const std::string& name) {
  if (name == "full") return HistoryMode::full;
  if (name == "recent2") return HistoryMode::recent2;
  throw ConfigError("unknown history mode '" + name + "'");
}

std::vector<Index> select_profile(const EmbeddingCorpus& corpus, std::span<const Index> history,
                                  const ProfileOptions& options) {
  const auto count = static_cast<Index>(history.size());
  if (count == 0) throw ValidationError("select_profile: empty history");
  if (options.method == SamplingMethod::full) return {history.begin(), history.end()};

  const Index n = sample_count(options.ratio, count);
  if (n < 1) throw ConfigError("sampling ratio yields an empty profile");

  std::vector<Index> picked;
  switch (options.method) {
    case SamplingMethod::coreset: {
      Matrix embeddings(count, corpus.d_sim);
      std::vector<double> prefs;
      for (Index i = 0; i < count; ++i) {
        const auto& rec = corpus.records[static_cast<std::size_t>(history[static_cast<std::size_t>(i)])];
        embeddings.row(i) = rec.sim_embedding.transpose();
        prefs.push_back(rec.preference);
      }
      CoresetConfig cfg;
      cfg.sample_size = n;
      cfg.approx_size = options.approx_size ? std::min(*options.approx_size, count) : count;
      cfg.seed = options.seed;
      cfg.use_preferences = options.use_preferences;
      for (const Index local : coreset_select(embeddings, prefs, cfg)) {
        picked.push_back(history[static_cast<std::size_t>(local)]);
      }
      break;
    }
    case SamplingMethod::random: {
      Rng rng(options.seed);
      const auto order = rng.permutation(count);
      for (Index i = 0; i < n; ++i) picked.push_back(history[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
      break;
    }
    case SamplingMethod::uniform: {
      const auto stride = std::max<Index>(1, static_cast<Index>(std::floor(1.0 / options.ratio + 1e-9)));
      for (Index i = 0; i < n; ++i) picked.push_back(history[static_cast<std::size_t>(i * stride)]);
      break;
    }
    case SamplingMethod::full: break;
  }
  return picked;
}

namespace {

std::vector<AlignRef> align_refs(const EmbeddingCorpus& corpus, std::span<const Index> indices) {
  std::vector<AlignRef> refs;
  for (const Index i : indices) {
    const auto& rec = corpus.records[static_cast<std::size_t>(i)];
    refs.push_back({std::cref(rec.sim_embedding), rec.preference});
  }
  return refs;
}

double weighted_condition_align(const Matrix& condition, const EmbeddingCorpus& corpus,
                                std::span<const Index> indices) {
  double total = 0.0;
  for (const Index i : indices) {
    const auto& rec = corpus.records[static_cast<std::size_t>(i)];
    total += condition_cosine(condition, rec.condition) * rec.preference;
  }
  return total / static_cast<double>(indices.size());
}

UserEval evaluate_user(const EmbeddingCorpus& corpus, const AdapterParams* params, const EvalConfig& cfg,
                       const UserHistory& user, std::uint64_t seed) {
  const auto& target = corpus.records[static_cast<std::size_t>(user.target)];
  if (!target.class_embedding) {
    throw ValidationError("text align needs class embeddings; record '" + target.id + "' has none");
  }

  ProfileOptions profile = cfg.profile;
  profile.seed = seed;
  const auto selected = select_profile(corpus, user.history, profile);

  std::span<const Index> metric_history = user.history;
  if (cfg.history == HistoryMode::recent2 && metric_history.size() > 2) {
    metric_history = metric_history.last(2);
  }

  PersonalizationRequest request;
  request.target = target;
  for (const Index i : selected) request.references.push_back(corpus.records[static_cast<std::size_t>(i)]);
  request.guidance = {cfg.alpha, cfg.guidance};
  request.uncond = corpus.uncond;

  UserEval out;
  out.user = user.user;
  out.target_id = target.id;
  for (const auto& ref : request.references) out.profile_ids.push_back(ref.id);

  Vector personalized;
  if (params) {
    auto result = forward(*params, request);
    personalized = std::move(*result.class_embedding);
    out.condition_target_align = condition_cosine(result.condition, target.condition);
    out.condition_history_align = weighted_condition_align(result.condition, corpus, metric_history);
  } else {
    std::vector<ClassInput> inputs;
    for (const auto& ref : request.references) {
      if (!ref.class_embedding) throw ValidationError("reference '" + ref.id + "' lacks a class embedding");
      inputs.push_back({SegmentRole::reference, ref.preference, *ref.class_embedding});
    }
    inputs.push_back({SegmentRole::target, 1.0, *target.class_embedding});
    personalized = guide_class_embeddings(inputs, request.guidance);
  }

  const std::array<AlignRef, 1> target_ref = {AlignRef{std::cref(target.sim_embedding), 1.0}};
  const auto history_refs = align_refs(corpus, metric_history);
  out.target_align = text_align(personalized, target_ref);
  out.history_align = text_align(personalized, history_refs);
  out.baseline_history_align = text_align(*target.class_embedding, history_refs);
  return out;
}

double mean_of(const std::vector<UserEval>& users, double UserEval::*field) {
  double total = 0.0;
  for (const auto& u : users) total += u.*field;
  return total / static_cast<double>(users.size());
}

std::optional<double> mean_of(const std::vector<UserEval>& users, std::optional<double> UserEval::*field) {
  double total = 0.0;
  for (const auto& u : users) {
    if (!(u.*field)) return std::nullopt;
    total += *(u.*field);
  }
  return total / static_cast<double>(users.size());
}

}  // namespace

EvalReport evaluate(const EmbeddingCorpus& corpus, const AdapterParams* params, const EvalConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must be in [0, 1]");
  const auto users = split_users(corpus);

  EvalReport report;
  report.config = cfg;
  report.users.resize(users.size());
  parallel_for(static_cast<std::int64_t>(users.size()), cfg.threads, [&](std::int64_t i) {
    const auto u = static_cast<std::size_t>(i);
    report.users[u] = evaluate_user(corpus, params, cfg, users[u], derive_seed(cfg.profile.seed, u));
  });

  report.target_align = mean_of(report.users, &UserEval::target_align);
  report.history_align = mean_of(report.users, &UserEval::history_align);
  // The unpersonalized class embedding is the target's own: its target align is 1 by definition.
  double baseline_target = 0.0;
  for (const auto& u : users) {
    const auto& t = corpus.records[static_cast<std::size_t>(u.target)];
    baseline_target += sim_clip(*t.class_embedding, t.sim_embedding, 1.0);
  }
  report.baseline_target_align = baseline_target / static_cast<double>(users.size());
  report.baseline_history_align = mean_of(report.users, &UserEval::baseline_history_align);
  report.improvement_target = improvement(report.target_align, report.baseline_target_align);
  report.improvement_history = improvement(report.history_align, report.baseline_history_align);
  if (report.improvement_target && report.improvement_history) {
    report.improvement = 0.5 * (*report.improvement_target + *report.improvement_history);
  }
  report.condition_target_align = mean_of(report.users, &UserEval::condition_target_align);
  report.condition_history_align = mean_of(report.users, &UserEval::condition_history_align);
  return report;
}

std::vector<EvalReport> run_sampling_sweep(const EmbeddingCorpus& corpus, const AdapterParams* params,
                                           std::span<const SamplingMethod> methods, std::span<const double> ratios,
                                           const EvalConfig& base) {
  std::vector<EvalReport> reports;
  for (const auto method : methods) {
    for (const double ratio : ratios) {
      if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("sweep ratios must be in (0, 1]");
      EvalConfig cfg = base;
      cfg.profile.method = method;
      cfg.profile.ratio = ratio;
      char label[64];
      std::snprintf(label, sizeof(label), "%s@%g", to_string(method).c_str(), ratio);
      cfg.label = label;
      reports.push_back(evaluate(corpus, params, cfg));
    }
  }
  return reports;
}

std::vector<EvalReport> run_ablation(const EmbeddingCorpus& corpus, const AdapterParams* params,
                                     const EvalConfig& base) {
  struct Row {
    const char* label;
    bool sampling;
    bool guidance;
  };
  static constexpr std::array<Row, 4> rows = {{
      {"full", true, true},
      {"w/o S", false, true},
      {"w/o G", true, false},
      {"w/o S & G", false, false},
  }};
  std::vector<EvalReport> reports;
  for (const auto& row : rows) {
    EvalConfig cfg = base;
    cfg.label = row.label;
    cfg.guidance = row.guidance;
    if (!row.sampling) cfg.profile.method = SamplingMethod::full;
    reports.push_back(evaluate(corpus, params, cfg));
  }
  return reports;
}

std::vector<AlphaSweepRow> run_alpha_sweep(const PromptRecord& target, std::span<const PromptRecord> references,
                                           const Matrix& uncond, const AdapterParams& params,
                                           std::span<const double> alphas) {
  if (references.empty()) throw ValidationError("alpha sweep needs at least one reference");
  std::vector<AlignRef> ref_sims;
  for (const auto& ref : references) ref_sims.push_back({std::cref(ref.sim_embedding), ref.preference});
  const std::array<AlignRef, 1> target_sim = {AlignRef{std::cref(target.sim_embedding), 1.0}};

  std::vector<AlphaSweepRow> rows;
  for (const double alpha : alphas) {
    PersonalizationRequest request;
    request.target = target;
    request.references.assign(references.begin(), references.end());
    request.guidance = {alpha, true};
    request.uncond = uncond;

    AlphaSweepRow row;
    row.alpha = alpha;
    row.output = forward(params, request);
    if (row.output.class_embedding) {
      row.target_align = text_align(*row.output.class_embedding, target_sim);
      row.reference_align = text_align(*row.output.class_embedding, ref_sims);
    }
    row.condition_target_align = condition_cosine(row.output.condition, target.condition);
    double total = 0.0;
    for (const auto& ref : references) total += condition_cosine(row.output.condition, ref.condition) * ref.preference;
    row.condition_reference_align = total / static_cast<double>(references.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace drum
