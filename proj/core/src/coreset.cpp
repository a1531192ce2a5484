// SPDX-License-Identifier: Apache-2.0
#include "drum/coreset.hpp"

#include <cmath>
#include <limits>

#include "drum/error.hpp"
#include "drum/rng.hpp"

namespace drum {

double sim_clip(const Vector& e, const Vector& r, double preference) {
  if (e.size() != r.size()) throw DimensionError("sim_clip: vector lengths differ");
  const double ne = e.norm();
  const double nr = r.norm();
  if (ne == 0.0 || nr == 0.0) throw DegenerateError("sim_clip: zero-norm vector, cosine undefined");
  if (e == r) return preference;
  return e.dot(r) / (ne * nr) * preference;
}

Index sample_count(double ratio, Index count) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("sampling ratio must be in (0, 1]");
  const double scaled = ratio * static_cast<double>(count);
  return static_cast<Index>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
}

namespace {

void check_config(Index count, const CoresetConfig& cfg) {
  if (cfg.sample_size < 1 || cfg.sample_size > count) {
    throw ConfigError("coreset sample size n=" + std::to_string(cfg.sample_size) + " outside [1, " +
                      std::to_string(count) + "]");
  }
  if (cfg.approx_size < 1 || cfg.approx_size > count) {
    throw ConfigError("coreset approx size k=" + std::to_string(cfg.approx_size) + " outside [1, " +
                      std::to_string(count) + "]");
  }
}

}  // namespace

std::vector<Index> coreset_select(const Matrix& embeddings, std::span<const double> preferences,
                                  const CoresetConfig& cfg) {
  const Index count = embeddings.rows();
  if (static_cast<Index>(preferences.size()) != count) {
    throw DimensionError("coreset: preference count differs from embedding count");
  }
  check_config(count, cfg);

  Vector weights(count);
  for (Index i = 0; i < count; ++i) {
    const double p = preferences[static_cast<std::size_t>(i)];
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("coreset: preferences must be finite and >= 0");
    weights[i] = cfg.use_preferences ? p : 1.0;
  }

  Vector norms = embeddings.rowwise().norm();
  for (Index i = 0; i < count; ++i) {
    if (norms[i] == 0.0) throw DegenerateError("coreset: zero-norm embedding at index " + std::to_string(i));
  }

  // Sim(e_j, E)_i for all i, evaluated with the same expression as sim_clip.
  auto similarity_row = [&](Index j, Vector& out) {
    for (Index i = 0; i < count; ++i) {
      if (embeddings.row(i) == embeddings.row(j)) {
        out[i] = weights[i];
      } else {
        out[i] = embeddings.row(j).dot(embeddings.row(i)) / (norms[j] * norms[i]) * weights[i];
      }
    }
  };

  Rng rng(cfg.seed);
  const auto order = rng.permutation(count);

  Vector row(count);
  Vector scores = Vector::Zero(count);
  for (Index s = 0; s < cfg.approx_size; ++s) {
    similarity_row(order[static_cast<std::size_t>(s)], row);
    scores += row;
  }
  scores /= static_cast<double>(cfg.approx_size);

  // |Sim| <= max p bounds every score, so ties are judged against that scale.
  const double slack = kTieTolerance * weights.maxCoeff();
  std::vector<Index> selected;
  selected.reserve(static_cast<std::size_t>(cfg.sample_size));
  for (Index step = 0; step < cfg.sample_size; ++step) {
    const double top = scores.maxCoeff();
    Index best = 0;
    while (scores[best] < top - slack) ++best;
    selected.push_back(best);
    similarity_row(best, row);
    scores = scores.cwiseMin(row);
    scores[best] = -std::numeric_limits<double>::infinity();
  }
  return selected;
}

UserProfile coreset_sample(const EmbeddingCorpus& corpus, const CoresetConfig& cfg) {
  Matrix embeddings(corpus.size(), corpus.d_sim);
  std::vector<double> preferences;
  preferences.reserve(corpus.records.size());
  for (Index i = 0; i < corpus.size(); ++i) {
    const auto& rec = corpus.records[static_cast<std::size_t>(i)];
    if (rec.sim_embedding.size() != corpus.d_sim) throw DimensionError("coreset: sim_embedding length != d_sim");
    embeddings.row(i) = rec.sim_embedding.transpose();
    preferences.push_back(rec.preference);
  }
  UserProfile profile;
  profile.indices = coreset_select(embeddings, preferences, cfg);
  for (const Index i : profile.indices) profile.source_ids.push_back(corpus.records[static_cast<std::size_t>(i)].id);
  return profile;
}

}  // namespace drum
