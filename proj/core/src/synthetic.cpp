// SPDX-License-Identifier: Apache-2.0
#include "drum/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "drum/error.hpp"
#include "drum/rng.hpp"

namespace drum {

namespace {

Vector gaussian(Rng& rng, Index n, double scale) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal() * scale;
  return v;
}

Matrix gaussian(Rng& rng, Index rows, Index cols, double scale) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal() * scale;
  return m;
}

std::vector<Vector> make_archetypes(Rng& rng, Index count, Index dim) {
  std::vector<Vector> dirs;
  for (Index a = 0; a < count; ++a) {
    Vector v = gaussian(rng, dim, 1.0);
    if (a < dim) {
      for (const auto& u : dirs) v -= u.dot(v) * u;
    }
    v.normalize();
    dirs.push_back(std::move(v));
  }
  return dirs;
}

std::string record_id(Index user, Index seq) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "u%04ld/%04ld", static_cast<long>(user), static_cast<long>(seq));
  return buf;
}

}  // namespace

EmbeddingCorpus gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_users < 1 || spec.history_len < 0 || spec.d_sim < 1 || spec.d_cond < 1 || spec.max_tokens < 1 ||
      spec.archetypes < 1) {
    throw ConfigError("synthetic spec sizes must be >= 1 (history_len >= 0)");
  }
  if (spec.noise < 0.0 || spec.token_noise < 0.0 || spec.dominant_share < 0.0 || spec.dominant_share > 1.0) {
    throw ConfigError("synthetic noise must be >= 0 and dominant_share in [0, 1]");
  }

  Rng structure(derive_seed(spec.seed, 1));
  Rng records(derive_seed(spec.seed, 2));

  const auto archetypes = make_archetypes(structure, spec.archetypes, spec.d_sim);
  const Matrix positions = gaussian(structure, spec.max_tokens, spec.d_cond, 1.0 / std::sqrt(double(spec.d_cond)));
  const Vector null_content = gaussian(structure, spec.d_cond, 0.5 / std::sqrt(double(spec.d_cond)));
  const Matrix content_map = gaussian(structure, spec.d_cond, spec.d_sim, 1.0 / std::sqrt(double(spec.d_sim)));

  EmbeddingCorpus corpus;
  corpus.d_sim = spec.d_sim;
  corpus.d_cond = spec.d_cond;
  corpus.max_tokens = spec.max_tokens;
  corpus.uncond = positions.rowwise() + null_content.transpose();
  corpus.manifest = {
      {"encoder", "synthetic"},
      {"tool", "drum gen-synthetic"},
      {"seed", std::to_string(spec.seed)},
      {"archetypes", std::to_string(spec.archetypes)},
  };

  const Index min_tokens = (spec.max_tokens + 1) / 2;
  const double inv_sqrt_sim = 1.0 / std::sqrt(double(spec.d_sim));
  for (Index u = 0; u < spec.n_users; ++u) {
    const auto dominant = static_cast<Index>(records.uniform_index(static_cast<std::uint64_t>(spec.archetypes)));
    for (Index s = 0; s <= spec.history_len; ++s) {
      Index archetype = dominant;
      if (spec.archetypes > 1 && records.uniform() >= spec.dominant_share) {
        const auto other = static_cast<Index>(records.uniform_index(static_cast<std::uint64_t>(spec.archetypes - 1)));
        archetype = other < dominant ? other : other + 1;
      }
      Vector latent = archetypes[static_cast<std::size_t>(archetype)] + gaussian(records, spec.d_sim, spec.noise * inv_sqrt_sim);
      latent.normalize();

      const Index tokens = min_tokens + static_cast<Index>(records.uniform_index(
                                            static_cast<std::uint64_t>(spec.max_tokens - min_tokens + 1)));
      Matrix condition(tokens, spec.d_cond);
      for (Index t = 0; t < tokens; ++t) {
        const Vector token_latent = latent + gaussian(records, spec.d_sim, spec.token_noise * inv_sqrt_sim);
        condition.row(t) = positions.row(t) + (content_map * token_latent).transpose();
      }

      PromptRecord rec;
      rec.id = record_id(u, s);
      rec.text = "user=" + std::to_string(u) + " archetype=" + std::to_string(archetype);
      rec.sim_embedding = latent;
      rec.condition = std::move(condition);
      if (spec.d_sim == spec.d_cond) rec.class_embedding = latent;
      rec.preference = static_cast<double>(1 + records.uniform_index(5)) / 5.0;
      corpus.records.push_back(std::move(rec));
    }
  }

  quantize_to_f32(corpus);
  return corpus;
}

}  // namespace drum
