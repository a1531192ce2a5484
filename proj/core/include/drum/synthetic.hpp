// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "drum/embedding_store.hpp"

namespace drum {

/// Parameters for the synthetic user-history generator.
///
/// Each user owns `history_len + 1` consecutive records with ids
/// `u<user>/<seq>`; the last one is that user's target prompt. A user has a
/// dominant archetype (a unit latent direction, orthonormal when
/// archetypes <= d_sim) and each record picks its archetype from the user's
/// mixture: the dominant one with probability `dominant_share`, otherwise
/// uniformly among the rest. The record text is `user=<u> archetype=<a>`.
struct SyntheticSpec {
  Index n_users = 4;
  Index history_len = 15;
  Index d_sim = 64;
  Index d_cond = 64;
  Index max_tokens = 8;
  Index archetypes = 2;
  double noise = 0.25;
  double token_noise = 0.1;
  double dominant_share = 1.0;
  std::uint64_t seed = 0;
};

/// Deterministic corpus for tests and desk-scale experiments.
///
/// sim_embedding = normalize(archetype + noise * g / sqrt(d_sim))
/// condition[t]  = pos[t] + M (sim_embedding + token_noise * g_t / sqrt(d_sim))
/// uncond[t]     = pos[t] + null
/// class_embedding = sim_embedding when d_sim == d_cond, absent otherwise.
/// Token counts are drawn from [ceil(max_tokens / 2), max_tokens]; the
/// uncond matrix always has max_tokens rows. Preferences are k/5, k in 1..5.
/// All tensors are f32-exact.
EmbeddingCorpus gen_synthetic(const SyntheticSpec& spec);

}  // namespace drum
