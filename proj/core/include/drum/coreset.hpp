// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drum/embedding_store.hpp"
#include "drum/tensor.hpp"

namespace drum {

struct CoresetConfig {
  Index sample_size = 1;  // n
  Index approx_size = 1;  // k, size of the random subset used to estimate mean similarity
  std::uint64_t seed = 0;
  bool use_preferences = true;
};

/// Selected coreset: record indices in selection order plus their ids.
struct UserProfile {
  std::vector<Index> indices;
  std::vector<std::string> source_ids;
};

/// Preference-weighted cosine similarity: (e . r) / (|e| |r|) * p, exactly p when e == r.
/// Throws DegenerateError for a zero-norm vector, DimensionError on length mismatch.
double sim_clip(const Vector& e, const Vector& r, double preference);

/// n = ceil(ratio * count), robust to representation error (0.1 * 30 -> 3).
Index sample_count(double ratio, Index count);

/// Two coreset scores count as tied when they differ by at most
/// kTieTolerance * max_i p_i.
inline constexpr double kTieTolerance = 1e-12;

/// Greedy coreset selection over the rows of `embeddings` (N x d).
///
///   E_k  <- first k entries of a seeded shuffle of 0..N-1
///   D    <- (1/k) sum_{e in E_k} Sim(e, E),  Sim(e, E)_i = sim_clip(e, e_i, p_i)
///   repeat n times:
///     s <- argmax_i D (lowest index among D_i >= max D - kTieTolerance max p);  keep s
///     D <- min(D, Sim(e_s, E));  D_s <- -inf
///
/// Note the objective mixes an average-similarity start with a minimum
/// update, so selection favours records that are both central and similar
/// to everything already chosen. With use_preferences false every p_i is 1.
std::vector<Index> coreset_select(const Matrix& embeddings, std::span<const double> preferences,
                                  const CoresetConfig& cfg);

/// coreset_select over every record of the corpus.
UserProfile coreset_sample(const EmbeddingCorpus& corpus, const CoresetConfig& cfg);

/// Independent naive re-implementation of coreset_sample used as a
/// differential test oracle. Shares no helpers with the production path.
UserProfile oracle_coreset(const EmbeddingCorpus& corpus, const CoresetConfig& cfg);

}  // namespace drum
