// SPDX-License-Identifier: Apache-2.0
//
// Reference implementation of greedy coreset sampling for differential
// testing. Written with plain loops over std::vector and no calls into the
// production path; only the PRNG definition is shared.
#include <cmath>
#include <limits>
#include <vector>

#include "drum/coreset.hpp"
#include "drum/error.hpp"
#include "drum/rng.hpp"

namespace drum {

namespace {

double naive_similarity(const std::vector<double>& a, const std::vector<double>& b, double p) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0.0 || nb == 0.0) throw DegenerateError("oracle: zero-norm embedding");
  if (a == b) return p;
  return dot / (na * nb) * p;
}

}  // namespace

UserProfile oracle_coreset(const EmbeddingCorpus& corpus, const CoresetConfig& cfg) {
  const std::size_t n_records = corpus.records.size();
  const auto n = static_cast<std::size_t>(cfg.sample_size);
  const auto k = static_cast<std::size_t>(cfg.approx_size);
  if (cfg.sample_size < 1 || n > n_records || cfg.approx_size < 1 || k > n_records) {
    throw ConfigError("oracle: n or k out of range");
  }

  std::vector<std::vector<double>> e(n_records);
  std::vector<double> p(n_records);
  for (std::size_t i = 0; i < n_records; ++i) {
    const auto& rec = corpus.records[i];
    for (Index j = 0; j < rec.sim_embedding.size(); ++j) e[i].push_back(rec.sim_embedding[j]);
    p[i] = cfg.use_preferences ? rec.preference : 1.0;
    if (!(p[i] >= 0.0)) throw ValidationError("oracle: negative preference");
  }

  // Fisher-Yates from the back, drawing j = floor(next() * (i + 1) / 2^64).
  std::vector<std::size_t> perm(n_records);
  for (std::size_t i = 0; i < n_records; ++i) perm[i] = i;
  Rng rng(cfg.seed);
  for (std::size_t i = n_records; i > 1; --i) {
    const std::uint64_t r = rng.next();
    // high word of r * i via long multiplication on 32-bit halves
    const std::uint64_t ib = i;
    const std::uint64_t r0 = r & 0xFFFFFFFFULL, r1 = r >> 32;
    const std::uint64_t i0 = ib & 0xFFFFFFFFULL, i1 = ib >> 32;
    const std::uint64_t mid = ((r0 * i0) >> 32) + ((r1 * i0) & 0xFFFFFFFFULL) + r0 * i1;
    const auto j = static_cast<std::size_t>(r1 * i1 + ((r1 * i0) >> 32) + (mid >> 32));
    const std::size_t tmp = perm[i - 1];
    perm[i - 1] = perm[j];
    perm[j] = tmp;
  }

  std::vector<double> d(n_records, 0.0);
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t i = 0; i < n_records; ++i) {
      d[i] += naive_similarity(e[perm[s]], e[i], p[i]);
    }
  }
  for (std::size_t i = 0; i < n_records; ++i) d[i] /= static_cast<double>(k);

  double p_max = 0.0;
  for (std::size_t i = 0; i < n_records; ++i) {
    if (p[i] > p_max) p_max = p[i];
  }

  UserProfile out;
  while (out.indices.size() < n) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_records; ++i) {
      if (d[i] > top) top = d[i];
    }
    // lowest index among values within kTieTolerance * max p of the maximum
    std::size_t best = 0;
    for (std::size_t i = 0; i < n_records; ++i) {
      if (top - d[i] <= kTieTolerance * p_max) {
        best = i;
        break;
      }
    }
    out.indices.push_back(static_cast<Index>(best));
    out.source_ids.push_back(corpus.records[best].id);
    for (std::size_t i = 0; i < n_records; ++i) {
      const double sim = naive_similarity(e[best], e[i], p[i]);
      if (sim < d[i]) d[i] = sim;
    }
    d[best] = -std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace drum
