// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drum/tensor.hpp"

namespace drum {

/// One historical or target prompt.
struct PromptRecord {
  std::string id;
  std::optional<std::string> text;
  Vector sim_embedding;                   // d_sim, CLIP space
  Matrix condition;                       // T x d_cond, pre-normalization tokens
  std::optional<Vector> class_embedding;  // d_cond, pooled/class token
  double preference = 1.0;

  Index tokens() const { return condition.rows(); }

  bool operator==(const PromptRecord&) const;
};

/// Ordered prompt collection plus the unconditional (empty prompt) embedding.
struct EmbeddingCorpus {
  std::vector<PromptRecord> records;
  Index d_sim = 0;
  Index d_cond = 0;
  Index max_tokens = 0;
  Matrix uncond;  // T_u x d_cond
  /// Provenance: "encoder" is promoted to a top-level manifest field, every
  /// other key lands in the manifest's "extras" object.
  std::map<std::string, std::string> manifest;

  Index size() const { return static_cast<Index>(records.size()); }
  const std::string& encoder() const;

  /// Index of the record with this id, if any.
  std::optional<Index> find(const std::string& id) const;

  bool operator==(const EmbeddingCorpus&) const;
};

inline constexpr std::uint32_t kCorpusFormatVersion = 1;
inline constexpr char kCorpusManifestFile[] = "manifest.json";
inline constexpr char kCorpusTensorFile[] = "tensors.bin";

/// Throws ValidationError naming the first violated invariant.
void validate_corpus(const EmbeddingCorpus& corpus);

/// Writes `dir/manifest.json` and `dir/tensors.bin`, creating `dir` if needed.
/// Tensors are narrowed to f32; output is a pure function of the corpus.
void save_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& dir);

/// Reads and eagerly validates a corpus directory.
/// Throws FormatError, TruncatedError, ValidationError or IoError.
EmbeddingCorpus load_corpus(const std::filesystem::path& dir);

/// Rounds every tensor to the nearest f32 so that save/load is lossless.
void quantize_to_f32(EmbeddingCorpus& corpus);

}  // namespace drum
