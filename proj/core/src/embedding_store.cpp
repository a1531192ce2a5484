// SPDX-License-Identifier: Apache-2.0
#include "drum/embedding_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "drum/error.hpp"

namespace drum {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 4> kMagic = {'D', 'R', 'U', 'M'};
const std::string kEncoderKey = "encoder";
const std::string kTextsKey = "record_texts";

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }

  void u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  template <typename Derived>
  void tensor(const Eigen::DenseBase<Derived>& t) {
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) f32(t(r, c));
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  std::uint8_t u8() {
    need(1, "u8");
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }

  std::string raw(std::size_t n) {
    need(n, "string");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  Matrix matrix(std::uint64_t rows, std::uint64_t cols, const char* what) {
    need(rows * cols * 4, what);
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = f32();
    return m;
  }

  Vector vector(std::uint64_t n, const char* what) {
    need(n * 4, what);
    Vector v(static_cast<Index>(n));
    for (Index i = 0; i < v.size(); ++i) v[i] = f32();
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      throw TruncatedError("tensors.bin truncated at byte " + std::to_string(pos_) + " while reading " + what +
                           " (need " + std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
    }
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& t) {
  return t.derived().array().isFinite().all();
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint32_t checked_u32(Index v, const char* what) {
  if (v < 0 || v > static_cast<Index>(UINT32_MAX)) throw ValidationError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

std::uint64_t manifest_uint(const json& manifest, const char* key) {
  const auto it = manifest.find(key);
  if (it == manifest.end() || !it->is_number_unsigned()) {
    throw FormatError(std::string("manifest field '") + key + "' missing or not a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

}  // namespace

bool PromptRecord::operator==(const PromptRecord& other) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return id == other.id && text == other.text && preference == other.preference &&
         same(sim_embedding, other.sim_embedding) && same(condition, other.condition) &&
         class_embedding.has_value() == other.class_embedding.has_value() &&
         (!class_embedding || same(*class_embedding, *other.class_embedding));
}

bool EmbeddingCorpus::operator==(const EmbeddingCorpus& other) const {
  return d_sim == other.d_sim && d_cond == other.d_cond && max_tokens == other.max_tokens &&
         manifest == other.manifest && records == other.records && uncond.rows() == other.uncond.rows() &&
         uncond.cols() == other.uncond.cols() && uncond == other.uncond;
}

const std::string& EmbeddingCorpus::encoder() const {
  static const std::string unknown = "unknown";
  const auto it = manifest.find(kEncoderKey);
  return it == manifest.end() ? unknown : it->second;
}

std::optional<Index> EmbeddingCorpus::find(const std::string& id) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id == id) return static_cast<Index>(i);
  }
  return std::nullopt;
}

void validate_corpus(const EmbeddingCorpus& corpus) {
  if (corpus.d_sim <= 0 || corpus.d_cond <= 0 || corpus.max_tokens <= 0) {
    throw ValidationError("d_sim, d_cond and max_tokens must be positive");
  }
  std::set<std::string> ids;
  for (const auto& r : corpus.records) {
    const std::string where = "record '" + r.id + "': ";
    if (!ids.insert(r.id).second) throw ValidationError("duplicate record id '" + r.id + "'");
    if (r.sim_embedding.size() != corpus.d_sim) throw ValidationError(where + "sim_embedding length != d_sim");
    if (!all_finite(r.sim_embedding)) throw ValidationError(where + "sim_embedding has NaN/Inf");
    if (r.condition.rows() < 1) throw ValidationError(where + "condition has no tokens");
    if (r.condition.rows() > corpus.max_tokens) throw ValidationError(where + "token count exceeds max_tokens");
    if (r.condition.cols() != corpus.d_cond) throw ValidationError(where + "condition width != d_cond");
    if (!all_finite(r.condition)) throw ValidationError(where + "condition has NaN/Inf");
    if (r.class_embedding) {
      if (r.class_embedding->size() != corpus.d_cond) throw ValidationError(where + "class_embedding length != d_cond");
      if (!all_finite(*r.class_embedding)) throw ValidationError(where + "class_embedding has NaN/Inf");
    }
    if (!std::isfinite(r.preference) || r.preference < 0.0) {
      throw ValidationError(where + "preference must be finite and non-negative");
    }
  }
  if (corpus.uncond.rows() < 1 || corpus.uncond.cols() != corpus.d_cond) {
    throw ValidationError("uncond must be present with width d_cond");
  }
  if (!all_finite(corpus.uncond)) throw ValidationError("uncond has NaN/Inf");
}

void save_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& dir) {
  validate_corpus(corpus);

  ByteWriter w;
  w.raw(std::string_view(kMagic.data(), kMagic.size()));
  w.u32(kCorpusFormatVersion);
  for (const auto& r : corpus.records) {
    w.u32(checked_u32(static_cast<Index>(r.id.size()), "id length"));
    w.raw(r.id);
    w.u32(checked_u32(r.tokens(), "token count"));
    w.tensor(r.sim_embedding.transpose());
    w.tensor(r.condition);
    w.u8(r.class_embedding ? 1 : 0);
    if (r.class_embedding) w.tensor(r.class_embedding->transpose());
    w.f32(r.preference);
  }
  w.u32(checked_u32(corpus.uncond.rows(), "uncond token count"));
  w.tensor(corpus.uncond);

  json extras = json::object();
  for (const auto& [key, value] : corpus.manifest) {
    if (key != kEncoderKey) extras[key] = value;
  }
  const bool any_text = std::any_of(corpus.records.begin(), corpus.records.end(),
                                    [](const PromptRecord& r) { return r.text.has_value(); });
  if (any_text) {
    json texts = json::array();
    for (const auto& r : corpus.records) texts.push_back(r.text ? json(*r.text) : json(nullptr));
    extras[kTextsKey] = std::move(texts);
  }

  json manifest = {
      {"format_version", kCorpusFormatVersion},
      {"d_sim", corpus.d_sim},
      {"d_cond", corpus.d_cond},
      {"max_tokens", corpus.max_tokens},
      {"n_records", corpus.records.size()},
      {"encoder", corpus.encoder()},
      {"extras", std::move(extras)},
  };

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / kCorpusManifestFile, text.data(), text.size());
  write_file(dir / kCorpusTensorFile, w.bytes().data(), w.bytes().size());
}

EmbeddingCorpus load_corpus(const std::filesystem::path& dir) {
  const auto manifest_bytes = read_file(dir / kCorpusManifestFile);
  json manifest;
  try {
    manifest = json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object()) throw FormatError("manifest.json must be an object");
  if (manifest_uint(manifest, "format_version") != kCorpusFormatVersion) {
    throw FormatError("unsupported manifest format_version");
  }

  EmbeddingCorpus corpus;
  corpus.d_sim = static_cast<Index>(manifest_uint(manifest, "d_sim"));
  corpus.d_cond = static_cast<Index>(manifest_uint(manifest, "d_cond"));
  corpus.max_tokens = static_cast<Index>(manifest_uint(manifest, "max_tokens"));
  const auto n_records = manifest_uint(manifest, "n_records");
  if (corpus.d_sim == 0 || corpus.d_cond == 0 || corpus.max_tokens == 0) {
    throw ValidationError("manifest dimensions must be positive");
  }
  if (const auto it = manifest.find("encoder"); it != manifest.end()) {
    if (!it->is_string()) throw FormatError("manifest 'encoder' must be a string");
    corpus.manifest[kEncoderKey] = it->get<std::string>();
  }
  std::vector<std::optional<std::string>> texts;
  if (const auto it = manifest.find("extras"); it != manifest.end()) {
    if (!it->is_object()) throw FormatError("manifest 'extras' must be an object");
    for (const auto& [key, value] : it->items()) {
      if (key == kTextsKey) {
        if (!value.is_array() || value.size() != n_records) throw FormatError("extras.record_texts malformed");
        for (const auto& t : value) {
          if (t.is_null()) texts.emplace_back();
          else if (t.is_string()) texts.emplace_back(t.get<std::string>());
          else throw FormatError("extras.record_texts entries must be strings or null");
        }
      } else if (value.is_string()) {
        corpus.manifest[key] = value.get<std::string>();
      } else {
        corpus.manifest[key] = value.dump();
      }
    }
  }

  ByteReader r(read_file(dir / kCorpusTensorFile));
  if (r.remaining() < kMagic.size() || r.raw(kMagic.size()) != std::string_view(kMagic.data(), kMagic.size())) {
    throw FormatError("tensors.bin: bad magic");
  }
  if (r.u32() != kCorpusFormatVersion) throw FormatError("tensors.bin: unsupported version");

  const auto d_sim = static_cast<std::uint64_t>(corpus.d_sim);
  const auto d_cond = static_cast<std::uint64_t>(corpus.d_cond);
  corpus.records.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n_records, 1u << 20)));
  for (std::uint64_t i = 0; i < n_records; ++i) {
    PromptRecord rec;
    rec.id = r.raw(r.u32());
    const auto tokens = r.u32();
    r.need((d_sim + static_cast<std::uint64_t>(tokens) * d_cond) * 4 + 5, "record payload");
    if (tokens == 0 || tokens > static_cast<std::uint64_t>(corpus.max_tokens)) {
      throw ValidationError("record " + std::to_string(i) + ": token count " + std::to_string(tokens) +
                            " outside [1, max_tokens]");
    }
    rec.sim_embedding = r.vector(d_sim, "sim_embedding");
    rec.condition = r.matrix(tokens, d_cond, "condition");
    const auto has_class = r.u8();
    if (has_class > 1) throw FormatError("record " + std::to_string(i) + ": has_class flag must be 0 or 1");
    if (has_class == 1) rec.class_embedding = r.vector(d_cond, "class_embedding");
    rec.preference = r.f32();
    if (i < texts.size()) rec.text = texts[i];
    corpus.records.push_back(std::move(rec));
  }
  const auto uncond_tokens = r.u32();
  if (uncond_tokens == 0 || uncond_tokens > static_cast<std::uint64_t>(corpus.max_tokens)) {
    throw ValidationError("uncond token count outside [1, max_tokens]");
  }
  corpus.uncond = r.matrix(uncond_tokens, d_cond, "uncond");
  if (r.remaining() != 0) {
    throw FormatError("tensors.bin: " + std::to_string(r.remaining()) + " trailing bytes after payload");
  }

  validate_corpus(corpus);
  return corpus;
}

void quantize_to_f32(EmbeddingCorpus& corpus) {
  auto q = [](auto& t) { t = t.template cast<float>().template cast<double>(); };
  for (auto& r : corpus.records) {
    q(r.sim_embedding);
    q(r.condition);
    if (r.class_embedding) q(*r.class_embedding);
    r.preference = static_cast<double>(static_cast<float>(r.preference));
  }
  q(corpus.uncond);
}

}  // namespace drum
