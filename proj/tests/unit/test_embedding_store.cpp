// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <limits>

#include "drum/embedding_store.hpp"
#include "drum/error.hpp"
#include "drum/synthetic.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace drum {
namespace {

using test::TempDir;

EmbeddingCorpus tiny_corpus() {
  EmbeddingCorpus c;
  c.d_sim = 2;
  c.d_cond = 2;
  c.max_tokens = 2;
  PromptRecord r;
  r.id = "a";
  r.sim_embedding = Vector{{1.0, 0.5}};
  r.condition = Matrix{{0.25, -1.0}};
  r.class_embedding = Vector{{2.0, 3.0}};
  r.preference = 0.75;
  c.records.push_back(r);
  c.uncond = Matrix{{1.0, 2.0}, {-0.5, 4.0}};
  c.manifest["encoder"] = "stub";
  return c;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f32(std::string& out, float f) { append_u32(out, std::bit_cast<std::uint32_t>(f)); }

TEST(EmbeddingStore, TensorFileLayoutIsExact) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());

  std::string expected = "DRUM";
  append_u32(expected, 1);
  append_u32(expected, 1);
  expected += "a";
  append_u32(expected, 1);
  for (float f : {1.0f, 0.5f}) append_f32(expected, f);
  for (float f : {0.25f, -1.0f}) append_f32(expected, f);
  expected.push_back('\x01');
  for (float f : {2.0f, 3.0f}) append_f32(expected, f);
  append_f32(expected, 0.75f);
  append_u32(expected, 2);
  for (float f : {1.0f, 2.0f, -0.5f, 4.0f}) append_f32(expected, f);

  EXPECT_EQ(test::read_bytes(dir / "tensors.bin"), expected);

  const auto manifest = nlohmann::json::parse(test::read_bytes(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("format_version"), 1);
  EXPECT_EQ(manifest.at("d_sim"), 2);
  EXPECT_EQ(manifest.at("d_cond"), 2);
  EXPECT_EQ(manifest.at("max_tokens"), 2);
  EXPECT_EQ(manifest.at("n_records"), 1);
  EXPECT_EQ(manifest.at("encoder"), "stub");
}

TEST(EmbeddingStore, EmptyCorpusRoundTrips) {
  TempDir dir;
  EmbeddingCorpus c = tiny_corpus();
  c.records.clear();
  save_corpus(c, dir.path());
  const auto manifest = nlohmann::json::parse(test::read_bytes(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("n_records"), 0);
  const EmbeddingCorpus loaded = load_corpus(dir.path());
  EXPECT_EQ(loaded.size(), 0);
  EXPECT_EQ(loaded, c);
}

TEST(EmbeddingStore, RoundTripOverRandomSyntheticSpecs) {
  Rng rng(2024);
  for (int i = 0; i < 120; ++i) {
    SyntheticSpec spec;
    spec.n_users = 1 + static_cast<Index>(rng.uniform_index(4));
    spec.history_len = 1 + static_cast<Index>(rng.uniform_index(6));
    spec.d_sim = 1 + static_cast<Index>(rng.uniform_index(12));
    spec.d_cond = 1 + static_cast<Index>(rng.uniform_index(12));
    spec.max_tokens = 1 + static_cast<Index>(rng.uniform_index(6));
    spec.archetypes = 1 + static_cast<Index>(rng.uniform_index(4));
    spec.seed = rng.next();
    const EmbeddingCorpus c = gen_synthetic(spec);
    TempDir dir;
    save_corpus(c, dir.path());
    const EmbeddingCorpus loaded = load_corpus(dir.path());
    ASSERT_EQ(loaded, c) << "spec #" << i;
  }
}

TEST(EmbeddingStore, TextsAndProvenanceRoundTrip) {
  TempDir dir;
  EmbeddingCorpus c = tiny_corpus();
  c.records[0].text = "a photo of a cat";
  PromptRecord second = c.records[0];
  second.id = "b";
  second.text.reset();
  second.class_embedding.reset();
  c.records.push_back(second);
  c.manifest["source"] = "unit";
  save_corpus(c, dir.path());
  const EmbeddingCorpus loaded = load_corpus(dir.path());
  EXPECT_EQ(loaded, c);
  EXPECT_EQ(loaded.records[0].text, "a photo of a cat");
  EXPECT_FALSE(loaded.records[1].text.has_value());
  EXPECT_EQ(loaded.manifest.at("source"), "unit");
  EXPECT_EQ(loaded.encoder(), "stub");
}

TEST(EmbeddingStore, SaveIsDeterministic) {
  SyntheticSpec spec;
  spec.seed = 99;
  const EmbeddingCorpus c = gen_synthetic(spec);
  TempDir a, b;
  save_corpus(c, a.path());
  save_corpus(c, b.path());
  EXPECT_EQ(test::read_bytes(a / "tensors.bin"), test::read_bytes(b / "tensors.bin"));
  EXPECT_EQ(test::read_bytes(a / "manifest.json"), test::read_bytes(b / "manifest.json"));
}

TEST(EmbeddingStore, CorruptedMagicIsFormatError) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  std::string bytes = test::read_bytes(dir / "tensors.bin");
  bytes[0] = 'X';
  test::write_bytes(dir / "tensors.bin", bytes);
  EXPECT_THROW(load_corpus(dir.path()), FormatError);
}

TEST(EmbeddingStore, UnknownVersionIsFormatError) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  std::string bytes = test::read_bytes(dir / "tensors.bin");
  bytes[4] = 7;
  test::write_bytes(dir / "tensors.bin", bytes);
  EXPECT_THROW(load_corpus(dir.path()), FormatError);
}

TEST(EmbeddingStore, ShortPayloadIsTruncationError) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  const std::string bytes = test::read_bytes(dir / "tensors.bin");
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    test::write_bytes(dir / "tensors.bin", bytes.substr(0, cut));
    if (cut < 8) {
      EXPECT_THROW(load_corpus(dir.path()), Error) << "cut at " << cut;
    } else {
      EXPECT_THROW(load_corpus(dir.path()), TruncatedError) << "cut at " << cut;
    }
  }
}

TEST(EmbeddingStore, ManifestClaimingMoreRecordsIsTruncation) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  auto manifest = nlohmann::json::parse(test::read_bytes(dir / "manifest.json"));
  manifest["n_records"] = 3;
  test::write_bytes(dir / "manifest.json", manifest.dump());
  EXPECT_THROW(load_corpus(dir.path()), TruncatedError);
}

TEST(EmbeddingStore, TrailingBytesAreFormatError) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  test::write_bytes(dir / "tensors.bin", test::read_bytes(dir / "tensors.bin") + "xx");
  EXPECT_THROW(load_corpus(dir.path()), FormatError);
}

TEST(EmbeddingStore, MutatedTokenCountFailsToLoad) {
  SyntheticSpec spec;
  spec.n_users = 2;
  spec.history_len = 3;
  spec.d_sim = 3;
  spec.d_cond = 3;
  spec.max_tokens = 4;
  spec.seed = 5;
  const EmbeddingCorpus c = gen_synthetic(spec);
  TempDir dir;
  save_corpus(c, dir.path());
  const std::string original = test::read_bytes(dir / "tensors.bin");

  // Walk the record table to find every token-count field.
  std::size_t pos = 8;
  for (const auto& r : c.records) {
    pos += 4 + r.id.size();
    const std::size_t t_field = pos;
    for (int byte = 0; byte < 4; ++byte) {
      for (const unsigned char value : {0x00, 0x01, 0x02, 0x03, 0x05, 0x40, 0xFF}) {
        std::string bytes = original;
        if (static_cast<unsigned char>(bytes[t_field + byte]) == value) continue;
        bytes[t_field + byte] = static_cast<char>(value);
        test::write_bytes(dir / "tensors.bin", bytes);
        EXPECT_THROW(load_corpus(dir.path()), Error) << r.id << " byte " << byte << " value " << int(value);
      }
    }
    pos += 4 + 4 * static_cast<std::size_t>(c.d_sim + r.tokens() * c.d_cond) + 1;
    if (r.class_embedding) pos += 4 * static_cast<std::size_t>(c.d_cond);
    pos += 4;
  }
  EXPECT_EQ(pos + 4 + 4 * static_cast<std::size_t>(c.uncond.size()), original.size());
}

TEST(EmbeddingStore, MutatedManifestDimensionFailsToLoad) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  const std::string original = test::read_bytes(dir / "manifest.json");
  for (const char* key : {"d_sim", "d_cond", "max_tokens"}) {
    for (const int value : {0, 1, 3, 9}) {
      auto manifest = nlohmann::json::parse(original);
      if (manifest[key] == value) continue;
      if (std::string(key) == "max_tokens" && value >= 2) continue;  // still admits every record
      manifest[key] = value;
      test::write_bytes(dir / "manifest.json", manifest.dump());
      EXPECT_THROW(load_corpus(dir.path()), Error) << key << "=" << value;
    }
  }
}

TEST(EmbeddingStore, BadClassFlagIsFormatError) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  std::string bytes = test::read_bytes(dir / "tensors.bin");
  const std::size_t flag = 8 + 4 + 1 + 4 + 8 + 8;
  ASSERT_EQ(bytes[flag], 1);
  bytes[flag] = 2;
  test::write_bytes(dir / "tensors.bin", bytes);
  EXPECT_THROW(load_corpus(dir.path()), FormatError);
}

TEST(EmbeddingStore, NegativePreferenceRejectedAtLoad) {
  TempDir dir;
  save_corpus(tiny_corpus(), dir.path());
  std::string bytes = test::read_bytes(dir / "tensors.bin");
  const std::size_t pref = 8 + 4 + 1 + 4 + 8 + 8 + 1 + 8;
  const auto neg = std::bit_cast<std::uint32_t>(-0.5f);
  for (int i = 0; i < 4; ++i) bytes[pref + i] = static_cast<char>((neg >> (8 * i)) & 0xFF);
  test::write_bytes(dir / "tensors.bin", bytes);
  EXPECT_THROW(load_corpus(dir.path()), ValidationError);
}

TEST(EmbeddingStore, MissingFilesAreIoErrors) {
  TempDir dir;
  EXPECT_THROW(load_corpus(dir / "absent"), IoError);
}

TEST(EmbeddingStore, ValidateNamesViolatedInvariants) {
  const EmbeddingCorpus good = tiny_corpus();
  EXPECT_NO_THROW(validate_corpus(good));

  auto expect_invalid = [](EmbeddingCorpus c, const std::string& needle) {
    try {
      validate_corpus(c);
      ADD_FAILURE() << "expected ValidationError mentioning " << needle;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  auto c = good;
  c.records.push_back(c.records[0]);
  expect_invalid(c, "duplicate");

  c = good;
  c.records[0].sim_embedding = Vector::Zero(3);
  expect_invalid(c, "sim_embedding");

  c = good;
  c.records[0].sim_embedding(0) = std::numeric_limits<double>::quiet_NaN();
  expect_invalid(c, "NaN");

  c = good;
  c.records[0].condition = Matrix(0, 2);
  expect_invalid(c, "no tokens");

  c = good;
  c.records[0].condition = Matrix::Ones(3, 2);
  expect_invalid(c, "max_tokens");

  c = good;
  c.records[0].condition = Matrix::Ones(1, 3);
  expect_invalid(c, "d_cond");

  c = good;
  c.records[0].class_embedding = Vector::Ones(5);
  expect_invalid(c, "class_embedding");

  c = good;
  c.records[0].preference = -1.0;
  expect_invalid(c, "preference");

  c = good;
  c.uncond = Matrix(0, 2);
  expect_invalid(c, "uncond");
}

TEST(EmbeddingStore, SaveRejectsInvalidCorpus) {
  TempDir dir;
  auto c = tiny_corpus();
  c.records[0].preference = std::numeric_limits<double>::infinity();
  EXPECT_THROW(save_corpus(c, dir.path()), ValidationError);
}

TEST(EmbeddingStore, QuantizeMakesSaveLossless) {
  Rng rng(1);
  EmbeddingCorpus c = tiny_corpus();
  c.records[0].condition = test::random_matrix(2, 2, rng);
  c.uncond = test::random_matrix(2, 2, rng);
  TempDir dir;
  save_corpus(c, dir.path());
  EXPECT_NE(load_corpus(dir.path()), c);
  quantize_to_f32(c);
  save_corpus(c, dir.path());
  EXPECT_EQ(load_corpus(dir.path()), c);
}

TEST(EmbeddingStore, FindById) {
  const auto c = tiny_corpus();
  EXPECT_EQ(c.find("a"), 0);
  EXPECT_FALSE(c.find("zzz").has_value());
}

}  // namespace
}  // namespace drum
