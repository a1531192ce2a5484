// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <limits>

#include "drum/checkpoint.hpp"
#include "drum/error.hpp"
#include "json.hpp"
#include "test_support.hpp"

namespace drum {
namespace {

using test::TempDir;

AdapterConfig cfg(Index d_cond, Index d_model) {
  AdapterConfig c;
  c.d_cond = d_cond;
  c.d_model = d_model;
  c.n_heads = 2;
  c.n_layers = 2;
  return c;
}

TEST(Checkpoint, RoundTripRoundsToFloat) {
  for (const auto& c : {cfg(8, 8), cfg(6, 4)}) {
    const auto params = AdapterParams::initialize(c, 3);
    TempDir dir;
    save_checkpoint(params, {123, 77}, dir.path());
    const auto loaded = load_checkpoint(dir.path());
    EXPECT_EQ(loaded.info.step, 123);
    EXPECT_EQ(loaded.info.seed, 77u);
    ASSERT_EQ(loaded.params.size(), params.size());
    EXPECT_EQ(loaded.params.config().d_model, c.d_model);
    EXPECT_EQ(loaded.params.config().n_layers, 2);
    for (Index i = 0; i < params.size(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      EXPECT_EQ(loaded.params.values()[k], static_cast<double>(static_cast<float>(params.values()[k])));
    }
    TempDir again;
    save_checkpoint(loaded.params, loaded.info, again.path());
    EXPECT_EQ(test::read_bytes(dir / "weights.bin"), test::read_bytes(again / "weights.bin"));
    EXPECT_EQ(test::read_bytes(dir / "manifest.json"), test::read_bytes(again / "manifest.json"));
  }
}

TEST(Checkpoint, WeightsAreRawLittleEndianFloatsInTensorOrder) {
  auto params = AdapterParams(cfg(4, 4));
  for (Index i = 0; i < params.size(); ++i) params.values()[static_cast<std::size_t>(i)] = 0.5 * static_cast<double>(i);
  TempDir dir;
  save_checkpoint(params, {}, dir.path());
  const std::string bytes = test::read_bytes(dir / "weights.bin");
  ASSERT_EQ(bytes.size(), static_cast<std::size_t>(params.size()) * 4);
  for (Index i = 0; i < params.size(); ++i) {
    std::uint32_t word = 0;
    for (int b = 0; b < 4; ++b) {
      word |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(4 * i + b)])) << (8 * b);
    }
    EXPECT_EQ(std::bit_cast<float>(word), static_cast<float>(0.5 * static_cast<double>(i)));
  }
  const auto manifest = nlohmann::json::parse(test::read_bytes(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("dtype"), "f32-le");
  EXPECT_EQ(manifest.at("tensors").size(), params.tensors().size());
  EXPECT_EQ(manifest.at("tensors")[0].at("name"), "layers.0.ln.gain");
}

TEST(Checkpoint, Errors) {
  const auto params = AdapterParams::initialize(cfg(8, 8), 1);
  TempDir dir;
  save_checkpoint(params, {}, dir.path());
  const std::string weights = test::read_bytes(dir / "weights.bin");
  const std::string manifest = test::read_bytes(dir / "manifest.json");

  test::write_bytes(dir / "weights.bin", weights.substr(0, weights.size() - 3));
  EXPECT_THROW(load_checkpoint(dir.path()), TruncatedError);
  test::write_bytes(dir / "weights.bin", weights + "abcd");
  EXPECT_THROW(load_checkpoint(dir.path()), FormatError);
  test::write_bytes(dir / "weights.bin", weights);

  auto j = nlohmann::json::parse(manifest);
  j["architecture"]["n_heads"] = 3;
  test::write_bytes(dir / "manifest.json", j.dump());
  EXPECT_THROW(load_checkpoint(dir.path()), ConfigError);

  j = nlohmann::json::parse(manifest);
  j["architecture"]["n_layers"] = 3;
  test::write_bytes(dir / "manifest.json", j.dump());
  EXPECT_THROW(load_checkpoint(dir.path()), Error);

  j = nlohmann::json::parse(manifest);
  j.erase("step");
  test::write_bytes(dir / "manifest.json", j.dump());
  EXPECT_THROW(load_checkpoint(dir.path()), FormatError);

  test::write_bytes(dir / "manifest.json", "{not json");
  EXPECT_THROW(load_checkpoint(dir.path()), FormatError);

  EXPECT_THROW(load_checkpoint(dir / "missing"), IoError);

  auto bad = params;
  bad.values()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(save_checkpoint(bad, {}, dir / "nan"), NumericError);
}

}  // namespace
}  // namespace drum
