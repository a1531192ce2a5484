// SPDX-License-Identifier: Apache-2.0
#include "drum/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "drum/error.hpp"

namespace drum {

namespace {

using json = nlohmann::json;

json tensor_table(const AdapterParams& params) {
  json table = json::array();
  for (const auto& spec : params.tensors()) {
    table.push_back({{"name", spec.name}, {"shape", {spec.rows, spec.cols}}});
  }
  return table;
}

}  // namespace

void save_checkpoint(const AdapterParams& params, const CheckpointInfo& info, const std::filesystem::path& dir) {
  if (!params.all_finite()) throw NumericError("refusing to save non-finite parameters");
  const auto& cfg = params.config();
  const json manifest = {
      {"format_version", kCheckpointFormatVersion},
      {"architecture",
       {{"d_cond", cfg.d_cond},
        {"d_model", cfg.d_model},
        {"n_heads", cfg.n_heads},
        {"n_layers", cfg.n_layers},
        {"ln_eps", cfg.ln_eps},
        {"projected", cfg.projected()}}},
      {"step", info.step},
      {"seed", info.seed},
      {"dtype", "f32-le"},
      {"tensors", tensor_table(params)},
  };

  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(params.size()) * 4);
  for (const double v : params.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int shift = 0; shift < 32; shift += 8) bytes.push_back(static_cast<std::uint8_t>(bits >> shift));
  }

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  }
  std::ofstream out(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + (dir / "weights.bin").string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / "manifest.json");
  if (!manifest_in) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(manifest_in);
    if (manifest.at("format_version").get<std::uint32_t>() != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint format_version");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest malformed: ") + e.what());
  }

  AdapterConfig cfg;
  CheckpointInfo info;
  try {
    const auto& arch = manifest.at("architecture");
    cfg.d_cond = arch.at("d_cond").get<Index>();
    cfg.d_model = arch.at("d_model").get<Index>();
    cfg.n_heads = arch.at("n_heads").get<Index>();
    cfg.n_layers = arch.at("n_layers").get<Index>();
    cfg.ln_eps = arch.at("ln_eps").get<double>();
    info.step = manifest.at("step").get<std::int64_t>();
    info.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest malformed: ") + e.what());
  }

  AdapterParams params(cfg);
  if (manifest.contains("tensors") && manifest["tensors"] != tensor_table(params)) {
    throw FormatError("checkpoint tensor table does not match its architecture");
  }

  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw IoError("cannot open " + (dir / "weights.bin").string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto expected = static_cast<std::size_t>(params.size()) * 4;
  if (bytes.size() < expected) throw TruncatedError("weights.bin shorter than the architecture requires");
  if (bytes.size() > expected) throw FormatError("weights.bin has trailing bytes");

  auto values = params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  if (!params.all_finite()) throw ValidationError("checkpoint contains non-finite weights");
  return {std::move(params), info};
}

}  // namespace drum
