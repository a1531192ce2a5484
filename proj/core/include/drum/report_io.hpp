// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "drum/coreset.hpp"
#include "drum/eval.hpp"
#include "drum/trainer.hpp"

namespace drum {

/// JSON array, one object per report with config, aggregates and per-user rows.
std::string reports_to_json(std::span<const EvalReport> reports);

/// CSV with a header and one row per report.
std::string reports_to_csv(std::span<const EvalReport> reports);

std::string alpha_sweep_to_json(std::span<const AlphaSweepRow> rows);
std::string alpha_sweep_to_csv(std::span<const AlphaSweepRow> rows);

/// Deterministic per seed: wall-clock time is left to the run manifest.
std::string train_report_to_json(const TrainReport& report, const TrainConfig& cfg, const AdapterConfig& arch);

/// {"indices": [...], "ids": [...], "config": {...}}
std::string profile_to_json(const UserProfile& profile, const CoresetConfig& cfg, double ratio);
UserProfile profile_from_json(const std::string& text);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace drum
