// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace drum::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Entry point for every subcommand: gen-synthetic, inspect, sample, train,
/// personalize, evaluate, sweep. Machine output goes to `out`, progress and
/// diagnostics to `err`.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace drum::cli
