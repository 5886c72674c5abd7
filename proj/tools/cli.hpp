// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace medusa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one invocation. `args` excludes the program name. Results go to
/// `out`; usage and error text go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Token ids for a prompt given either as comma-separated ids ("0,17,5")
/// or as text. Text becomes BOS followed by one token per byte b,
/// 4 + (b mod (vocab - 4)).
std::vector<int> parse_prompt(std::string_view prompt, int vocab_size);

}  // namespace medusa::cli
