// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

#include <nlohmann/json.hpp>

namespace medusa::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

// Records at or below this level are written to stderr as JSON lines.
void set_level(Level level);
Level level();

void emit(Level level, std::string_view event, nlohmann::json fields = nlohmann::json::object());

inline void warn(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::warn, event, std::move(fields));
}
inline void info(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::info, event, std::move(fields));
}
inline void debug(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
  emit(Level::debug, event, std::move(fields));
}

}  // namespace medusa::log
