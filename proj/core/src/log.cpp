// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/log.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <string>

namespace medusa::log {
namespace {

std::atomic<int> g_level{static_cast<int>(Level::warn)};

const char* level_name(Level level) {
  switch (level) {
    case Level::error: return "error";
    case Level::warn: return "warn";
    case Level::info: return "info";
    case Level::debug: return "debug";
  }
  return "?";
}

}  // namespace

void set_level(Level level) { g_level.store(static_cast<int>(level)); }
Level level() { return static_cast<Level>(g_level.load()); }

void emit(Level lvl, std::string_view event, nlohmann::json fields) {
  if (static_cast<int>(lvl) > g_level.load()) return;
  nlohmann::json rec = nlohmann::json::object();
  rec["ts_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::system_clock::now().time_since_epoch())
                     .count();
  rec["level"] = level_name(lvl);
  rec["event"] = std::string(event);
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) rec[k] = v;
  }
  const std::string line = rec.dump() + "\n";
  std::fputs(line.c_str(), stderr);
}

}  // namespace medusa::log
