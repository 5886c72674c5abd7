// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "medusa/tree.hpp"

namespace medusa {

// {"topk_per_head": [...], "paths": [[...], ...]}; a missing "paths" key
// selects the full Cartesian tree.
TreeSpec tree_spec_from_json(const nlohmann::json& j);
nlohmann::json tree_spec_to_json(const TreeSpec& spec);
TreeSpec load_tree_spec(const std::filesystem::path& path);

// Inspection dump: integer matrices as nested row-major arrays.
nlohmann::json buffers_to_json(const StaticTreeBuffers& buffers);
StaticTreeBuffers buffers_from_json(const nlohmann::json& j);

}  // namespace medusa
