// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "medusa/model.hpp"

namespace medusa {

nlohmann::json config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; the result is validated.
ModelConfig config_from_json(const nlohmann::json& j);
ModelConfig load_config(const std::filesystem::path& path);

enum class DType { f32, f64 };

// Layout:
//   u64 little-endian header length H
//   H bytes of JSON: {"format": "medusa-checkpoint", "version": 1,
//                     "config": {...},
//                     "tensors": [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
//   payload; tensor offsets are relative to the first payload byte.
void save_checkpoint(const ModelBundle<double>& bundle, const std::filesystem::path& path,
                     DType dtype = DType::f64);
ModelBundle<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace medusa
