// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/tree_io.hpp"

#include <fstream>

#include "medusa/errors.hpp"

namespace medusa {
namespace {

nlohmann::json matrix(std::span<const int> flat, int rows, int cols) {
  auto out = nlohmann::json::array();
  for (int r = 0; r < rows; ++r) {
    out.push_back(std::vector<int>(flat.begin() + static_cast<std::ptrdiff_t>(r) * cols,
                                   flat.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols));
  }
  return out;
}

}  // namespace

TreeSpec tree_spec_from_json(const nlohmann::json& j) {
  try {
    TreeSpec spec;
    spec.topk_per_head = j.at("topk_per_head").get<std::vector<int>>();
    if (j.contains("paths")) {
      spec.paths = j.at("paths").get<std::vector<std::vector<int>>>();
    } else {
      spec = TreeSpec::full(spec.topk_per_head);
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("tree spec JSON: ") + e.what());
  }
}

nlohmann::json tree_spec_to_json(const TreeSpec& spec) {
  return {{"topk_per_head", spec.topk_per_head}, {"paths", spec.paths}};
}

TreeSpec load_tree_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tree spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("tree spec " + path.string() + ": " + e.what());
  }
  return tree_spec_from_json(j);
}

nlohmann::json buffers_to_json(const StaticTreeBuffers& b) {
  const auto& d = b.raw();
  std::vector<int> mask(d.attn_mask.begin(), d.attn_mask.end());
  return {
      {"T", d.num_nodes},
      {"num_heads", d.num_heads},
      {"n_paths", d.n_paths},
      {"topk_per_head", d.topk_per_head},
      {"candidate_len", d.candidate_len},
      {"attn_mask", matrix(mask, d.num_nodes, d.num_nodes)},
      {"tree_indices", d.tree_indices},
      {"retrieve_indices", matrix(d.retrieve_indices, d.n_paths, d.num_heads + 1)},
      {"path_lengths", d.path_lengths},
      {"node_depth", d.node_depth},
      {"node_parent", d.node_parent},
  };
}

StaticTreeBuffers buffers_from_json(const nlohmann::json& j) {
  try {
    TreeBufferData d;
    d.num_nodes = j.at("T").get<int>();
    d.num_heads = j.at("num_heads").get<int>();
    d.n_paths = j.at("n_paths").get<int>();
    d.topk_per_head = j.at("topk_per_head").get<std::vector<int>>();
    d.candidate_len = j.at("candidate_len").get<int>();
    for (const auto& row : j.at("attn_mask")) {
      for (int v : row.get<std::vector<int>>()) d.attn_mask.push_back(static_cast<std::uint8_t>(v));
    }
    d.tree_indices = j.at("tree_indices").get<std::vector<int>>();
    for (const auto& row : j.at("retrieve_indices")) {
      auto r = row.get<std::vector<int>>();
      d.retrieve_indices.insert(d.retrieve_indices.end(), r.begin(), r.end());
    }
    d.path_lengths = j.at("path_lengths").get<std::vector<int>>();
    d.node_depth = j.at("node_depth").get<std::vector<int>>();
    d.node_parent = j.at("node_parent").get<std::vector<int>>();
    return StaticTreeBuffers::from_raw(std::move(d));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("buffer dump JSON: ") + e.what());
  }
}

}  // namespace medusa
