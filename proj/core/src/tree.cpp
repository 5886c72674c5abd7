// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/tree.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "medusa/errors.hpp"

namespace medusa {
namespace {

std::string path_str(const std::vector<int>& path) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < path.size(); ++i) os << (i ? "," : "") << path[i];
  os << ')';
  return os.str();
}

bool bfs_less(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

int segment_offset(const std::vector<int>& topk, int depth) {
  // Candidate buffer layout: [root, head1 ranks..., head2 ranks..., ...].
  return 1 + std::accumulate(topk.begin(), topk.begin() + (depth - 1), 0);
}

}  // namespace

void TreeSpec::validate() const {
  if (topk_per_head.empty()) throw InvalidArgument("tree spec: topk_per_head is empty");
  for (std::size_t h = 0; h < topk_per_head.size(); ++h) {
    if (topk_per_head[h] <= 0) {
      throw InvalidArgument("tree spec: topk for head " + std::to_string(h + 1) +
                            " must be positive");
    }
  }
  std::set<std::vector<int>> seen;
  for (const auto& path : paths) {
    if (path.empty()) throw InvalidArgument("tree spec: empty path (the root is implicit)");
    if (path.size() > topk_per_head.size()) {
      throw InvalidArgument("tree spec: path " + path_str(path) + " is deeper than " +
                            std::to_string(topk_per_head.size()) + " heads");
    }
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (path[i] < 0 || path[i] >= topk_per_head[i]) {
        throw InvalidArgument("tree spec: rank " + std::to_string(path[i]) + " in path " +
                              path_str(path) + " is out of bounds for head " +
                              std::to_string(i + 1) + " (topk " +
                              std::to_string(topk_per_head[i]) + ")");
      }
    }
    if (!seen.insert(path).second) {
      throw InvalidArgument("tree spec: duplicate path " + path_str(path));
    }
  }
  for (const auto& path : paths) {
    if (path.size() < 2) continue;
    std::vector<int> prefix(path.begin(), path.end() - 1);
    if (!seen.contains(prefix)) {
      throw InvalidArgument("tree spec: path " + path_str(path) + " is missing its prefix " +
                            path_str(prefix));
    }
  }
}

TreeSpec TreeSpec::full(std::vector<int> topk) {
  TreeSpec spec;
  spec.topk_per_head = std::move(topk);
  std::vector<std::vector<int>> frontier{{}};
  for (int k : spec.topk_per_head) {
    std::vector<std::vector<int>> next;
    for (const auto& p : frontier) {
      for (int r = 0; r < k; ++r) {
        auto child = p;
        child.push_back(r);
        spec.paths.push_back(child);
        next.push_back(std::move(child));
      }
    }
    frontier = std::move(next);
  }
  return spec;
}

TreeSpec default_tree(int num_heads) {
  if (num_heads < 1 || num_heads > 8) {
    throw InvalidArgument("default_tree: head count must be in [1, 8], got " +
                          std::to_string(num_heads));
  }
  TreeSpec spec;
  for (int h = 0; h < num_heads; ++h) spec.topk_per_head.push_back(h == 0 ? 4 : h == 1 ? 3 : 2);

  for (int r = 0; r < spec.topk_per_head[0]; ++r) spec.paths.push_back({r});
  if (num_heads >= 2) {
    for (int r = 0; r < spec.topk_per_head[1]; ++r) spec.paths.push_back({0, r});
    spec.paths.push_back({1, 0});
  }
  std::vector<int> chain{0, 0};
  for (int depth = 3; depth <= num_heads; ++depth) {
    chain.push_back(0);
    spec.paths.push_back(chain);
  }
  return spec;
}

int StaticTreeBuffers::max_depth() const noexcept {
  return data_.node_depth.empty()
             ? 0
             : *std::max_element(data_.node_depth.begin(), data_.node_depth.end());
}

StaticTreeBuffers StaticTreeBuffers::from_raw(TreeBufferData data) {
  return StaticTreeBuffers(std::move(data));
}

StaticTreeBuffers compile_tree(const TreeSpec& spec) {
  spec.validate();

  std::vector<std::vector<int>> order = spec.paths;
  std::sort(order.begin(), order.end(), bfs_less);

  const int T = 1 + static_cast<int>(order.size());
  const int K = spec.num_heads();

  TreeBufferData d;
  d.num_nodes = T;
  d.num_heads = K;
  d.topk_per_head = spec.topk_per_head;
  d.candidate_len = 1 + std::accumulate(spec.topk_per_head.begin(), spec.topk_per_head.end(), 0);
  d.tree_indices.assign(T, 0);
  d.node_depth.assign(T, 0);
  d.node_parent.assign(T, -1);
  d.attn_mask.assign(static_cast<std::size_t>(T) * T, 0);

  std::map<std::vector<int>, int> index_of;
  index_of[{}] = 0;
  for (int i = 1; i < T; ++i) index_of[order[i - 1]] = i;

  std::vector<bool> has_child(T, false);
  for (int i = 1; i < T; ++i) {
    const auto& path = order[i - 1];
    const int depth = static_cast<int>(path.size());
    const int parent = index_of.at(std::vector<int>(path.begin(), path.end() - 1));
    d.node_depth[i] = depth;
    d.node_parent[i] = parent;
    d.tree_indices[i] = segment_offset(spec.topk_per_head, depth) + path.back();
    has_child[parent] = true;
  }

  // Parents precede children, so each row extends its parent's row.
  d.attn_mask[0] = 1;
  for (int i = 1; i < T; ++i) {
    const auto* parent_row = &d.attn_mask[static_cast<std::size_t>(d.node_parent[i]) * T];
    auto* row = &d.attn_mask[static_cast<std::size_t>(i) * T];
    std::copy(parent_row, parent_row + T, row);
    row[i] = 1;
  }

  for (int i = 0; i < T; ++i) {
    if (has_child[i]) continue;
    std::vector<int> chain;
    for (int n = i; n != -1; n = d.node_parent[n]) chain.push_back(n);
    std::reverse(chain.begin(), chain.end());
    d.path_lengths.push_back(static_cast<int>(chain.size()));
    chain.resize(K + 1, -1);
    d.retrieve_indices.insert(d.retrieve_indices.end(), chain.begin(), chain.end());
  }
  d.n_paths = static_cast<int>(d.path_lengths.size());

  return StaticTreeBuffers::from_raw(std::move(d));
}

// The oracle below deliberately avoids the parent table and row-extension
// used by compile_tree: ancestry is decided by prefix comparison of the
// TreeSpec paths, leaves by exhaustive child search.
ValidationReport validate_buffers(const StaticTreeBuffers& buffers, const TreeSpec& spec) {
  using F = ValidationReport::Failure;
  auto fail = [](F f, int row, int col, std::string msg) {
    ValidationReport r;
    r.failure = f;
    r.row = row;
    r.col = col;
    r.message = std::move(msg);
    return r;
  };

  try {
    spec.validate();
  } catch (const std::exception& e) {
    return fail(F::shape, -1, -1, std::string("invalid spec: ") + e.what());
  }

  std::vector<std::vector<int>> nodes{{}};
  {
    auto sorted = spec.paths;
    std::sort(sorted.begin(), sorted.end(), bfs_less);
    nodes.insert(nodes.end(), sorted.begin(), sorted.end());
  }
  const int T = static_cast<int>(nodes.size());
  const int K = spec.num_heads();
  const auto& raw = buffers.raw();

  if (raw.num_nodes != T || raw.num_heads != K ||
      raw.attn_mask.size() != static_cast<std::size_t>(T) * T ||
      raw.tree_indices.size() != static_cast<std::size_t>(T) ||
      raw.node_depth.size() != static_cast<std::size_t>(T) ||
      raw.retrieve_indices.size() != static_cast<std::size_t>(raw.n_paths) * (K + 1) ||
      raw.path_lengths.size() != static_cast<std::size_t>(raw.n_paths)) {
    return fail(F::shape, -1, -1, "buffer shapes disagree with the TreeSpec");
  }

  for (int i = 0; i < T; ++i) {
    const int depth = static_cast<int>(nodes[i].size());
    int expected = 0;
    if (depth > 0) {
      expected = 1 + nodes[i].back();
      for (int h = 0; h + 1 < depth; ++h) expected += spec.topk_per_head[h];
    }
    if (raw.tree_indices[i] != expected) {
      return fail(F::tree_indices, i, -1,
                  "tree_indices[" + std::to_string(i) + "] = " +
                      std::to_string(raw.tree_indices[i]) + ", expected " +
                      std::to_string(expected));
    }
    if (raw.node_depth[i] != depth) {
      return fail(F::depth, i, -1, "node_depth[" + std::to_string(i) + "] mismatch");
    }
  }

  auto is_prefix = [](const std::vector<int>& pre, const std::vector<int>& full) {
    if (pre.size() > full.size()) return false;
    for (std::size_t h = 0; h < pre.size(); ++h) {
      if (pre[h] != full[h]) return false;
    }
    return true;
  };

  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) {
      const bool expected = is_prefix(nodes[j], nodes[i]);
      if (buffers.visible(i, j) != expected) {
        return fail(F::mask, i, j,
                    "attn_mask[" + std::to_string(i) + "][" + std::to_string(j) + "] = " +
                        std::to_string(buffers.visible(i, j)) + ", expected " +
                        std::to_string(expected));
      }
    }
  }

  auto find_node = [&](const std::vector<int>& path) {
    for (int n = 0; n < T; ++n) {
      if (nodes[n] == path) return n;
    }
    return -1;
  };

  std::vector<int> leaves;
  for (int j = 0; j < T; ++j) {
    bool leaf = true;
    for (int i = 0; i < T && leaf; ++i) {
      if (nodes[i].size() == nodes[j].size() + 1 && is_prefix(nodes[j], nodes[i])) leaf = false;
    }
    if (leaf) leaves.push_back(j);
  }
  if (static_cast<int>(leaves.size()) != raw.n_paths) {
    return fail(F::retrieval, -1, -1,
                "n_paths = " + std::to_string(raw.n_paths) + ", expected " +
                    std::to_string(leaves.size()) + " leaves");
  }

  for (int r = 0; r < raw.n_paths; ++r) {
    std::vector<int> walk;
    for (auto path = nodes[leaves[r]];; path.pop_back()) {
      walk.push_back(find_node(path));
      if (path.empty()) break;
    }
    std::reverse(walk.begin(), walk.end());
    if (raw.path_lengths[r] != static_cast<int>(walk.size())) {
      return fail(F::retrieval, r, -1,
                  "retrieve row " + std::to_string(r) + " has length " +
                      std::to_string(raw.path_lengths[r]) + ", expected the path to leaf " +
                      std::to_string(leaves[r]));
    }
    walk.resize(K + 1, -1);
    for (int c = 0; c <= K; ++c) {
      if (raw.retrieve_indices[static_cast<std::size_t>(r) * (K + 1) + c] != walk[c]) {
        return fail(F::retrieval, r, c,
                    "retrieve row " + std::to_string(r) + " column " + std::to_string(c) +
                        " does not follow the path to leaf " + std::to_string(leaves[r]));
      }
    }
  }
  return {};
}

}  // namespace medusa
