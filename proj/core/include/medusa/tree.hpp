// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace medusa {

/// A sparse candidate tree. Each path (r_1, ..., r_d) names a node at depth d
/// reached by taking the r_1-th candidate of head 1, then the r_2-th candidate
/// of head 2, and so on. The root (depth 0) is implicit.
struct TreeSpec {
  std::vector<int> topk_per_head;
  std::vector<std::vector<int>> paths;

  int num_heads() const { return static_cast<int>(topk_per_head.size()); }
  int num_nodes() const { return 1 + static_cast<int>(paths.size()); }

  /// Checks prefix closure, rank bounds and duplicates; throws InvalidArgument.
  void validate() const;

  /// The full Cartesian tree of the given per-head top-k values.
  static TreeSpec full(std::vector<int> topk_per_head);

  friend bool operator==(const TreeSpec&, const TreeSpec&) = default;
};

/// Default tree for K heads (1 <= K <= 8):
///   - topk per head decays as 4, 3, 2, 2, ... truncated to K;
///   - every depth-1 candidate is a node;
///   - depth 2 holds all children of rank 0 and the rank-0 child of rank 1;
///   - deeper levels extend a single chain (0, 0, ..., 0).
/// The result always has at most 32 nodes.
TreeSpec default_tree(int num_heads);

/// Raw contents of the compiled buffers. Matrices are row-major.
struct TreeBufferData {
  int num_nodes = 0;      // T, root included
  int num_heads = 0;      // K
  int n_paths = 0;        // root-to-leaf paths
  std::vector<int> topk_per_head;
  int candidate_len = 0;  // 1 + sum(topk_per_head)
  std::vector<std::uint8_t> attn_mask;  // T x T, 1 = visible
  std::vector<int> tree_indices;        // T, node -> candidate buffer offset
  std::vector<int> retrieve_indices;    // n_paths x (K + 1), -1 padded
  std::vector<int> path_lengths;        // n_paths, valid entries per row
  std::vector<int> node_depth;          // T
  std::vector<int> node_parent;         // T, -1 for the root

  friend bool operator==(const TreeBufferData&, const TreeBufferData&) = default;
};

/// Immutable, shape-invariant tree buffers consumed by the decode engine.
/// Nodes are ordered breadth-first with ascending rank tuples inside a depth,
/// so ancestors always precede descendants.
class StaticTreeBuffers {
 public:
  /// Wraps raw data without checking it. Meant for loading dumps and for
  /// fault-injection tests; use `compile_tree` for anything else.
  static StaticTreeBuffers from_raw(TreeBufferData data);

  int num_nodes() const noexcept { return data_.num_nodes; }
  int num_heads() const noexcept { return data_.num_heads; }
  int n_paths() const noexcept { return data_.n_paths; }
  int row_width() const noexcept { return data_.num_heads + 1; }
  int candidate_len() const noexcept { return data_.candidate_len; }
  int max_depth() const noexcept;

  bool visible(int query_node, int key_node) const noexcept {
    return data_.attn_mask[static_cast<std::size_t>(query_node) * data_.num_nodes + key_node] != 0;
  }
  std::span<const std::uint8_t> attn_mask() const noexcept { return data_.attn_mask; }
  std::span<const std::uint8_t> mask_row(int node) const noexcept {
    return std::span(data_.attn_mask).subspan(static_cast<std::size_t>(node) * data_.num_nodes,
                                              data_.num_nodes);
  }
  std::span<const int> topk_per_head() const noexcept { return data_.topk_per_head; }
  std::span<const int> tree_indices() const noexcept { return data_.tree_indices; }
  std::span<const int> node_depth() const noexcept { return data_.node_depth; }
  std::span<const int> node_parent() const noexcept { return data_.node_parent; }
  std::span<const int> retrieve_indices() const noexcept { return data_.retrieve_indices; }
  std::span<const int> retrieve_row(int row) const noexcept {
    return std::span(data_.retrieve_indices)
        .subspan(static_cast<std::size_t>(row) * row_width(), row_width());
  }
  std::span<const int> path_lengths() const noexcept { return data_.path_lengths; }

  const TreeBufferData& raw() const noexcept { return data_; }

  friend bool operator==(const StaticTreeBuffers&, const StaticTreeBuffers&) = default;

 private:
  explicit StaticTreeBuffers(TreeBufferData data) : data_(std::move(data)) {}

  TreeBufferData data_;
};

/// Offline compilation of a TreeSpec. Throws InvalidArgument when its paths are
/// not prefix-closed (naming the missing prefix) or a rank is out of
/// bounds (naming the path and head).
StaticTreeBuffers compile_tree(const TreeSpec& spec);

struct ValidationReport {
  enum class Failure { none, shape, tree_indices, depth, mask, retrieval };

  Failure failure = Failure::none;
  int row = -1;  // mask: query node; retrieval: table row
  int col = -1;  // mask: key node; retrieval: column
  std::string message;

  bool ok() const noexcept { return failure == Failure::none; }
};

/// Independent re-derivation of every buffer: the mask by explicit ancestor
/// enumeration over the TreeSpec paths, the retrieval table by walking each
/// leaf up to the root. Reports the first mismatch.
ValidationReport validate_buffers(const StaticTreeBuffers& buffers, const TreeSpec& spec);

}  // namespace medusa
