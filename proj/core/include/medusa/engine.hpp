// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medusa/model.hpp"
#include "medusa/tree.hpp"

namespace medusa {

struct GenerationOptions {
  int max_new_tokens = 64;
  /// Generation stops after emitting this token (it is included in the output).
  std::optional<int> eos_token;
};

struct AutoregressiveResult {
  std::vector<int> tokens;
  std::vector<double> step_seconds;  // one entry per single-token decode pass
  double prefill_seconds = 0.0;
};

/// Flat draft buffer [root, head-1 ranks..., head-2 ranks..., ...]. Its
/// length, 1 + sum(topk_per_head), is the same at every step.
using CandidateBuffer = std::vector<int>;

/// Result of verifying one tree.
///
/// Counting convention: `accepted_len` = 1 (the root, which is the backbone's
/// own argmax and therefore always correct) + the number of speculative
/// nodes accepted below it. `emitted_tokens` are the tokens of those nodes
/// in depth order; the bonus token (backbone argmax at the deepest accepted
/// node) is not emitted here but becomes the next step's root.
struct StepOutcome {
  int accepted_len = 1;
  int chosen_path_row = 0;
  int deepest_node = 0;
  int bonus_token = 0;
  std::vector<int> emitted_tokens;
};

struct SpeculativeResult {
  std::vector<int> tokens;
  std::vector<StepOutcome> steps;    // emitted_tokens are truncated at max_new_tokens / EOS
  std::vector<double> step_seconds;  // one entry per draft/verify/commit iteration
  double prefill_seconds = 0.0;
};

/// Work done between verification and emission in one step.
struct RetrievalStats {
  int table_lookups = 0;
  int gathers = 0;
  int token_branches = 0;  // control-flow decisions taken on token values
};

/// Hook invoked by generate_speculative. Each step reports the shape of
/// every tensor it touches, then its retrieval statistics, then ends.
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_tensor(std::string_view /*name*/, std::vector<int> /*shape*/) {}
  virtual void on_retrieval(const RetrievalStats& /*stats*/) {}
  virtual void on_step_end() {}
};

/// Records the multiset of tensor shapes of every step.
class ShapeRecorder final : public StepObserver {
 public:
  using ShapeSet = std::multimap<std::string, std::vector<int>>;

  void on_tensor(std::string_view name, std::vector<int> shape) override;
  void on_retrieval(const RetrievalStats& stats) override;
  void on_step_end() override;

  const std::vector<ShapeSet>& steps() const noexcept { return steps_; }
  /// True when every recorded step touched identical shapes.
  bool uniform() const;
  long table_lookups() const noexcept { return lookups_; }
  long gathers() const noexcept { return gathers_; }
  long token_branches() const noexcept { return token_branches_; }

 private:
  ShapeSet current_;
  std::vector<ShapeSet> steps_;
  long lookups_ = 0;
  long gathers_ = 0;
  long token_branches_ = 0;
};

/// Root = argmax(base_logits). Segment k holds the top-(topk[k]) tokens of
/// draft head k, best first, ties broken toward the lower token id.
template <class Real>
CandidateBuffer draft_candidates(const ModelBundle<Real>& bundle, std::span<const Real> h_last,
                                 std::span<const Real> base_logits,
                                 std::span<const int> topk_per_head);

/// tree_tokens[i] = candidates[tree_indices[i]].
std::vector<int> assemble_tree_tokens(std::span<const int> candidates,
                                      const StaticTreeBuffers& buffers);

/// Greedy acceptance: along each retrieval row a node is accepted iff its
/// token equals the backbone argmax at its parent and its parent was
/// accepted. The longest row wins; ties go to the lower row index.
template <class Real>
StepOutcome verify_and_accept(const BlockOutput<Real>& tree, std::span<const int> tree_tokens,
                              const StaticTreeBuffers& buffers);

/// Node indices of a retrieval row with the padding dropped: one table
/// lookup, sized by the static path-length table.
std::span<const int> retrieve_path(const StaticTreeBuffers& buffers, int row);

/// out[i] = values[indices[i]].
std::vector<int> gather(std::span<const int> values, std::span<const int> indices);

/// Copies the scratch K/V rows of `nodes` (depth order) to the committed
/// slots following logical_len, then advances logical_len.
template <class Real>
void commit_accepted(KvCache<Real>& cache, std::span<const int> nodes,
                     const StaticTreeBuffers& buffers);

template <class Real>
AutoregressiveResult generate_autoregressive(const ModelBundle<Real>& bundle,
                                             std::span<const int> prompt,
                                             const GenerationOptions& options);

template <class Real>
SpeculativeResult generate_speculative(const ModelBundle<Real>& bundle,
                                       const StaticTreeBuffers& buffers,
                                       std::span<const int> prompt,
                                       const GenerationOptions& options,
                                       StepObserver* observer = nullptr);

}  // namespace medusa
