// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/engine.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "medusa/errors.hpp"

namespace medusa {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_prompt(std::span<const int> prompt, int vocab) {
  if (prompt.empty()) throw InvalidArgument("generation: prompt is empty");
  for (int t : prompt) {
    if (t < 0 || t >= vocab) {
      throw InvalidArgument("generation: prompt token " + std::to_string(t) +
                            " outside vocabulary");
    }
  }
}

// Appends `tokens` to `out` up to the token budget and through the first
// EOS. Returns true when generation must stop.
bool emit(std::vector<int>& out, std::vector<int>& tokens, const GenerationOptions& opt) {
  const std::size_t room = static_cast<std::size_t>(opt.max_new_tokens) - out.size();
  if (tokens.size() > room) tokens.resize(room);
  if (opt.eos_token) {
    auto it = std::find(tokens.begin(), tokens.end(), *opt.eos_token);
    if (it != tokens.end()) {
      tokens.erase(it + 1, tokens.end());
      out.insert(out.end(), tokens.begin(), tokens.end());
      return true;
    }
  }
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out.size() >= static_cast<std::size_t>(opt.max_new_tokens);
}

}  // namespace

void ShapeRecorder::on_tensor(std::string_view name, std::vector<int> shape) {
  current_.emplace(std::string(name), std::move(shape));
}

void ShapeRecorder::on_retrieval(const RetrievalStats& s) {
  lookups_ += s.table_lookups;
  gathers_ += s.gathers;
  token_branches_ += s.token_branches;
}

void ShapeRecorder::on_step_end() {
  steps_.push_back(std::move(current_));
  current_.clear();
}

bool ShapeRecorder::uniform() const {
  return std::all_of(steps_.begin(), steps_.end(),
                     [&](const ShapeSet& s) { return s == steps_.front(); });
}

template <class Real>
CandidateBuffer draft_candidates(const ModelBundle<Real>& bundle, std::span<const Real> h_last,
                                 std::span<const Real> base_logits,
                                 std::span<const int> topk_per_head) {
  const int V = bundle.config.vocab_size;
  const int K = static_cast<int>(topk_per_head.size());
  if (K > bundle.num_heads()) {
    throw InvalidArgument("draft_candidates: tree uses " + std::to_string(K) +
                          " heads but the model has " + std::to_string(bundle.num_heads()));
  }
  CandidateBuffer buf;
  buf.reserve(1 + std::accumulate(topk_per_head.begin(), topk_per_head.end(), 0));
  buf.push_back(argmax(base_logits));

  const auto logits = head_logits(bundle, h_last);
  std::vector<int> ids(V);
  for (int k = 0; k < K; ++k) {
    const int topk = topk_per_head[k];
    if (topk > V) throw InvalidArgument("draft_candidates: topk exceeds vocabulary");
    const Real* row = logits.data() + static_cast<std::size_t>(k) * V;
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + topk, ids.end(), [row](int a, int b) {
      return row[a] > row[b] || (row[a] == row[b] && a < b);
    });
    buf.insert(buf.end(), ids.begin(), ids.begin() + topk);
  }
  return buf;
}

std::vector<int> assemble_tree_tokens(std::span<const int> candidates,
                                      const StaticTreeBuffers& buffers) {
  if (static_cast<int>(candidates.size()) != buffers.candidate_len()) {
    throw InvalidArgument("assemble_tree_tokens: candidate buffer has " +
                          std::to_string(candidates.size()) + " entries, expected " +
                          std::to_string(buffers.candidate_len()));
  }
  return gather(candidates, buffers.tree_indices());
}

std::vector<int> gather(std::span<const int> values, std::span<const int> indices) {
  std::vector<int> out(indices.size());
  std::transform(indices.begin(), indices.end(), out.begin(),
                 [values](int i) { return values[static_cast<std::size_t>(i)]; });
  return out;
}

template <class Real>
StepOutcome verify_and_accept(const BlockOutput<Real>& tree, std::span<const int> tree_tokens,
                              const StaticTreeBuffers& buffers) {
  const int T = buffers.num_nodes();
  if (tree.rows != T || static_cast<int>(tree_tokens.size()) != T) {
    throw InvalidArgument("verify_and_accept: tree outputs do not match the buffers");
  }
  std::vector<int> best(T);
  for (int i = 0; i < T; ++i) best[i] = argmax(tree.logits_row(i));

  StepOutcome o;
  o.accepted_len = 0;
  const auto lengths = buffers.path_lengths();
  for (int r = 0; r < buffers.n_paths(); ++r) {
    const auto row = buffers.retrieve_row(r);
    int accepted = 1;
    while (accepted < lengths[r] && tree_tokens[row[accepted]] == best[row[accepted - 1]]) {
      ++accepted;
    }
    if (accepted > o.accepted_len) {
      o.accepted_len = accepted;
      o.chosen_path_row = r;
    }
  }
  const auto nodes = retrieve_path(buffers, o.chosen_path_row).first(o.accepted_len);
  o.deepest_node = nodes.back();
  o.bonus_token = best[o.deepest_node];
  o.emitted_tokens = gather(tree_tokens, nodes);
  return o;
}

std::span<const int> retrieve_path(const StaticTreeBuffers& buffers, int row) {
  return buffers.retrieve_row(row).first(buffers.path_lengths()[row]);
}

template <class Real>
void commit_accepted(KvCache<Real>& cache, std::span<const int> nodes,
                     const StaticTreeBuffers& buffers) {
  if (!cache.scratch_valid()) {
    throw InvalidArgument("commit_accepted: scratch region holds no verified tree");
  }
  const int L = cache.logical_len();
  const int n = static_cast<int>(nodes.size());
  if (L + n > cache.max_seq_len()) {
    throw CapacityError("commit_accepted: " + std::to_string(n) + " tokens overflow the cache");
  }
  for (int node : nodes) {
    if (node < 0 || node >= buffers.num_nodes()) {
      throw InvalidArgument("commit_accepted: node index out of range");
    }
  }
  for (int l = 0; l < cache.n_layers(); ++l) {
    for (int j = 0; j < n; ++j) {
      const int src = cache.scratch_slot(nodes[j]);
      std::copy_n(cache.key(l, src).begin(), cache.kv_dim(), cache.key(l, L + j).begin());
      std::copy_n(cache.value(l, src).begin(), cache.kv_dim(), cache.value(l, L + j).begin());
    }
  }
  cache.set_logical_len(L + n);
  cache.set_scratch_valid(false);
}

template <class Real>
AutoregressiveResult generate_autoregressive(const ModelBundle<Real>& bundle,
                                             std::span<const int> prompt,
                                             const GenerationOptions& opt) {
  check_prompt(prompt, bundle.config.vocab_size);
  AutoregressiveResult res;
  if (opt.max_new_tokens <= 0) return res;

  KvCache<Real> cache(bundle.config, 0);
  auto start = Clock::now();
  auto out = forward_prefill(bundle, prompt, cache);
  res.prefill_seconds = seconds_since(start);
  for (int i = 0; i < opt.max_new_tokens; ++i) {
    const int token = argmax<Real>(out.logits);
    res.tokens.push_back(token);
    if (opt.eos_token && token == *opt.eos_token) break;
    if (i + 1 == opt.max_new_tokens) break;
    start = Clock::now();
    out = forward_decode_one(bundle, token, cache);
    res.step_seconds.push_back(seconds_since(start));
  }
  return res;
}

template <class Real>
SpeculativeResult generate_speculative(const ModelBundle<Real>& bundle,
                                       const StaticTreeBuffers& buffers,
                                       std::span<const int> prompt,
                                       const GenerationOptions& opt, StepObserver* observer) {
  check_prompt(prompt, bundle.config.vocab_size);
  SpeculativeResult res;
  if (opt.max_new_tokens <= 0) return res;

  const int T = buffers.num_nodes();
  const int V = bundle.config.vocab_size;
  KvCache<Real> cache(bundle.config, T);

  auto start = Clock::now();
  const auto pre = forward_prefill(bundle, prompt, cache);
  res.prefill_seconds = seconds_since(start);
  std::vector<Real> base_logits = pre.logits;
  std::vector<Real> h_last = pre.hidden;

  for (bool done = false; !done;) {
    start = Clock::now();
    const auto candidates =
        draft_candidates<Real>(bundle, h_last, base_logits, buffers.topk_per_head());
    const auto tree_tokens = assemble_tree_tokens(candidates, buffers);
    const auto tree = forward_tree<Real>(bundle, tree_tokens, buffers, cache);
    auto outcome = verify_and_accept(tree, tree_tokens, buffers);

    // Zero-copy retrieval: one row lookup, then gathers driven by the row.
    const auto nodes = retrieve_path(buffers, outcome.chosen_path_row).first(outcome.accepted_len);
    commit_accepted(cache, nodes, buffers);
    base_logits.assign(tree.logits_row(outcome.deepest_node).begin(),
                       tree.logits_row(outcome.deepest_node).end());
    h_last.assign(tree.hidden_row(outcome.deepest_node).begin(),
                  tree.hidden_row(outcome.deepest_node).end());
    res.step_seconds.push_back(seconds_since(start));

    if (observer) {
      observer->on_tensor("candidates", {static_cast<int>(candidates.size())});
      observer->on_tensor("tree_tokens", {static_cast<int>(tree_tokens.size())});
      observer->on_tensor("attn_mask", {T, T});
      observer->on_tensor("tree_logits", {tree.rows, tree.vocab_size});
      observer->on_tensor("tree_hidden", {tree.rows, tree.d_model});
      observer->on_tensor("retrieve_indices", {buffers.n_paths(), buffers.row_width()});
      observer->on_tensor("kv_scratch", {cache.n_layers(), cache.scratch_slots(), cache.kv_dim()});
      observer->on_tensor("kv_storage", {cache.n_layers(), cache.total_slots(), cache.kv_dim()});
      observer->on_tensor("base_logits", {V});
      observer->on_retrieval({.table_lookups = 1, .gathers = 2, .token_branches = 0});
      observer->on_step_end();
    }

    done = emit(res.tokens, outcome.emitted_tokens, opt);
    res.steps.push_back(std::move(outcome));
  }
  return res;
}

#define MEDUSA_INSTANTIATE(Real)                                                                \
  template CandidateBuffer draft_candidates(const ModelBundle<Real>&, std::span<const Real>,    \
                                            std::span<const Real>, std::span<const int>);       \
  template StepOutcome verify_and_accept(const BlockOutput<Real>&, std::span<const int>,        \
                                         const StaticTreeBuffers&);                             \
  template void commit_accepted(KvCache<Real>&, std::span<const int>, const StaticTreeBuffers&); \
  template AutoregressiveResult generate_autoregressive(const ModelBundle<Real>&,               \
                                                        std::span<const int>,                   \
                                                        const GenerationOptions&);              \
  template SpeculativeResult generate_speculative(const ModelBundle<Real>&,                     \
                                                  const StaticTreeBuffers&,                     \
                                                  std::span<const int>,                         \
                                                  const GenerationOptions&, StepObserver*);

MEDUSA_INSTANTIATE(float)
MEDUSA_INSTANTIATE(double)
#undef MEDUSA_INSTANTIATE

}  // namespace medusa
