// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "medusa/tree.hpp"

namespace medusa {

struct ModelConfig {
  int n_layers = 4;
  int d_model = 128;
  int n_q_heads = 8;
  int n_kv_heads = 2;
  int d_ff = 344;
  int vocab_size = 512;
  int max_seq_len = 2048;
  int num_medusa_heads = 3;
  double rope_theta = 10000.0;
  double norm_eps = 1e-6;

  int head_dim() const noexcept { return d_model / n_q_heads; }
  int kv_dim() const noexcept { return n_kv_heads * head_dim(); }
  /// Throws InvalidArgument on non-positive sizes or broken GQA grouping.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Weight matrices are row-major [out][in].
template <class Real>
struct LayerWeights {
  std::vector<Real> attn_norm;  // d
  std::vector<Real> wq;         // d x d
  std::vector<Real> wk;         // kv_dim x d
  std::vector<Real> wv;         // kv_dim x d
  std::vector<Real> wo;         // d x d
  std::vector<Real> ffn_norm;   // d
  std::vector<Real> w_gate;     // d_ff x d
  std::vector<Real> w_up;       // d_ff x d
  std::vector<Real> w_down;     // d x d_ff
};

template <class Real>
struct BackboneWeights {
  std::vector<Real> tok_embedding;  // vocab x d
  std::vector<LayerWeights<Real>> layers;
  std::vector<Real> final_norm;  // d
  std::vector<Real> lm_head;     // vocab x d
};

/// One draft head: logits = lm_head(h + silu(weight * h + bias)).
template <class Real>
struct HeadWeights {
  std::vector<Real> weight;  // d x d
  std::vector<Real> bias;    // d
};

/// Frozen backbone plus K trainable draft heads. Head k (0-based) predicts
/// the token k + 2 positions after the hidden state it reads.
template <class Real>
struct ModelBundle {
  ModelConfig config;
  BackboneWeights<Real> backbone;
  std::vector<HeadWeights<Real>> heads;

  int num_heads() const noexcept { return static_cast<int>(heads.size()); }
};

enum class HeadInit { zero, random };

struct InitOptions {
  HeadInit head_init = HeadInit::zero;
  /// Standard deviation for random head weights and biases.
  double head_std = 1.0;
};

ModelBundle<double> init_model(const ModelConfig& config, std::uint64_t seed,
                               const InitOptions& options = {});

template <class To, class From>
ModelBundle<To> cast_bundle(const ModelBundle<From>& from);

/// Hash over every backbone parameter (config excluded).
template <class Real>
std::uint64_t backbone_digest(const BackboneWeights<Real>& weights);

/// Visits every tensor with a stable name and shape, backbone first.
template <class Real, class Fn>
void for_each_tensor(ModelBundle<Real>& bundle, Fn&& fn);
template <class Real, class Fn>
void for_each_tensor(const ModelBundle<Real>& bundle, Fn&& fn);

/// Per-layer key/value storage. Slots [0, max_seq_len) hold the committed
/// sequence; slots [max_seq_len, max_seq_len + scratch_slots) are a scratch
/// region for tree tokens awaiting verification. Capacity is fixed at
/// construction and never reallocated.
template <class Real>
class KvCache {
 public:
  KvCache(const ModelConfig& config, int scratch_slots);

  int logical_len() const noexcept { return logical_len_; }
  int max_seq_len() const noexcept { return max_seq_len_; }
  int scratch_slots() const noexcept { return scratch_slots_; }
  int total_slots() const noexcept { return max_seq_len_ + scratch_slots_; }
  int n_layers() const noexcept { return n_layers_; }
  int kv_dim() const noexcept { return kv_dim_; }
  int scratch_slot(int node) const noexcept { return max_seq_len_ + node; }

  std::span<Real> key(int layer, int slot) noexcept { return row(keys_, layer, slot); }
  std::span<Real> value(int layer, int slot) noexcept { return row(values_, layer, slot); }
  std::span<const Real> key(int layer, int slot) const noexcept { return row(keys_, layer, slot); }
  std::span<const Real> value(int layer, int slot) const noexcept {
    return row(values_, layer, slot);
  }

  /// Rotary tables indexed by logical position, [pos][head_dim / 2].
  std::span<const Real> rope_cos(int pos) const noexcept;
  std::span<const Real> rope_sin(int pos) const noexcept;

  bool scratch_valid() const noexcept { return scratch_valid_; }
  void set_scratch_valid(bool v) noexcept { scratch_valid_ = v; }
  void set_logical_len(int len);
  void reset() noexcept {
    logical_len_ = 0;
    scratch_valid_ = false;
  }

  /// Address of the storage; used to audit that capacity never moves.
  const Real* storage_id() const noexcept { return keys_.data(); }

 private:
  template <class V>
  static auto row(V& v, int layer, int slot, int total, int dim) noexcept {
    return std::span(v).subspan((static_cast<std::size_t>(layer) * total + slot) * dim, dim);
  }
  std::span<Real> row(std::vector<Real>& v, int layer, int slot) noexcept {
    return row(v, layer, slot, total_slots(), kv_dim_);
  }
  std::span<const Real> row(const std::vector<Real>& v, int layer, int slot) const noexcept {
    return row(v, layer, slot, total_slots(), kv_dim_);
  }

  int n_layers_;
  int kv_dim_;
  int max_seq_len_;
  int scratch_slots_;
  int half_dim_;
  int logical_len_ = 0;
  bool scratch_valid_ = false;
  std::vector<Real> keys_;
  std::vector<Real> values_;
  std::vector<Real> cos_;
  std::vector<Real> sin_;
};

/// Logits and final (normalized) hidden state at one position.
template <class Real>
struct PositionOutput {
  std::vector<Real> logits;  // vocab
  std::vector<Real> hidden;  // d_model
};

/// Logits and hidden states for a block of positions, row-major.
template <class Real>
struct BlockOutput {
  int rows = 0;
  int vocab_size = 0;
  int d_model = 0;
  std::vector<Real> logits;  // rows x vocab
  std::vector<Real> hidden;  // rows x d_model

  std::span<const Real> logits_row(int i) const noexcept {
    return std::span(logits).subspan(static_cast<std::size_t>(i) * vocab_size, vocab_size);
  }
  std::span<const Real> hidden_row(int i) const noexcept {
    return std::span(hidden).subspan(static_cast<std::size_t>(i) * d_model, d_model);
  }
};

/// Causal forward pass over a prompt into an empty cache. Returns the last
/// position's outputs; afterwards logical_len == tokens.size().
template <class Real>
PositionOutput<Real> forward_prefill(const ModelBundle<Real>& bundle, std::span<const int> tokens,
                                     KvCache<Real>& cache);

/// Appends one token at position logical_len.
template <class Real>
PositionOutput<Real> forward_decode_one(const ModelBundle<Real>& bundle, int token,
                                        KvCache<Real>& cache);

/// Tree-masked verification pass. Node i sits at logical position
/// logical_len + depth(i), sees the whole committed prefix plus the tree
/// nodes j with attn_mask[i][j]. K/V go to the scratch region; logical_len
/// is left unchanged.
template <class Real>
BlockOutput<Real> forward_tree(const ModelBundle<Real>& bundle, std::span<const int> tree_tokens,
                               const StaticTreeBuffers& buffers, KvCache<Real>& cache);

/// Final hidden states for every position of a sequence (fresh cache).
template <class Real>
BlockOutput<Real> forward_sequence(const ModelBundle<Real>& bundle, std::span<const int> tokens,
                                   bool with_logits);

/// Draft-head logits for one hidden state, K x vocab row-major.
template <class Real>
std::vector<Real> head_logits(const ModelBundle<Real>& bundle, std::span<const Real> hidden);

/// Lowest index among the maxima.
template <class Real>
int argmax(std::span<const Real> values) noexcept;

template <class Real>
std::vector<Real> softmax(std::span<const Real> logits);

// ---------------------------------------------------------------------------

template <class Real, class Fn>
void for_each_tensor(ModelBundle<Real>& b, Fn&& fn) {
  const auto& c = b.config;
  const int d = c.d_model;
  fn("tok_embedding", std::vector<int>{c.vocab_size, d}, b.backbone.tok_embedding);
  for (int l = 0; l < static_cast<int>(b.backbone.layers.size()); ++l) {
    auto& L = b.backbone.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    fn(p + "attn_norm", std::vector<int>{d}, L.attn_norm);
    fn(p + "wq", std::vector<int>{d, d}, L.wq);
    fn(p + "wk", std::vector<int>{c.kv_dim(), d}, L.wk);
    fn(p + "wv", std::vector<int>{c.kv_dim(), d}, L.wv);
    fn(p + "wo", std::vector<int>{d, d}, L.wo);
    fn(p + "ffn_norm", std::vector<int>{d}, L.ffn_norm);
    fn(p + "w_gate", std::vector<int>{c.d_ff, d}, L.w_gate);
    fn(p + "w_up", std::vector<int>{c.d_ff, d}, L.w_up);
    fn(p + "w_down", std::vector<int>{d, c.d_ff}, L.w_down);
  }
  fn("final_norm", std::vector<int>{d}, b.backbone.final_norm);
  fn("lm_head", std::vector<int>{c.vocab_size, d}, b.backbone.lm_head);
  for (int k = 0; k < static_cast<int>(b.heads.size()); ++k) {
    const std::string p = "heads." + std::to_string(k) + ".";
    fn(p + "weight", std::vector<int>{d, d}, b.heads[k].weight);
    fn(p + "bias", std::vector<int>{d}, b.heads[k].bias);
  }
}

template <class Real, class Fn>
void for_each_tensor(const ModelBundle<Real>& b, Fn&& fn) {
  for_each_tensor(const_cast<ModelBundle<Real>&>(b),
                  [&](const std::string& name, const std::vector<int>& shape,
                      std::vector<Real>& data) {
                    fn(name, shape, static_cast<const std::vector<Real>&>(data));
                  });
}

}  // namespace medusa
