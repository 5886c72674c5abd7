// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "medusa/errors.hpp"
#include "kernels.hpp"
#include "medusa/rng.hpp"

namespace medusa {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw InvalidArgument(std::string("model config: ") + name + " must be positive");
  };
  positive(n_layers, "n_layers");
  positive(d_model, "d_model");
  positive(n_q_heads, "n_q_heads");
  positive(n_kv_heads, "n_kv_heads");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  positive(num_medusa_heads, "num_medusa_heads");
  if (n_q_heads % n_kv_heads != 0) {
    throw InvalidArgument("model config: n_q_heads must be divisible by n_kv_heads");
  }
  if (d_model % n_q_heads != 0) {
    throw InvalidArgument("model config: d_model must be divisible by n_q_heads");
  }
  if (head_dim() % 2 != 0) throw InvalidArgument("model config: head_dim must be even for RoPE");
  if (!(rope_theta > 0.0) || !(norm_eps > 0.0)) {
    throw InvalidArgument("model config: rope_theta and norm_eps must be positive");
  }
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

std::vector<double> gaussian(CounterRng rng, std::size_t n, double std) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() * std;
  return v;
}

}  // namespace

ModelBundle<double> init_model(const ModelConfig& c, std::uint64_t seed,
                               const InitOptions& options) {
  c.validate();
  const CounterRng root(seed);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto kv = static_cast<std::size_t>(c.kv_dim());
  const auto ff = static_cast<std::size_t>(c.d_ff);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double ff_std = 1.0 / std::sqrt(static_cast<double>(ff));

  ModelBundle<double> b;
  b.config = c;
  b.backbone.tok_embedding = gaussian(root.fork("tok_embedding"), V * d, 1.0);
  for (int l = 0; l < c.n_layers; ++l) {
    const auto lr = root.fork("layer").fork(static_cast<std::uint64_t>(l));
    LayerWeights<double> L;
    L.attn_norm.assign(d, 1.0);
    L.wq = gaussian(lr.fork("wq"), d * d, in_std);
    L.wk = gaussian(lr.fork("wk"), kv * d, in_std);
    L.wv = gaussian(lr.fork("wv"), kv * d, in_std);
    L.wo = gaussian(lr.fork("wo"), d * d, in_std);
    L.ffn_norm.assign(d, 1.0);
    L.w_gate = gaussian(lr.fork("w_gate"), ff * d, in_std);
    L.w_up = gaussian(lr.fork("w_up"), ff * d, in_std);
    L.w_down = gaussian(lr.fork("w_down"), d * ff, ff_std);
    b.backbone.layers.push_back(std::move(L));
  }
  b.backbone.final_norm.assign(d, 1.0);
  b.backbone.lm_head = gaussian(root.fork("lm_head"), V * d, in_std);

  for (int k = 0; k < c.num_medusa_heads; ++k) {
    HeadWeights<double> h;
    if (options.head_init == HeadInit::random) {
      const auto hr = root.fork("heads").fork(static_cast<std::uint64_t>(k));
      h.weight = gaussian(hr.fork("weight"), d * d, options.head_std);
      h.bias = gaussian(hr.fork("bias"), d, options.head_std);
    } else {
      h.weight.assign(d * d, 0.0);
      h.bias.assign(d, 0.0);
    }
    b.heads.push_back(std::move(h));
  }
  return b;
}

template <class To, class From>
ModelBundle<To> cast_bundle(const ModelBundle<From>& from) {
  auto conv = [](const std::vector<From>& v) { return std::vector<To>(v.begin(), v.end()); };
  ModelBundle<To> to;
  to.config = from.config;
  to.backbone.tok_embedding = conv(from.backbone.tok_embedding);
  for (const auto& L : from.backbone.layers) {
    to.backbone.layers.push_back({conv(L.attn_norm), conv(L.wq), conv(L.wk), conv(L.wv),
                                  conv(L.wo), conv(L.ffn_norm), conv(L.w_gate), conv(L.w_up),
                                  conv(L.w_down)});
  }
  to.backbone.final_norm = conv(from.backbone.final_norm);
  to.backbone.lm_head = conv(from.backbone.lm_head);
  for (const auto& h : from.heads) to.heads.push_back({conv(h.weight), conv(h.bias)});
  return to;
}

template <class Real>
std::uint64_t backbone_digest(const BackboneWeights<Real>& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto add = [&](const std::vector<Real>& v) {
    h = fnv1a64(v.data(), v.size() * sizeof(Real), h);
  };
  add(w.tok_embedding);
  for (const auto& L : w.layers) {
    for (const auto* v : {&L.attn_norm, &L.wq, &L.wk, &L.wv, &L.wo, &L.ffn_norm, &L.w_gate,
                          &L.w_up, &L.w_down}) {
      add(*v);
    }
  }
  add(w.final_norm);
  add(w.lm_head);
  return h;
}

// ---------------------------------------------------------------------------
// KV cache

template <class Real>
KvCache<Real>::KvCache(const ModelConfig& c, int scratch_slots)
    : n_layers_((c.validate(), c.n_layers)),
      kv_dim_(c.kv_dim()),
      max_seq_len_(c.max_seq_len),
      scratch_slots_(scratch_slots),
      half_dim_(c.head_dim() / 2) {
  if (scratch_slots < 0) throw InvalidArgument("kv cache: negative scratch size");
  const std::size_t n = static_cast<std::size_t>(n_layers_) * total_slots() * kv_dim_;
  keys_.assign(n, Real(0));
  values_.assign(n, Real(0));

  const int positions = total_slots();
  cos_.resize(static_cast<std::size_t>(positions) * half_dim_);
  sin_.resize(cos_.size());
  const int hd = c.head_dim();
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < half_dim_; ++i) {
      const double freq = std::pow(c.rope_theta, -2.0 * i / hd);
      const double angle = p * freq;
      cos_[static_cast<std::size_t>(p) * half_dim_ + i] = static_cast<Real>(std::cos(angle));
      sin_[static_cast<std::size_t>(p) * half_dim_ + i] = static_cast<Real>(std::sin(angle));
    }
  }
}

template <class Real>
std::span<const Real> KvCache<Real>::rope_cos(int pos) const noexcept {
  return std::span(cos_).subspan(static_cast<std::size_t>(pos) * half_dim_, half_dim_);
}

template <class Real>
std::span<const Real> KvCache<Real>::rope_sin(int pos) const noexcept {
  return std::span(sin_).subspan(static_cast<std::size_t>(pos) * half_dim_, half_dim_);
}

template <class Real>
void KvCache<Real>::set_logical_len(int len) {
  if (len < 0 || len > max_seq_len_) {
    throw CapacityError("kv cache: logical length " + std::to_string(len) +
                        " outside [0, " + std::to_string(max_seq_len_) + "]");
  }
  logical_len_ = len;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

// Rotates interleaved pairs (2i, 2i+1) of every head in `x` ([heads][hd]).
template <class Real>
void apply_rope(Real* x, int heads, int hd, std::span<const Real> cos, std::span<const Real> sin) {
  for (int h = 0; h < heads; ++h) {
    Real* v = x + static_cast<std::size_t>(h) * hd;
    for (int i = 0; i < hd / 2; ++i) {
      const Real a = v[2 * i];
      const Real b = v[2 * i + 1];
      v[2 * i] = a * cos[i] - b * sin[i];
      v[2 * i + 1] = a * sin[i] + b * cos[i];
    }
  }
}

// Shared by prefill, decode and tree verification. Block entry t (token
// tokens[t], position positions[t]) writes its K/V to slots[t] and attends
// to committed slots [0, prefix_len) followed by the block entries j with
// block_mask[t][j], in ascending j. With ancestors ordered before their
// descendants this reproduces exactly the key order of sequential decode,
// which is what makes tree verification bit-identical to it.
template <class Real>
std::vector<Real> run_block(const ModelBundle<Real>& m, std::span<const int> tokens,
                            std::span<const int> positions, std::span<const int> slots,
                            int prefix_len, std::span<const std::uint8_t> block_mask,
                            KvCache<Real>& cache) {
  const auto& c = m.config;
  const int n = static_cast<int>(tokens.size());
  const int d = c.d_model;
  const int hd = c.head_dim();
  const int kvd = c.kv_dim();
  const int group = c.n_q_heads / c.n_kv_heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const auto eps = static_cast<Real>(c.norm_eps);

  for (int t : tokens) {
    if (t < 0 || t >= c.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(c.vocab_size));
    }
  }

  std::vector<Real> x(static_cast<std::size_t>(n) * d);
  for (int t = 0; t < n; ++t) {
    std::copy_n(m.backbone.tok_embedding.begin() + static_cast<std::ptrdiff_t>(tokens[t]) * d, d,
                x.begin() + static_cast<std::ptrdiff_t>(t) * d);
  }

  std::vector<std::vector<int>> visible(n);
  for (int t = 0; t < n; ++t) {
    auto& vis = visible[t];
    vis.reserve(prefix_len + n);
    for (int s = 0; s < prefix_len; ++s) vis.push_back(s);
    for (int j = 0; j < n; ++j) {
      if (block_mask[static_cast<std::size_t>(t) * n + j]) vis.push_back(slots[j]);
    }
  }

  std::vector<Real> xn(x.size()), q(x.size()), attn(x.size()), proj(x.size());
  std::vector<Real> k(static_cast<std::size_t>(n) * kvd), v(k.size());
  std::vector<Real> gate(static_cast<std::size_t>(n) * c.d_ff), up(gate.size());
  std::vector<Real> scores;

  for (int l = 0; l < c.n_layers; ++l) {
    const auto& L = m.backbone.layers[l];

    kernels::rmsnorm_rows(x.data(), n, d, L.attn_norm.data(), eps, xn.data());
    kernels::linear(L.wq.data(), d, d, xn.data(), n, q.data());
    kernels::linear(L.wk.data(), kvd, d, xn.data(), n, k.data());
    kernels::linear(L.wv.data(), kvd, d, xn.data(), n, v.data());
    for (int t = 0; t < n; ++t) {
      const auto cs = cache.rope_cos(positions[t]);
      const auto sn = cache.rope_sin(positions[t]);
      apply_rope(q.data() + static_cast<std::size_t>(t) * d, c.n_q_heads, hd, cs, sn);
      apply_rope(k.data() + static_cast<std::size_t>(t) * kvd, c.n_kv_heads, hd, cs, sn);
      std::copy_n(k.begin() + static_cast<std::ptrdiff_t>(t) * kvd, kvd,
                  cache.key(l, slots[t]).begin());
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(t) * kvd, kvd,
                  cache.value(l, slots[t]).begin());
    }

    for (int t = 0; t < n; ++t) {
      const auto& vis = visible[t];
      scores.resize(vis.size());
      for (int h = 0; h < c.n_q_heads; ++h) {
        const int g = h / group;
        const Real* qh = q.data() + static_cast<std::size_t>(t) * d + h * hd;
        Real max_score = -std::numeric_limits<Real>::infinity();
        for (std::size_t s = 0; s < vis.size(); ++s) {
          const Real* kh = cache.key(l, vis[s]).data() + g * hd;
          scores[s] = kernels::dot(qh, kh, hd) * scale;
          max_score = std::max(max_score, scores[s]);
        }
        Real denom = 0;
        for (auto& s : scores) {
          s = std::exp(s - max_score);
          denom += s;
        }
        Real* out = attn.data() + static_cast<std::size_t>(t) * d + h * hd;
        std::fill_n(out, hd, Real(0));
        for (std::size_t s = 0; s < vis.size(); ++s) {
          const Real* vh = cache.value(l, vis[s]).data() + g * hd;
          for (int i = 0; i < hd; ++i) out[i] += scores[s] * vh[i];
        }
        const Real inv = Real(1) / denom;
        for (int i = 0; i < hd; ++i) out[i] *= inv;
      }
    }
    kernels::linear(L.wo.data(), d, d, attn.data(), n, proj.data());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];

    kernels::rmsnorm_rows(x.data(), n, d, L.ffn_norm.data(), eps, xn.data());
    kernels::linear(L.w_gate.data(), c.d_ff, d, xn.data(), n, gate.data());
    kernels::linear(L.w_up.data(), c.d_ff, d, xn.data(), n, up.data());
    for (std::size_t i = 0; i < gate.size(); ++i) gate[i] = kernels::silu(gate[i]) * up[i];
    kernels::linear(L.w_down.data(), d, c.d_ff, gate.data(), n, proj.data());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
  }

  kernels::rmsnorm_rows(x.data(), n, d, m.backbone.final_norm.data(), eps, xn.data());
  return xn;
}

template <class Real>
std::vector<Real> project_logits(const ModelBundle<Real>& m, const Real* hidden, int rows) {
  std::vector<Real> logits(static_cast<std::size_t>(rows) * m.config.vocab_size);
  kernels::linear(m.backbone.lm_head.data(), m.config.vocab_size, m.config.d_model, hidden, rows,
                  logits.data());
  return logits;
}

std::vector<std::uint8_t> causal_mask(int n) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) mask[static_cast<std::size_t>(i) * n + j] = 1;
  }
  return mask;
}

}  // namespace

template <class Real>
PositionOutput<Real> forward_prefill(const ModelBundle<Real>& m, std::span<const int> tokens,
                                     KvCache<Real>& cache) {
  if (cache.logical_len() != 0) throw InvalidArgument("forward_prefill: cache is not empty");
  if (tokens.empty()) throw InvalidArgument("forward_prefill: empty prompt");
  const int n = static_cast<int>(tokens.size());
  if (n > cache.max_seq_len()) {
    throw CapacityError("forward_prefill: prompt of " + std::to_string(n) +
                        " tokens exceeds max_seq_len " + std::to_string(cache.max_seq_len()));
  }
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  const auto mask = causal_mask(n);
  auto hidden = run_block(m, tokens, positions, positions, 0, mask, cache);
  cache.set_logical_len(n);
  cache.set_scratch_valid(false);

  const int d = m.config.d_model;
  PositionOutput<Real> out;
  out.hidden.assign(hidden.end() - d, hidden.end());
  out.logits = project_logits(m, out.hidden.data(), 1);
  return out;
}

template <class Real>
PositionOutput<Real> forward_decode_one(const ModelBundle<Real>& m, int token,
                                        KvCache<Real>& cache) {
  const int L = cache.logical_len();
  if (L < 1) throw InvalidArgument("forward_decode_one: cache holds no prefix");
  if (L >= cache.max_seq_len()) {
    throw CapacityError("forward_decode_one: cache full at " + std::to_string(L) + " positions");
  }
  const int tok[1] = {token};
  const int pos[1] = {L};
  const std::uint8_t mask[1] = {1};
  auto hidden = run_block<Real>(m, tok, pos, pos, L, mask, cache);
  cache.set_logical_len(L + 1);
  cache.set_scratch_valid(false);

  PositionOutput<Real> out;
  out.hidden = std::move(hidden);
  out.logits = project_logits(m, out.hidden.data(), 1);
  return out;
}

template <class Real>
BlockOutput<Real> forward_tree(const ModelBundle<Real>& m, std::span<const int> tree_tokens,
                               const StaticTreeBuffers& buffers, KvCache<Real>& cache) {
  const int T = buffers.num_nodes();
  const int L = cache.logical_len();
  if (static_cast<int>(tree_tokens.size()) != T) {
    throw InvalidArgument("forward_tree: expected " + std::to_string(T) + " tree tokens, got " +
                          std::to_string(tree_tokens.size()));
  }
  if (cache.scratch_slots() < T) {
    throw CapacityError("forward_tree: scratch region of " +
                        std::to_string(cache.scratch_slots()) + " slots is smaller than T = " +
                        std::to_string(T));
  }
  if (L + buffers.max_depth() + 1 > cache.max_seq_len()) {
    throw CapacityError("forward_tree: committing a full path at length " + std::to_string(L) +
                        " would exceed max_seq_len " + std::to_string(cache.max_seq_len()));
  }
  std::vector<int> positions(T), slots(T);
  const auto depth = buffers.node_depth();
  for (int i = 0; i < T; ++i) {
    positions[i] = L + depth[i];
    slots[i] = cache.scratch_slot(i);
  }
  BlockOutput<Real> out;
  out.rows = T;
  out.vocab_size = m.config.vocab_size;
  out.d_model = m.config.d_model;
  out.hidden = run_block(m, tree_tokens, positions, slots, L, buffers.attn_mask(), cache);
  out.logits = project_logits(m, out.hidden.data(), T);
  cache.set_scratch_valid(true);
  return out;
}

template <class Real>
BlockOutput<Real> forward_sequence(const ModelBundle<Real>& m, std::span<const int> tokens,
                                   bool with_logits) {
  if (tokens.empty()) throw InvalidArgument("forward_sequence: empty sequence");
  ModelConfig c = m.config;
  c.max_seq_len = static_cast<int>(tokens.size());
  KvCache<Real> cache(c, 0);
  const int n = static_cast<int>(tokens.size());
  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  const auto mask = causal_mask(n);
  BlockOutput<Real> out;
  out.rows = n;
  out.vocab_size = c.vocab_size;
  out.d_model = c.d_model;
  out.hidden = run_block(m, tokens, positions, positions, 0, mask, cache);
  if (with_logits) out.logits = project_logits(m, out.hidden.data(), n);
  return out;
}

template <class Real>
std::vector<Real> head_logits(const ModelBundle<Real>& m, std::span<const Real> h) {
  const int d = m.config.d_model;
  const int V = m.config.vocab_size;
  std::vector<Real> out(static_cast<std::size_t>(m.num_heads()) * V);
  std::vector<Real> z(d), u(d);
  for (int k = 0; k < m.num_heads(); ++k) {
    const auto& H = m.heads[k];
    kernels::linear(H.weight.data(), d, d, h.data(), 1, z.data());
    for (int i = 0; i < d; ++i) u[i] = h[i] + kernels::silu(z[i] + H.bias[i]);
    kernels::linear(m.backbone.lm_head.data(), V, d, u.data(), 1,
                    out.data() + static_cast<std::size_t>(k) * V);
  }
  return out;
}

template <class Real>
int argmax(std::span<const Real> values) noexcept {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template <class Real>
std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> p(logits.begin(), logits.end());
  const Real mx = *std::max_element(p.begin(), p.end());
  Real sum = 0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

#define MEDUSA_INSTANTIATE(Real)                                                               \
  template class KvCache<Real>;                                                                \
  template std::uint64_t backbone_digest(const BackboneWeights<Real>&);                        \
  template PositionOutput<Real> forward_prefill(const ModelBundle<Real>&, std::span<const int>, \
                                                KvCache<Real>&);                               \
  template PositionOutput<Real> forward_decode_one(const ModelBundle<Real>&, int,              \
                                                   KvCache<Real>&);                            \
  template BlockOutput<Real> forward_tree(const ModelBundle<Real>&, std::span<const int>,      \
                                          const StaticTreeBuffers&, KvCache<Real>&);           \
  template BlockOutput<Real> forward_sequence(const ModelBundle<Real>&, std::span<const int>,  \
                                              bool);                                           \
  template std::vector<Real> head_logits(const ModelBundle<Real>&, std::span<const Real>);     \
  template int argmax(std::span<const Real>) noexcept;                                         \
  template std::vector<Real> softmax(std::span<const Real>);

MEDUSA_INSTANTIATE(float)
MEDUSA_INSTANTIATE(double)
#undef MEDUSA_INSTANTIATE

template ModelBundle<float> cast_bundle<float, double>(const ModelBundle<double>&);
template ModelBundle<double> cast_bundle<double, float>(const ModelBundle<float>&);
template ModelBundle<double> cast_bundle<double, double>(const ModelBundle<double>&);
template ModelBundle<float> cast_bundle<float, float>(const ModelBundle<float>&);

}  // namespace medusa
