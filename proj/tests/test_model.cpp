// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "medusa/errors.hpp"
#include "medusa/model.hpp"
#include "test_support.hpp"

namespace medusa {
namespace {

using testing::tiny_config;

template <class Real>
std::vector<Real> to_vec(std::span<const Real> s) {
  return {s.begin(), s.end()};
}

TEST(ModelConfig, Validation) {
  EXPECT_NO_THROW(ModelConfig{}.validate());
  ModelConfig c;
  c.n_kv_heads = 3;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.d_model = 100;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(ModelConfig{}.head_dim(), 16);
  EXPECT_EQ(ModelConfig{}.kv_dim(), 32);
}

TEST(InitModel, DeterministicAndShaped) {
  const auto c = tiny_config();
  const auto a = init_model(c, 7);
  const auto b = init_model(c, 7);
  const auto other = init_model(c, 8);
  EXPECT_EQ(backbone_digest(a.backbone), backbone_digest(b.backbone));
  EXPECT_NE(backbone_digest(a.backbone), backbone_digest(other.backbone));
  EXPECT_EQ(a.num_heads(), 3);
  for_each_tensor(a, [](const std::string& name, const std::vector<int>& shape,
                        const std::vector<double>& data) {
    const long n = std::accumulate(shape.begin(), shape.end(), 1L, std::multiplies<>());
    EXPECT_EQ(static_cast<long>(data.size()), n) << name;
  });
  for (const auto& h : a.heads) {
    EXPECT_TRUE(std::all_of(h.weight.begin(), h.weight.end(), [](double v) { return v == 0.0; }));
  }
}

TEST(Prefill, FiniteNonConstantAndDeterministic) {
  const auto bundle = init_model(tiny_config(), 1);
  const std::vector<int> prompt{0, 5, 9, 17, 3};
  KvCache<double> c1(bundle.config, 0), c2(bundle.config, 0);
  const auto a = forward_prefill<double>(bundle, prompt, c1);
  const auto b = forward_prefill<double>(bundle, prompt, c2);
  EXPECT_EQ(a.logits, b.logits);
  EXPECT_EQ(a.hidden, b.hidden);
  EXPECT_EQ(c1.logical_len(), 5);
  ASSERT_EQ(a.logits.size(), 32u);
  EXPECT_TRUE(std::all_of(a.logits.begin(), a.logits.end(), [](double v) { return std::isfinite(v); }));
  EXPECT_NE(*std::max_element(a.logits.begin(), a.logits.end()),
            *std::min_element(a.logits.begin(), a.logits.end()));
}

TEST(Prefill, Errors) {
  const auto bundle = init_model(tiny_config(), 1);
  KvCache<double> cache(bundle.config, 0);
  const std::vector<int> bad{0, 32};
  EXPECT_THROW(forward_prefill<double>(bundle, bad, cache), InvalidArgument);
  EXPECT_THROW(forward_prefill<double>(bundle, std::vector<int>{}, cache), InvalidArgument);
  std::vector<int> too_long(bundle.config.max_seq_len + 1, 4);
  EXPECT_THROW(forward_prefill<double>(bundle, too_long, cache), CapacityError);
  forward_prefill<double>(bundle, std::vector<int>{1, 2}, cache);
  EXPECT_THROW(forward_prefill<double>(bundle, std::vector<int>{1}, cache), InvalidArgument);
}

template <class Real>
void check_decode_matches_prefill() {
  const auto bundle = cast_bundle<Real>(init_model(tiny_config(), 3));
  const std::vector<int> seq{0, 7, 21, 4, 4, 30, 12, 9};
  KvCache<Real> inc(bundle.config, 0);
  auto out = forward_prefill<Real>(bundle, std::span(seq).first(3), inc);
  for (std::size_t n = 3; n < seq.size(); ++n) {
    out = forward_decode_one<Real>(bundle, seq[n], inc);
    KvCache<Real> fresh(bundle.config, 0);
    const auto ref = forward_prefill<Real>(bundle, std::span(seq).first(n + 1), fresh);
    ASSERT_EQ(out.logits, ref.logits) << "position " << n;
    ASSERT_EQ(out.hidden, ref.hidden) << "position " << n;
  }
}

TEST(Decode, MatchesFromScratchDouble) { check_decode_matches_prefill<double>(); }
TEST(Decode, MatchesFromScratchFloat) { check_decode_matches_prefill<float>(); }

TEST(Decode, RepeatableAndCapacity) {
  auto c = tiny_config();
  c.max_seq_len = 4;
  const auto bundle = init_model(c, 3);
  KvCache<double> a(c, 0), b(c, 0);
  forward_prefill<double>(bundle, std::vector<int>{1, 2}, a);
  forward_prefill<double>(bundle, std::vector<int>{1, 2}, b);
  EXPECT_EQ(forward_decode_one<double>(bundle, 5, a).logits,
            forward_decode_one<double>(bundle, 5, b).logits);
  forward_decode_one<double>(bundle, 6, a);
  EXPECT_EQ(a.logical_len(), 4);
  EXPECT_THROW(forward_decode_one<double>(bundle, 6, a), CapacityError);
  KvCache<double> empty(c, 0);
  EXPECT_THROW(forward_decode_one<double>(bundle, 6, empty), InvalidArgument);
}

TEST(ForwardSequence, MatchesPrefillAtEveryPosition) {
  const auto bundle = init_model(tiny_config(), 4);
  const std::vector<int> seq{0, 3, 8, 13, 2, 31};
  const auto all = forward_sequence<double>(bundle, seq, true);
  ASSERT_EQ(all.rows, 6);
  for (int n = 1; n <= 6; ++n) {
    KvCache<double> cache(bundle.config, 0);
    const auto ref = forward_prefill<double>(bundle, std::span(seq).first(n), cache);
    EXPECT_EQ(to_vec(all.logits_row(n - 1)), ref.logits);
    EXPECT_EQ(to_vec(all.hidden_row(n - 1)), ref.hidden);
  }
}

TEST(ForwardTree, ChainEqualsSequentialDecode) {
  const auto bundle = init_model(tiny_config(), 5);
  TreeSpec chain{{1, 1, 1}, {{0}, {0, 0}, {0, 0, 0}}};
  const auto buffers = compile_tree(chain);
  const std::vector<int> prompt{0, 9, 14};
  const std::vector<int> tokens{21, 6, 6, 19};

  KvCache<double> tree_cache(bundle.config, buffers.num_nodes());
  forward_prefill<double>(bundle, prompt, tree_cache);
  const auto tree = forward_tree<double>(bundle, tokens, buffers, tree_cache);
  EXPECT_EQ(tree_cache.logical_len(), 3);
  EXPECT_TRUE(tree_cache.scratch_valid());

  KvCache<double> seq_cache(bundle.config, 0);
  forward_prefill<double>(bundle, prompt, seq_cache);
  for (int i = 0; i < 4; ++i) {
    const auto step = forward_decode_one<double>(bundle, tokens[i], seq_cache);
    EXPECT_EQ(to_vec(tree.logits_row(i)), step.logits) << "node " << i;
    EXPECT_EQ(to_vec(tree.hidden_row(i)), step.hidden) << "node " << i;
  }
}

TEST(ForwardTree, RootOnlyEqualsDecodeOne) {
  const auto bundle = init_model(tiny_config(), 6);
  const auto buffers = compile_tree({{3}, {}});
  KvCache<float> a(bundle.config, 1), b(bundle.config, 0);
  const auto fb = cast_bundle<float>(bundle);
  const std::vector<int> prompt{0, 2, 28};
  forward_prefill<float>(fb, prompt, a);
  forward_prefill<float>(fb, prompt, b);
  const auto tree = forward_tree<float>(fb, std::vector<int>{11}, buffers, a);
  const auto one = forward_decode_one<float>(fb, 11, b);
  EXPECT_EQ(to_vec(tree.logits_row(0)), one.logits);
  EXPECT_EQ(a.logical_len(), 3);
}

TEST(ForwardTree, BranchesMatchTheirOwnSequentialPaths) {
  const auto bundle = init_model(tiny_config(), 8);
  const auto spec = TreeSpec::full({2, 2});
  const auto buffers = compile_tree(spec);
  const std::vector<int> prompt{0, 5, 6, 7};
  std::vector<int> tokens(buffers.num_nodes());
  for (int i = 0; i < buffers.num_nodes(); ++i) tokens[i] = 4 + 3 * i;

  KvCache<double> cache(bundle.config, buffers.num_nodes());
  forward_prefill<double>(bundle, prompt, cache);
  const auto tree = forward_tree<double>(bundle, tokens, buffers, cache);
  for (int r = 0; r < buffers.n_paths(); ++r) {
    KvCache<double> seq(bundle.config, 0);
    forward_prefill<double>(bundle, prompt, seq);
    const auto row = buffers.retrieve_row(r);
    for (int c = 0; c < buffers.path_lengths()[r]; ++c) {
      const auto step = forward_decode_one<double>(bundle, tokens[row[c]], seq);
      EXPECT_EQ(to_vec(tree.logits_row(row[c])), step.logits) << "row " << r << " col " << c;
    }
  }
}

TEST(ForwardTree, Errors) {
  auto c = tiny_config();
  c.max_seq_len = 6;
  const auto bundle = init_model(c, 1);
  const auto buffers = compile_tree({{1, 1}, {{0}, {0, 0}}});
  KvCache<double> small(c, 2);
  forward_prefill<double>(bundle, std::vector<int>{0, 1}, small);
  EXPECT_THROW(forward_tree<double>(bundle, std::vector<int>{1, 2, 3}, buffers, small), CapacityError);
  KvCache<double> cache(c, 3);
  forward_prefill<double>(bundle, std::vector<int>{0, 1}, cache);
  EXPECT_THROW(forward_tree<double>(bundle, std::vector<int>{1, 2}, buffers, cache), InvalidArgument);
  EXPECT_NO_THROW(forward_tree<double>(bundle, std::vector<int>{1, 2, 3}, buffers, cache));
  cache.set_logical_len(4);  // 4 + depth 2 + 1 > 6
  EXPECT_THROW(forward_tree<double>(bundle, std::vector<int>{1, 2, 3}, buffers, cache), CapacityError);
}

TEST(KvCache, LayoutAndBounds) {
  const auto c = tiny_config();
  KvCache<double> cache(c, 5);
  EXPECT_EQ(cache.total_slots(), c.max_seq_len + 5);
  EXPECT_EQ(cache.scratch_slot(2), c.max_seq_len + 2);
  EXPECT_EQ(cache.kv_dim(), c.kv_dim());
  EXPECT_THROW(cache.set_logical_len(c.max_seq_len + 1), CapacityError);
  EXPECT_THROW(cache.set_logical_len(-1), CapacityError);
  const auto* id = cache.storage_id();
  cache.set_logical_len(10);
  cache.reset();
  EXPECT_EQ(cache.storage_id(), id);
  EXPECT_EQ(cache.logical_len(), 0);
}

TEST(Heads, ZeroWeightsReproduceBackboneLogits) {
  const auto bundle = init_model(tiny_config(), 2);
  KvCache<double> cache(bundle.config, 0);
  const auto out = forward_prefill<double>(bundle, std::vector<int>{0, 4, 9}, cache);
  const auto heads = head_logits<double>(bundle, out.hidden);
  ASSERT_EQ(heads.size(), 3u * 32);
  for (int k = 0; k < 3; ++k) {
    for (int v = 0; v < 32; ++v) EXPECT_EQ(heads[k * 32 + v], out.logits[v]);
  }
}

TEST(Heads, RandomHeadsDifferAndSoftmaxNormalizes) {
  InitOptions init{.head_init = HeadInit::random, .head_std = 0.5};
  const auto bundle = init_model(tiny_config(), 2, init);
  KvCache<double> cache(bundle.config, 0);
  const auto out = forward_prefill<double>(bundle, std::vector<int>{0, 4, 9}, cache);
  const auto heads = head_logits<double>(bundle, out.hidden);
  for (int k = 0; k < 3; ++k) {
    const auto row = std::span<const double>(heads).subspan(k * 32, 32);
    EXPECT_NE(to_vec(row), out.logits);
    const auto p = softmax(row);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
  }
}

TEST(Argmax, LowestIndexWinsTies) {
  const std::vector<double> v{1.0, 3.0, 3.0, -2.0};
  EXPECT_EQ(argmax<double>(v), 1);
  const std::vector<float> w{0.f, 0.f};
  EXPECT_EQ(argmax<float>(w), 0);
}

TEST(CastBundle, RoundTripPreservesFloatValues) {
  const auto d = init_model(tiny_config(), 9);
  const auto f = cast_bundle<float>(d);
  const auto back = cast_bundle<double>(f);
  EXPECT_EQ(cast_bundle<float>(back).backbone.lm_head, f.backbone.lm_head);
  EXPECT_EQ(f.config, d.config);
}

}  // namespace
}  // namespace medusa
