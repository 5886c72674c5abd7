// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "medusa/checkpoint.hpp"
#include "medusa/corpus.hpp"
#include "medusa/errors.hpp"
#include "medusa/rng.hpp"
#include "test_support.hpp"

namespace medusa {
namespace {

TEST(CounterRng, StreamsAreReproducibleAndIndependent) {
  CounterRng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  CounterRng base(42);
  auto x = base.fork("weights"), y = base.fork("weights"), z = base.fork("corpus");
  EXPECT_EQ(x.next_u64(), y.next_u64());
  EXPECT_NE(base.fork("weights").next_u64(), z.next_u64());
  EXPECT_NE(base.fork(1).key(), base.fork(2).key());
}

TEST(CounterRng, DistributionMoments) {
  CounterRng r(7);
  double s = 0, s2 = 0, u = 0;
  std::vector<int> counts(5, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    s2 += v * v;
    const double w = r.uniform();
    ASSERT_GE(w, 0.0);
    ASSERT_LT(w, 1.0);
    u += w;
    ++counts[r.uniform_int(5)];
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_NEAR(u / n, 0.5, 0.005);
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(n), 0.2, 0.01);
}

TEST(Corpus, GrammarShape) {
  GrammarConfig g;
  g.vocab_size = 64;
  const auto corpus = generate_corpus(g, 3, 200);
  ASSERT_EQ(corpus.size(), 200u);
  int thinking = 0, closed = 0;
  for (const auto& s : corpus) {
    ASSERT_GE(s.size(), 1u + g.min_len);
    EXPECT_EQ(s.front(), kBosToken);
    int words = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
      ASSERT_GE(s[i], 0);
      ASSERT_LT(s[i], 64);
      if (!is_special_token(s[i])) ++words;
    }
    EXPECT_GE(words, g.min_len);
    EXPECT_LE(words, 2 * g.max_len);
    if (s[1] == kThinkBeginToken) {
      ++thinking;
      EXPECT_NE(std::find(s.begin(), s.end(), kThinkEndToken), s.end());
    }
    if (s.back() == kEosToken) ++closed;
  }
  EXPECT_GT(thinking, 20);
  EXPECT_GT(closed, 50);
  EXPECT_EQ(generate_corpus(g, 3, 200), corpus);
  EXPECT_NE(generate_corpus(g, 4, 200), corpus);
  // Prefixes do not depend on the corpus size.
  const auto prefix = generate_corpus(g, 3, 50);
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), corpus.begin()));
}

TEST(Corpus, JsonlRoundTripAndErrors) {
  const auto dir = testing::scratch_dir("corpus");
  const auto corpus = generate_corpus({}, 1, 10);
  save_corpus(corpus, dir / "c.jsonl");
  EXPECT_EQ(load_corpus(dir / "c.jsonl"), corpus);
  std::ofstream(dir / "bad.jsonl") << "{\"tokens\": [1, 2]}\nnot json\n";
  EXPECT_THROW(load_corpus(dir / "bad.jsonl"), InvalidArgument);
  EXPECT_THROW(load_corpus(dir / "missing.jsonl"), IoError);
  GrammarConfig tiny;
  tiny.vocab_size = 4;
  EXPECT_THROW(SyntheticGrammar(tiny, 0), InvalidArgument);
}

TEST(Checkpoint, RoundTripBothDtypes) {
  const auto dir = testing::scratch_dir("ckpt");
  InitOptions init{.head_init = HeadInit::random, .head_std = 0.3};
  const auto bundle = init_model(testing::tiny_config(), 5, init);
  save_checkpoint(bundle, dir / "m64.bin");
  const auto back = load_checkpoint(dir / "m64.bin");
  EXPECT_EQ(back.config, bundle.config);
  EXPECT_EQ(backbone_digest(back.backbone), backbone_digest(bundle.backbone));
  EXPECT_EQ(back.heads[2].weight, bundle.heads[2].weight);

  save_checkpoint(bundle, dir / "m32.bin", DType::f32);
  const auto narrow = load_checkpoint(dir / "m32.bin");
  const auto expect = cast_bundle<double>(cast_bundle<float>(bundle));
  EXPECT_EQ(narrow.backbone.lm_head, expect.backbone.lm_head);
  EXPECT_LT(std::filesystem::file_size(dir / "m32.bin"), std::filesystem::file_size(dir / "m64.bin"));
}

TEST(Checkpoint, HeaderLayout) {
  const auto dir = testing::scratch_dir("ckpt_header");
  const auto bundle = init_model(testing::tiny_config(), 5);
  save_checkpoint(bundle, dir / "m.bin");
  std::ifstream in(dir / "m.bin", std::ios::binary);
  unsigned char len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | len_bytes[i];
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  const auto j = nlohmann::json::parse(header);
  EXPECT_EQ(j.at("format"), "medusa-checkpoint");
  EXPECT_EQ(j.at("version"), 1);
  EXPECT_EQ(config_from_json(j.at("config")), bundle.config);
  const auto& first = j.at("tensors").at(0);
  EXPECT_EQ(first.at("name"), "tok_embedding");
  EXPECT_EQ(first.at("dtype"), "f64");
  EXPECT_EQ(first.at("offset"), 0);
  // First payload value is the first embedding entry, little-endian.
  double v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  EXPECT_EQ(v, bundle.backbone.tok_embedding[0]);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto dir = testing::scratch_dir("ckpt_bad");
  const auto bundle = init_model(testing::tiny_config(), 5);
  save_checkpoint(bundle, dir / "m.bin");
  const auto size = std::filesystem::file_size(dir / "m.bin");
  std::filesystem::resize_file(dir / "m.bin", size - 16);
  EXPECT_THROW(load_checkpoint(dir / "m.bin"), IoError);
  std::ofstream(dir / "junk.bin") << "hello";
  EXPECT_THROW(load_checkpoint(dir / "junk.bin"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "absent.bin"), IoError);
}

TEST(ConfigJson, MissingKeysKeepDefaultsAndInvalidIsRejected) {
  const auto c = config_from_json(nlohmann::json::parse(R"({"vocab_size": 64, "n_layers": 2})"));
  EXPECT_EQ(c.vocab_size, 64);
  EXPECT_EQ(c.d_model, ModelConfig{}.d_model);
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"n_kv_heads": 3})")), InvalidArgument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"d_model": "wide"})")), InvalidArgument);
}

}  // namespace
}  // namespace medusa
