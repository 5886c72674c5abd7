// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "medusa/rng.hpp"

namespace medusa {

// Reserved ids at the bottom of every vocabulary.
inline constexpr int kBosToken = 0;
inline constexpr int kEosToken = 1;
inline constexpr int kThinkBeginToken = 2;
inline constexpr int kThinkEndToken = 3;
inline constexpr int kNumSpecialTokens = 4;

inline bool is_special_token(int id) noexcept { return id >= 0 && id < kNumSpecialTokens; }

struct GrammarConfig {
  int vocab_size = 512;
  int min_len = 8;    // word tokens per sequence, specials excluded
  int max_len = 32;
  int branching = 4;  // successors per word in the transition table
  double think_prob = 0.3;  // chance a sequence opens with a thinking span
  double end_prob = 0.5;    // chance a sequence is closed with EOS
};

/// Seeded stochastic grammar over the toy vocabulary. Word tokens follow a
/// sparse first-order transition table with Zipf-weighted successors; a
/// sequence is
///   BOS [THINK_BEGIN w... THINK_END] w w ... [EOS]
/// The table is fixed by the seed; sampling draws from a caller-provided
/// stream.
class SyntheticGrammar {
 public:
  SyntheticGrammar(const GrammarConfig& config, std::uint64_t seed);

  std::vector<int> sample(CounterRng& rng) const;
  const GrammarConfig& config() const noexcept { return config_; }

 private:
  int next_word(int word, CounterRng& rng) const;
  int first_word(CounterRng& rng) const;

  GrammarConfig config_;
  std::vector<int> successors_;  // word -> `branching` successor ids
  std::vector<double> cdf_;      // Zipf cdf over successor ranks
};

std::vector<std::vector<int>> generate_corpus(const GrammarConfig& config, std::uint64_t seed,
                                              int n_sequences);

/// JSON lines, one {"tokens": [...]} object per sequence.
void save_corpus(const std::vector<std::vector<int>>& corpus, const std::filesystem::path& path);
std::vector<std::vector<int>> load_corpus(const std::filesystem::path& path);

}  // namespace medusa
