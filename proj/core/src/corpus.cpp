// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "medusa/errors.hpp"

namespace medusa {

SyntheticGrammar::SyntheticGrammar(const GrammarConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config.vocab_size <= kNumSpecialTokens + 1) {
    throw InvalidArgument("grammar: vocabulary too small for the reserved tokens");
  }
  if (config.min_len < 1 || config.max_len < config.min_len || config.branching < 1) {
    throw InvalidArgument("grammar: invalid length or branching bounds");
  }
  const int words = config.vocab_size - kNumSpecialTokens;
  CounterRng rng = CounterRng(seed).fork("grammar-table");
  successors_.resize(static_cast<std::size_t>(words) * config.branching);
  for (auto& s : successors_) {
    s = kNumSpecialTokens + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(words)));
  }
  double total = 0.0;
  for (int r = 0; r < config.branching; ++r) total += 1.0 / (r + 1);
  double acc = 0.0;
  for (int r = 0; r < config.branching; ++r) {
    acc += 1.0 / (r + 1) / total;
    cdf_.push_back(acc);
  }
  cdf_.back() = 1.0;
}

int SyntheticGrammar::first_word(CounterRng& rng) const {
  const int words = config_.vocab_size - kNumSpecialTokens;
  return kNumSpecialTokens + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(words)));
}

int SyntheticGrammar::next_word(int word, CounterRng& rng) const {
  const double u = rng.uniform();
  const int rank = static_cast<int>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  const auto base = static_cast<std::size_t>(word - kNumSpecialTokens) * config_.branching;
  return successors_[base + std::min(rank, config_.branching - 1)];
}

std::vector<int> SyntheticGrammar::sample(CounterRng& rng) const {
  const int span = config_.max_len - config_.min_len + 1;
  const int n_words = config_.min_len + static_cast<int>(rng.uniform_int(span));
  std::vector<int> seq{kBosToken};
  int word = first_word(rng);
  int think_len = 0;
  if (rng.uniform() < config_.think_prob) {
    think_len = 1 + static_cast<int>(rng.uniform_int(std::max(1, n_words / 2)));
    seq.push_back(kThinkBeginToken);
  }
  for (int i = 0; i < n_words; ++i) {
    seq.push_back(word);
    if (think_len > 0 && i + 1 == think_len) seq.push_back(kThinkEndToken);
    word = next_word(word, rng);
  }
  if (rng.uniform() < config_.end_prob) seq.push_back(kEosToken);
  return seq;
}

std::vector<std::vector<int>> generate_corpus(const GrammarConfig& config, std::uint64_t seed,
                                              int n_sequences) {
  const SyntheticGrammar grammar(config, seed);
  const CounterRng base = CounterRng(seed).fork("corpus");
  std::vector<std::vector<int>> out;
  out.reserve(n_sequences);
  for (int i = 0; i < n_sequences; ++i) {
    CounterRng rng = base.fork(static_cast<std::uint64_t>(i));
    out.push_back(grammar.sample(rng));
  }
  return out;
}

void save_corpus(const std::vector<std::vector<int>>& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus " + path.string());
  for (const auto& seq : corpus) out << nlohmann::json{{"tokens", seq}}.dump() << '\n';
}

std::vector<std::vector<int>> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<std::vector<int>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).at("tokens").get<std::vector<int>>());
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("corpus " + path.string() + " line " + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  return out;
}

}  // namespace medusa
