// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace medusa {

/// Counter-based generator: the n-th draw of a stream is a pure function of
/// (seed, stream, n). Every stochastic choice in the project (weight init,
/// corpus sampling, shuffling) derives its own stream from one seed via
/// `fork`, so adding draws to one consumer never perturbs another.
///
/// Distribution transforms are implemented here rather than through
/// <random> distributions, whose output is implementation-defined.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  CounterRng fork(std::uint64_t stream) const;
  CounterRng fork(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

}  // namespace medusa
