// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medusa/model.hpp"
#include "medusa/rng.hpp"
#include "medusa/tree.hpp"

// Randomized oracle suites shared by the `selftest` subcommand and the
// acceptance binary.
namespace medusa::selfcheck {

/// Random prefix-closed tree with at most `max_nodes` nodes (root included).
TreeSpec random_tree_spec(CounterRng& rng, int max_nodes = 64, int max_heads = 5,
                          int max_topk = 4);

/// Small random model configuration (1-2 layers, vocab 16-64, GQA or MHA).
ModelConfig random_toy_config(CounterRng& rng, int num_heads);

struct MaskOracleReport {
  int specs = 0;
  int failures = 0;
  int max_nodes_seen = 0;
  std::string first_failure;
  bool ok() const noexcept { return failures == 0 && specs > 0; }
};

/// Compiles `n_specs` random trees and checks every buffer against the
/// brute-force oracle.
MaskOracleReport check_mask_oracle(int n_specs, std::uint64_t seed);

struct LosslessReport {
  int trials = 0;
  int mismatches = 0;
  long steps = 0;
  long tokens = 0;
  int max_accepted = 0;  // largest accepted_len seen in any step
  std::string first_mismatch;
  double mean_ac() const noexcept { return steps ? static_cast<double>(tokens) / steps : 0.0; }
  bool ok() const noexcept { return mismatches == 0 && trials > 0; }
};

/// Random (seed, prompt, tree) triples; speculative output must equal the
/// baseline token for token. Alternates double and single precision and a
/// mix of head initializations, including heads fitted to the trial's own
/// backbone so that multi-token acceptance is exercised.
LosslessReport check_lossless(int n_trials, std::uint64_t seed, int max_new_tokens = 48);

struct GradCheckReport {
  int points = 0;
  int coords = 0;
  double max_rel_error = 0.0;
  std::string worst;
  bool ok(double tol) const noexcept { return points > 0 && max_rel_error <= tol; }
};

/// Central finite differences of the head loss against the analytic
/// gradient at `n_points` random parameter points. Each point compares a
/// random sample of head coordinates; the error of a point is
/// ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||).
GradCheckReport check_gradients(int n_points, std::uint64_t seed, double step = 1e-5);

}  // namespace medusa::selfcheck
