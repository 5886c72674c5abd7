// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "medusa/model.hpp"

namespace medusa {

/// lambda_k = decay^k for k = 1..K.
std::vector<double> decay_lambdas(int num_heads, double decay = 0.8);

struct HeadLossResult {
  double loss = 0.0;
  std::vector<double> per_head_loss;   // mean CE of each head over its valid rows
  std::vector<int> valid_positions;    // rows with a target, per head
  std::vector<HeadWeights<double>> grads;  // empty when gradients were not requested
};

/// Weighted multi-head cross-entropy,
///   loss = sum_k lambda_k * mean_{valid t} CE(head_k(h_t), target[t][k]),
/// with gradients for the head parameters only.
///
/// `hidden` is rows x d_model; `targets` is rows x K with -1 marking a row
/// that has no target for that head. Throws InvalidArgument when no row has
/// any target or a target is outside the vocabulary.
HeadLossResult head_loss(const ModelBundle<double>& bundle, std::span<const double> hidden,
                         std::span<const int> targets, std::span<const double> lambdas,
                         bool with_grads = true);

}  // namespace medusa
