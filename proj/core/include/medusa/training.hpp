// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "medusa/corpus.hpp"
#include "medusa/model.hpp"

namespace medusa {

struct DistillSample {
  std::vector<int> prompt;
  std::vector<int> continuation;  // backbone greedy output
  std::uint8_t specials = 0;      // bit i set when special token i occurs in `continuation`
};

struct DistillOptions {
  int max_new_tokens = 32;
  /// When false, special tokens are stripped from the continuation.
  bool preserve_special = true;
  std::optional<int> eos_token = kEosToken;
};

/// Self-distillation: sample i prompts the frozen backbone with
/// prompts[i % prompts.size()] and records its greedy continuation.
template <class Real>
std::vector<DistillSample> build_distill_set(const ModelBundle<Real>& bundle,
                                             const std::vector<std::vector<int>>& prompts,
                                             int n_samples, const DistillOptions& options);

/// Flattened head-training rows. Row t of a sample is the hidden state at
/// position t (from prompt_len - 1 onward); its target for head k (0-based)
/// is the token at t + k + 2, or -1 when that position is past the end.
struct HeadDataset {
  int rows = 0;
  int d_model = 0;
  int num_heads = 0;
  std::vector<double> hidden;  // rows x d_model
  std::vector<int> targets;    // rows x num_heads
};

HeadDataset build_head_dataset(const ModelBundle<double>& bundle,
                               const std::vector<DistillSample>& samples,
                               bool preserve_special = true);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;  // rows per step
  int epochs = 1;
  /// When positive, overrides `epochs`: run exactly this many steps,
  /// reshuffling at every pass over the data.
  long max_steps = 0;
  std::vector<double> lambdas;  // empty: 0.8^k
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double min_lr_ratio = 0.1;  // cosine decay floor, as a fraction of learning_rate
  /// When false, targets that are special tokens are masked out of the loss.
  bool preserve_special = true;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelBundle<double> bundle;
  std::vector<double> loss_curve;  // per step
  std::vector<double> lr_curve;
  long steps = 0;
};

/// Trains the draft heads against the frozen backbone. Heads whose lambda
/// is zero are left untouched. Throws DivergenceError on a non-finite loss.
TrainResult train_heads(const ModelBundle<double>& bundle, const std::vector<DistillSample>& samples,
                        const TrainConfig& config);

struct HeadAccuracy {
  std::vector<double> top1;    // per head
  std::vector<long> positions;  // evaluated rows per head
};

HeadAccuracy eval_head_accuracy(const ModelBundle<double>& bundle,
                                const std::vector<DistillSample>& samples);
HeadAccuracy eval_head_accuracy(const ModelBundle<double>& bundle, const HeadDataset& data);

}  // namespace medusa
