// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medusa/model.hpp"
#include "medusa/tree.hpp"

namespace medusa {

/// Mean accepted tokens per step divided into the latency ratio.
/// Kept as a free function so every report row is built through it.
inline double speedup_from(double ac, double overhead) noexcept { return ac / overhead; }

/// Metrics of one repetition, or of an aggregate over repetitions.
struct RunMetrics {
  int decode_len = 0;
  double ac = 0.0;        // mean accepted_len per speculative step
  double overhead = 0.0;  // median speculative step latency / median decode step latency
  double speedup_measured = 0.0;  // wall_ms_auto / wall_ms_spec
  double speedup_model = 0.0;     // ac / overhead
  long steps = 0;                 // speculative steps
  long emitted = 0;               // tokens produced by the speculative run
  double wall_ms_spec = 0.0;      // decode loop only, prefill excluded
  double wall_ms_auto = 0.0;
  double step_us_spec = 0.0;  // median per-step latencies
  double step_us_auto = 0.0;
  int max_accepted = 0;
  int min_accepted = 0;
};

struct MeasureOptions {
  int reps = 3;
  int warmup = 3;  // discarded runs of each loop before timing
};

struct MeasureResult {
  RunMetrics aggregate;
  std::vector<RunMetrics> per_rep;
  std::vector<int> accepted_lens;  // from the first repetition
  int reps_used = 0;
};

/// Runs the baseline and speculative loops on the same prompt for
/// `decode_len` new tokens (EOS disabled). Step latencies are medians over
/// every timed step; when the median step is below 10 us the repetition
/// count is raised and a warning is logged.
template <class Real>
MeasureResult measure_run(const ModelBundle<Real>& bundle, const StaticTreeBuffers& buffers,
                          std::span<const int> prompt, int decode_len,
                          const MeasureOptions& options = {});

struct SweepConfig {
  std::vector<int> lengths{128, 256, 512, 1024};
  std::vector<std::vector<int>> prompts;  // repetition r uses prompts[r % size]
  int reps = 3;
  int warmup = 3;
  std::uint64_t seed = 0;

  void validate(const ModelConfig& model) const;
};

SweepConfig sweep_config_from_json(const nlohmann::json& j);

struct SweepRow {
  int length = 0;
  int rep = -1;  // -1 marks the per-length median row
  RunMetrics metrics;
};

struct SweepReport {
  std::vector<SweepRow> rows;        // one per (length, rep)
  std::vector<SweepRow> aggregates;  // one per length
  /// True when the median overhead does not decrease as length grows.
  bool overhead_monotone = true;
};

template <class Real>
SweepReport sweep(const ModelBundle<Real>& bundle, const StaticTreeBuffers& buffers,
                  const SweepConfig& config);

/// Columns: length,rep,ac,overhead,speedup_measured,speedup_model,steps,
/// wall_ms_spec,wall_ms_auto. Aggregate rows carry rep = "median".
std::string sweep_to_csv(const SweepReport& report);

struct IntensityEstimate {
  double weight_flops = 0.0;  // 2 * matmul params * batch
  double attn_flops = 0.0;    // 2 * context * d_model * batch per layer
  double weight_bytes = 0.0;  // matmul params read once per step
  double kv_bytes = 0.0;      // K and V rows read for every sequence
  double flops = 0.0;
  double bytes = 0.0;
  double intensity = 0.0;         // flops / bytes
  double weight_intensity = 0.0;  // weight_flops / weight_bytes
};

/// Matmul parameters touched by one decode step (embedding lookup and norm
/// gains excluded; lm_head included).
long matmul_param_count(const ModelConfig& config);

/// OPS/Byte of one decode step over `batch` sequences each holding
/// `context_len` cached positions.
IntensityEstimate arithmetic_intensity(const ModelConfig& config, int batch, int context_len,
                                       int bytes_per_elem = 2);

}  // namespace medusa
