// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "medusa/engine.hpp"
#include "medusa/errors.hpp"
#include "medusa/log.hpp"

namespace medusa {
namespace {

constexpr double kMinStepSeconds = 10e-6;
constexpr int kMaxReps = 64;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void finish(RunMetrics& m) {
  m.overhead = m.step_us_spec / m.step_us_auto;
  m.speedup_model = speedup_from(m.ac, m.overhead);
  m.speedup_measured = m.wall_ms_auto / m.wall_ms_spec;
}

}  // namespace

template <class Real>
MeasureResult measure_run(const ModelBundle<Real>& bundle, const StaticTreeBuffers& buffers,
                          std::span<const int> prompt, int decode_len,
                          const MeasureOptions& options) {
  if (decode_len < 2) throw InvalidArgument("measure_run: decode_len must be at least 2");
  if (options.reps < 1 || options.warmup < 0) {
    throw InvalidArgument("measure_run: reps must be positive and warmup non-negative");
  }
  const long needed = static_cast<long>(prompt.size()) + decode_len + buffers.max_depth() + 1;
  if (needed > bundle.config.max_seq_len) {
    throw CapacityError("measure_run: prompt plus " + std::to_string(decode_len) +
                        " tokens does not fit max_seq_len");
  }

  GenerationOptions gen;
  gen.max_new_tokens = decode_len;
  gen.eos_token.reset();

  for (int w = 0; w < options.warmup; ++w) {
    (void)generate_autoregressive(bundle, prompt, gen);
    (void)generate_speculative(bundle, buffers, prompt, gen);
  }

  MeasureResult res;
  std::vector<double> all_spec, all_auto;
  int reps = options.reps;
  for (int r = 0; r < reps; ++r) {
    const auto a = generate_autoregressive(bundle, prompt, gen);
    const auto s = generate_speculative(bundle, buffers, prompt, gen);

    RunMetrics m;
    m.decode_len = decode_len;
    m.steps = static_cast<long>(s.steps.size());
    m.emitted = static_cast<long>(s.tokens.size());
    long accepted = 0;
    m.min_accepted = s.steps.front().accepted_len;
    for (const auto& st : s.steps) {
      accepted += st.accepted_len;
      m.max_accepted = std::max(m.max_accepted, st.accepted_len);
      m.min_accepted = std::min(m.min_accepted, st.accepted_len);
    }
    m.ac = static_cast<double>(accepted) / static_cast<double>(m.steps);
    m.step_us_spec = median(s.step_seconds) * 1e6;
    m.step_us_auto = median(a.step_seconds) * 1e6;
    m.wall_ms_spec = sum(s.step_seconds) * 1e3;
    m.wall_ms_auto = sum(a.step_seconds) * 1e3;
    finish(m);
    res.per_rep.push_back(m);
    if (r == 0) {
      for (const auto& st : s.steps) res.accepted_lens.push_back(st.accepted_len);
    }
    all_spec.insert(all_spec.end(), s.step_seconds.begin(), s.step_seconds.end());
    all_auto.insert(all_auto.end(), a.step_seconds.begin(), a.step_seconds.end());

    if (r + 1 == reps && reps < kMaxReps &&
        std::min(median(all_spec), median(all_auto)) < kMinStepSeconds) {
      const int raised = std::min(kMaxReps, reps * 4);
      log::warn("timer_resolution", {{"median_step_us", median(all_auto) * 1e6},
                                     {"reps", reps},
                                     {"raised_to", raised}});
      reps = raised;
    }
  }
  res.reps_used = reps;

  RunMetrics& agg = res.aggregate;
  agg = res.per_rep.front();
  std::vector<double> ac, wall_s, wall_a;
  for (const auto& m : res.per_rep) {
    ac.push_back(m.ac);
    wall_s.push_back(m.wall_ms_spec);
    wall_a.push_back(m.wall_ms_auto);
  }
  agg.ac = median(ac);
  agg.step_us_spec = median(all_spec) * 1e6;
  agg.step_us_auto = median(all_auto) * 1e6;
  agg.wall_ms_spec = median(wall_s);
  agg.wall_ms_auto = median(wall_a);
  finish(agg);
  return res;
}

void SweepConfig::validate(const ModelConfig& model) const {
  if (lengths.empty()) throw InvalidArgument("sweep: no decode lengths");
  for (int len : lengths) {
    if (len < 2 || len > model.max_seq_len) {
      throw InvalidArgument("sweep: length " + std::to_string(len) + " outside [2, " +
                            std::to_string(model.max_seq_len) + "]");
    }
  }
  if (reps < 1) throw InvalidArgument("sweep: reps must be positive");
  if (warmup < 0) throw InvalidArgument("sweep: warmup must be non-negative");
  if (prompts.empty()) throw InvalidArgument("sweep: no prompts");
  for (const auto& p : prompts) {
    if (p.empty()) throw InvalidArgument("sweep: empty prompt");
  }
}

SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  SweepConfig c;
  if (!j.is_object()) throw InvalidArgument("sweep config must be a JSON object");
  try {
    if (j.contains("lengths")) c.lengths = j.at("lengths").get<std::vector<int>>();
    if (j.contains("prompts")) c.prompts = j.at("prompts").get<std::vector<std::vector<int>>>();
    if (j.contains("reps")) c.reps = j.at("reps").get<int>();
    if (j.contains("warmup")) c.warmup = j.at("warmup").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("sweep config: ") + e.what());
  }
  return c;
}

template <class Real>
SweepReport sweep(const ModelBundle<Real>& bundle, const StaticTreeBuffers& buffers,
                  const SweepConfig& config) {
  config.validate(bundle.config);
  if (config.reps < 3) log::warn("sweep_few_reps", {{"reps", config.reps}});
  SweepReport report;
  for (int len : config.lengths) {
    std::vector<RunMetrics> reps;
    for (int r = 0; r < config.reps; ++r) {
      const auto& prompt = config.prompts[static_cast<std::size_t>(r) % config.prompts.size()];
      // Warm up once per length; later reps run hot.
      MeasureOptions opt{.reps = 1, .warmup = r == 0 ? config.warmup : 0};
      auto m = measure_run(bundle, buffers, prompt, len, opt).aggregate;
      report.rows.push_back({len, r, m});
      reps.push_back(m);
      log::info("sweep_row", {{"length", len}, {"rep", r}, {"ac", m.ac}, {"overhead", m.overhead}});
    }
    RunMetrics agg = reps.front();
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto& m : reps) v.push_back(static_cast<double>(m.*field));
      return median(v);
    };
    agg.ac = med(&RunMetrics::ac);
    agg.step_us_spec = med(&RunMetrics::step_us_spec);
    agg.step_us_auto = med(&RunMetrics::step_us_auto);
    agg.wall_ms_spec = med(&RunMetrics::wall_ms_spec);
    agg.wall_ms_auto = med(&RunMetrics::wall_ms_auto);
    agg.steps = static_cast<long>(med(&RunMetrics::steps));
    agg.emitted = static_cast<long>(med(&RunMetrics::emitted));
    finish(agg);
    report.aggregates.push_back({len, -1, agg});
  }
  for (std::size_t i = 1; i < report.aggregates.size(); ++i) {
    if (report.aggregates[i].metrics.overhead < report.aggregates[i - 1].metrics.overhead) {
      report.overhead_monotone = false;
    }
  }
  if (!report.overhead_monotone) log::info("overhead_not_monotone");
  return report;
}

std::string sweep_to_csv(const SweepReport& report) {
  std::string out = "length,rep,ac,overhead,speedup_measured,speedup_model,steps,wall_ms_spec,wall_ms_auto\n";
  char buf[512];
  auto write = [&](const SweepRow& row) {
    const auto& m = row.metrics;
    const std::string rep = row.rep < 0 ? "median" : std::to_string(row.rep);
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%.17g,%.17g,%ld,%.17g,%.17g\n", row.length,
                  rep.c_str(), m.ac, m.overhead, m.speedup_measured, m.speedup_model, m.steps,
                  m.wall_ms_spec, m.wall_ms_auto);
    out += buf;
  };
  for (const auto& r : report.rows) write(r);
  for (const auto& r : report.aggregates) write(r);
  return out;
}

long matmul_param_count(const ModelConfig& c) {
  const long d = c.d_model;
  const long per_layer = 2 * d * d + 2L * c.kv_dim() * d + 3L * c.d_ff * d;
  return per_layer * c.n_layers + static_cast<long>(c.vocab_size) * d;
}

IntensityEstimate arithmetic_intensity(const ModelConfig& config, int batch, int context_len,
                                       int bytes_per_elem) {
  config.validate();
  if (batch <= 0 || context_len <= 0 || bytes_per_elem <= 0) {
    throw InvalidArgument("arithmetic_intensity: inputs must be positive");
  }
  const double P = static_cast<double>(matmul_param_count(config));
  const double b = batch, ctx = context_len, e = bytes_per_elem;
  IntensityEstimate est;
  est.weight_flops = 2.0 * P * b;
  est.attn_flops = 2.0 * ctx * config.d_model * b * config.n_layers;
  est.weight_bytes = P * e;
  est.kv_bytes = 2.0 * config.n_layers * ctx * config.kv_dim() * e * b;
  est.flops = est.weight_flops + est.attn_flops;
  est.bytes = est.weight_bytes + est.kv_bytes;
  est.intensity = est.flops / est.bytes;
  est.weight_intensity = est.weight_flops / est.weight_bytes;
  return est;
}

#define MEDUSA_INSTANTIATE(Real)                                                           \
  template MeasureResult measure_run(const ModelBundle<Real>&, const StaticTreeBuffers&,   \
                                     std::span<const int>, int, const MeasureOptions&);    \
  template SweepReport sweep(const ModelBundle<Real>&, const StaticTreeBuffers&,           \
                             const SweepConfig&);

MEDUSA_INSTANTIATE(float)
MEDUSA_INSTANTIATE(double)
#undef MEDUSA_INSTANTIATE

}  // namespace medusa
