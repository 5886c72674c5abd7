// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "medusa/corpus.hpp"
#include "medusa/engine.hpp"
#include "medusa/heads.hpp"
#include "medusa/training.hpp"

namespace medusa::selfcheck {
namespace {

long full_tree_size(const std::vector<int>& topk, long cap) {
  long level = 1, total = 0;
  for (int k : topk) {
    level = std::min(cap, level * k);
    total = std::min(cap, total + level);
  }
  return total;
}

std::string describe(const std::vector<int>& tokens) {
  std::string s = "[";
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(tokens[i]);
  }
  return s + "]";
}

template <class Real>
struct TrialOutcome {
  bool equal = false;
  SpeculativeResult spec;
  AutoregressiveResult base;
};

template <class Real>
TrialOutcome<Real> run_trial(const ModelBundle<Real>& bundle, const StaticTreeBuffers& buffers,
                             const std::vector<int>& prompt, int max_new_tokens) {
  GenerationOptions gen;
  gen.max_new_tokens = max_new_tokens;
  TrialOutcome<Real> t;
  t.base = generate_autoregressive(bundle, prompt, gen);
  t.spec = generate_speculative(bundle, buffers, prompt, gen);
  t.equal = t.base.tokens == t.spec.tokens;
  return t;
}

// Heads fitted for a few hundred steps on the backbone's own greedy output,
// so that verification accepts more than the root.
ModelBundle<double> fit_heads(const ModelBundle<double>& bundle, CounterRng& rng) {
  std::vector<std::vector<int>> prompts;
  const int V = bundle.config.vocab_size;
  for (int i = 0; i < 6; ++i) {
    std::vector<int> p(1 + rng.uniform_int(6));
    for (int& t : p) t = static_cast<int>(rng.uniform_int(V));
    prompts.push_back(std::move(p));
  }
  DistillOptions dopt;
  dopt.max_new_tokens = 40;
  dopt.eos_token.reset();
  const auto samples = build_distill_set(bundle, prompts, 6, dopt);
  TrainConfig tc;
  tc.learning_rate = 2e-2;
  tc.batch_size = 32;
  tc.max_steps = 120;
  tc.seed = rng.next_u64();
  return train_heads(bundle, samples, tc).bundle;
}

}  // namespace

TreeSpec random_tree_spec(CounterRng& rng, int max_nodes, int max_heads, int max_topk) {
  TreeSpec spec;
  const int K = 1 + static_cast<int>(rng.uniform_int(max_heads));
  for (int k = 0; k < K; ++k) spec.topk_per_head.push_back(1 + static_cast<int>(rng.uniform_int(max_topk)));
  const long cap = full_tree_size(spec.topk_per_head, max_nodes);
  const long target = 1 + static_cast<long>(rng.uniform_int(std::min<long>(cap, max_nodes - 1)));

  std::set<std::vector<int>> present;
  std::vector<const std::vector<int>*> parents;  // candidates for growth, root = nullptr
  parents.push_back(nullptr);
  for (long attempts = 0; static_cast<long>(spec.paths.size()) < target && attempts < target * 64;
       ++attempts) {
    const auto* parent = parents[rng.uniform_int(parents.size())];
    std::vector<int> child = parent ? *parent : std::vector<int>{};
    const int depth = static_cast<int>(child.size());
    if (depth >= K) continue;
    child.push_back(static_cast<int>(rng.uniform_int(spec.topk_per_head[depth])));
    auto [it, inserted] = present.insert(child);
    if (!inserted) continue;
    spec.paths.push_back(child);
    parents.push_back(&*it);
  }
  return spec;
}

ModelConfig random_toy_config(CounterRng& rng, int num_heads) {
  static constexpr int vocabs[] = {16, 32, 64};
  ModelConfig c;
  c.n_layers = 1 + static_cast<int>(rng.uniform_int(2));
  c.n_q_heads = rng.uniform_int(2) ? 4 : 2;
  c.n_kv_heads = rng.uniform_int(2) ? c.n_q_heads : 1;
  c.d_model = c.n_q_heads * (rng.uniform_int(2) ? 8 : 4);
  c.d_ff = 2 * c.d_model + 8;
  c.vocab_size = vocabs[rng.uniform_int(3)];
  c.max_seq_len = 128;
  c.num_medusa_heads = num_heads;
  return c;
}

MaskOracleReport check_mask_oracle(int n_specs, std::uint64_t seed) {
  MaskOracleReport rep;
  CounterRng root(seed, 0x6d61736bULL);
  for (int i = 0; i < n_specs; ++i) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(i));
    const auto spec = random_tree_spec(rng);
    const auto buffers = compile_tree(spec);
    rep.max_nodes_seen = std::max(rep.max_nodes_seen, buffers.num_nodes());
    const auto v = validate_buffers(buffers, spec);
    ++rep.specs;
    if (!v.ok()) {
      if (rep.failures++ == 0) rep.first_failure = "spec " + std::to_string(i) + ": " + v.message;
    }
  }
  return rep;
}

LosslessReport check_lossless(int n_trials, std::uint64_t seed, int max_new_tokens) {
  LosslessReport rep;
  CounterRng root(seed, 0x6c6f7373ULL);
  for (int i = 0; i < n_trials; ++i) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(i));
    const int K = 1 + static_cast<int>(rng.uniform_int(4));
    const auto config = random_toy_config(rng, K);
    const auto spec = random_tree_spec(rng, 32, K, std::min(4, config.vocab_size));
    const auto buffers = compile_tree(spec);

    InitOptions init;
    const int mode = i % 4;  // 0 zero, 1 random, 2 fitted, 3 random (small)
    init.head_init = mode == 0 || mode == 2 ? HeadInit::zero : HeadInit::random;
    init.head_std = mode == 3 ? 0.05 : 1.0;
    auto bundle = init_model(config, rng.next_u64(), init);
    if (mode == 2) bundle = fit_heads(bundle, rng);

    std::vector<int> prompt(1 + rng.uniform_int(12));
    for (int& t : prompt) t = static_cast<int>(rng.uniform_int(config.vocab_size));

    bool equal;
    std::vector<int> got, want;
    const SpeculativeResult* spec_res;
    TrialOutcome<double> td;
    TrialOutcome<float> tf;
    if (i % 2 == 0) {
      td = run_trial(bundle, buffers, prompt, max_new_tokens);
      equal = td.equal;
      spec_res = &td.spec;
      got = td.spec.tokens;
      want = td.base.tokens;
    } else {
      tf = run_trial(cast_bundle<float>(bundle), buffers, prompt, max_new_tokens);
      equal = tf.equal;
      spec_res = &tf.spec;
      got = tf.spec.tokens;
      want = tf.base.tokens;
    }
    ++rep.trials;
    for (const auto& st : spec_res->steps) {
      rep.steps += 1;
      rep.tokens += st.accepted_len;
      rep.max_accepted = std::max(rep.max_accepted, st.accepted_len);
    }
    if (!equal && rep.mismatches++ == 0) {
      rep.first_mismatch = "trial " + std::to_string(i) + ": speculative " + describe(got) +
                           " vs baseline " + describe(want);
    }
  }
  return rep;
}

GradCheckReport check_gradients(int n_points, std::uint64_t seed, double step) {
  GradCheckReport rep;
  CounterRng root(seed, 0x67726164ULL);
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 12;
  c.n_q_heads = 2;
  c.n_kv_heads = 1;
  c.d_ff = 16;
  c.vocab_size = 20;
  c.max_seq_len = 16;
  c.num_medusa_heads = 3;
  const int K = c.num_medusa_heads, d = c.d_model, rows = 10;
  constexpr int kCoords = 24;

  for (int p = 0; p < n_points; ++p) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(p));
    InitOptions init{.head_init = HeadInit::random, .head_std = 0.1 + 0.4 * rng.uniform()};
    auto bundle = init_model(c, rng.next_u64(), init);
    std::vector<double> hidden(static_cast<std::size_t>(rows) * d);
    for (double& h : hidden) h = rng.normal();
    std::vector<int> targets(static_cast<std::size_t>(rows) * K);
    for (int& t : targets) t = rng.uniform() < 0.2 ? -1 : static_cast<int>(rng.uniform_int(c.vocab_size));
    targets[0] = 0;  // at least one valid target
    std::vector<double> lambdas(K);
    for (double& l : lambdas) l = 0.1 + rng.uniform();

    const auto analytic = head_loss(bundle, hidden, targets, lambdas, true);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (int q = 0; q < kCoords; ++q) {
      const int k = static_cast<int>(rng.uniform_int(K));
      const bool bias = rng.uniform() < 0.25;
      auto& param = bias ? bundle.heads[k].bias : bundle.heads[k].weight;
      const auto& grad = bias ? analytic.grads[k].bias : analytic.grads[k].weight;
      const std::size_t idx = rng.uniform_int(param.size());
      const double saved = param[idx];
      param[idx] = saved + step;
      const double up = head_loss(bundle, hidden, targets, lambdas, false).loss;
      param[idx] = saved - step;
      const double down = head_loss(bundle, hidden, targets, lambdas, false).loss;
      param[idx] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (grad[idx] - numeric) * (grad[idx] - numeric);
      a2 += grad[idx] * grad[idx];
      n2 += numeric * numeric;
      ++rep.coords;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    const double rel = std::sqrt(diff2) / denom;
    ++rep.points;
    if (rel >= rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst = "point " + std::to_string(p);
    }
  }
  return rep;
}

}  // namespace medusa::selfcheck
