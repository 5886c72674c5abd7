// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/training.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "medusa/engine.hpp"
#include "medusa/errors.hpp"
#include "medusa/heads.hpp"
#include "medusa/log.hpp"
#include "medusa/rng.hpp"

namespace medusa {

template <class Real>
std::vector<DistillSample> build_distill_set(const ModelBundle<Real>& bundle,
                                             const std::vector<std::vector<int>>& prompts,
                                             int n_samples, const DistillOptions& options) {
  if (prompts.empty()) throw InvalidArgument("build_distill_set: no prompts");
  if (n_samples < 0) throw InvalidArgument("build_distill_set: negative sample count");
  GenerationOptions gen;
  gen.max_new_tokens = options.max_new_tokens;
  gen.eos_token = options.eos_token;

  std::vector<DistillSample> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    DistillSample s;
    s.prompt = prompts[static_cast<std::size_t>(i) % prompts.size()];
    auto generated = generate_autoregressive(bundle, s.prompt, gen).tokens;
    for (int t : generated) {
      if (is_special_token(t)) {
        s.specials |= static_cast<std::uint8_t>(1u << t);
        if (!options.preserve_special) continue;
      }
      s.continuation.push_back(t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

template std::vector<DistillSample> build_distill_set(const ModelBundle<float>&,
                                                      const std::vector<std::vector<int>>&, int,
                                                      const DistillOptions&);
template std::vector<DistillSample> build_distill_set(const ModelBundle<double>&,
                                                      const std::vector<std::vector<int>>&, int,
                                                      const DistillOptions&);

HeadDataset build_head_dataset(const ModelBundle<double>& bundle,
                               const std::vector<DistillSample>& samples, bool preserve_special) {
  const int K = bundle.num_heads();
  const int d = bundle.config.d_model;
  HeadDataset ds;
  ds.d_model = d;
  ds.num_heads = K;
  std::vector<int> seq;
  for (const auto& s : samples) {
    if (s.prompt.empty()) throw InvalidArgument("head dataset: sample with empty prompt");
    seq = s.prompt;
    seq.insert(seq.end(), s.continuation.begin(), s.continuation.end());
    const int n = static_cast<int>(seq.size());
    const int first = static_cast<int>(s.prompt.size()) - 1;
    if (first + 2 >= n) continue;  // no head has a target
    const auto out = forward_sequence(bundle, seq, false);
    for (int t = first; t + 2 < n; ++t) {
      const auto h = out.hidden_row(t);
      ds.hidden.insert(ds.hidden.end(), h.begin(), h.end());
      for (int k = 0; k < K; ++k) {
        const int idx = t + k + 2;
        int y = idx < n ? seq[idx] : -1;
        if (y >= 0 && !preserve_special && is_special_token(y)) y = -1;
        ds.targets.push_back(y);
      }
      ++ds.rows;
    }
  }
  return ds;
}

namespace {

class AdamW {
 public:
  AdamW(const TrainConfig& c, const std::vector<HeadWeights<double>>& heads) : c_(c) {
    for (const auto& h : heads) {
      m_.push_back({std::vector<double>(h.weight.size()), std::vector<double>(h.bias.size())});
      v_.push_back(m_.back());
    }
  }

  void step(std::vector<HeadWeights<double>>& heads, const std::vector<HeadWeights<double>>& grads,
            const std::vector<bool>& active, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < heads.size(); ++k) {
      if (!active[k]) continue;
      update(heads[k].weight, grads[k].weight, m_[k].weight, v_[k].weight, lr, bc1, bc2);
      update(heads[k].bias, grads[k].bias, m_[k].bias, v_[k].bias, lr, bc1, bc2);
    }
  }

 private:
  void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
              std::vector<double>& v, double lr, double bc1, double bc2) const {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c_.beta1 * m[i] + (1.0 - c_.beta1) * g[i];
      v[i] = c_.beta2 * v[i] + (1.0 - c_.beta2) * g[i] * g[i];
      p[i] -= lr * c_.weight_decay * p[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c_.adam_eps);
    }
  }

  const TrainConfig& c_;
  std::vector<HeadWeights<double>> m_, v_;
  long t_ = 0;
};

void check_config(const TrainConfig& c, int num_heads) {
  if (!(c.learning_rate > 0.0) || c.batch_size <= 0 || c.epochs <= 0 || c.max_steps < 0) {
    throw InvalidArgument("train config: learning rate, batch size and epochs must be positive");
  }
  if (!c.lambdas.empty() && static_cast<int>(c.lambdas.size()) != num_heads) {
    throw InvalidArgument("train config: expected " + std::to_string(num_heads) + " lambdas");
  }
  for (double l : c.lambdas) {
    if (l < 0.0 || !std::isfinite(l)) throw InvalidArgument("train config: negative lambda");
  }
  if (c.min_lr_ratio < 0.0 || c.min_lr_ratio > 1.0) {
    throw InvalidArgument("train config: min_lr_ratio must lie in [0, 1]");
  }
}

}  // namespace

TrainResult train_heads(const ModelBundle<double>& bundle, const std::vector<DistillSample>& samples,
                        const TrainConfig& config) {
  const int K = bundle.num_heads();
  check_config(config, K);
  if (samples.empty()) throw InvalidArgument("train_heads: no samples");
  const auto lambdas = config.lambdas.empty() ? decay_lambdas(K) : config.lambdas;

  const HeadDataset data = build_head_dataset(bundle, samples, config.preserve_special);
  if (data.rows == 0) throw InvalidArgument("train_heads: samples contain no trainable positions");

  TrainResult res;
  res.bundle = bundle;
  std::vector<bool> active(K);
  for (int k = 0; k < K; ++k) active[k] = lambdas[k] > 0.0;
  if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) return res;

  const long per_epoch = (data.rows + config.batch_size - 1) / config.batch_size;
  const long total = config.max_steps > 0 ? config.max_steps : per_epoch * config.epochs;
  const int d = data.d_model;

  AdamW opt(config, res.bundle.heads);
  CounterRng shuffle_rng = CounterRng(config.seed).fork("train-shuffle");
  std::vector<int> order(data.rows);
  std::vector<double> batch_h;
  std::vector<int> batch_y;

  std::size_t cursor = order.size();
  for (long step = 0; step < total; ++step) {
    batch_h.clear();
    batch_y.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        if (b > 0) break;  // finish the epoch with a short batch
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) {
          std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
        }
        cursor = 0;
      }
      const int row = order[cursor++];
      batch_h.insert(batch_h.end(), data.hidden.begin() + static_cast<std::ptrdiff_t>(row) * d,
                     data.hidden.begin() + static_cast<std::ptrdiff_t>(row + 1) * d);
      batch_y.insert(batch_y.end(), data.targets.begin() + static_cast<std::ptrdiff_t>(row) * K,
                     data.targets.begin() + static_cast<std::ptrdiff_t>(row + 1) * K);
    }

    HeadLossResult lr_res;
    try {
      lr_res = head_loss(res.bundle, batch_h, batch_y, lambdas);
    } catch (const InvalidArgument&) {
      continue;  // batch holds only masked targets
    }
    if (!std::isfinite(lr_res.loss)) {
      throw DivergenceError(step, "train_heads: non-finite loss at step " + std::to_string(step));
    }
    const double progress = total > 1 ? static_cast<double>(step) / (total - 1) : 0.0;
    const double lr =
        config.learning_rate *
        (config.min_lr_ratio +
         (1.0 - config.min_lr_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    opt.step(res.bundle.heads, lr_res.grads, active, lr);
    res.loss_curve.push_back(lr_res.loss);
    res.lr_curve.push_back(lr);
    ++res.steps;
    if (step % 100 == 0) log::debug("train_step", {{"step", step}, {"loss", lr_res.loss}, {"lr", lr}});
  }
  return res;
}

HeadAccuracy eval_head_accuracy(const ModelBundle<double>& bundle, const HeadDataset& data) {
  const int K = bundle.num_heads();
  const int V = bundle.config.vocab_size;
  const int d = data.d_model;
  HeadAccuracy acc;
  acc.top1.assign(K, 0.0);
  acc.positions.assign(K, 0);
  std::vector<long> hits(K, 0);
  for (int r = 0; r < data.rows; ++r) {
    const auto h = std::span(data.hidden).subspan(static_cast<std::size_t>(r) * d, d);
    const auto logits = head_logits<double>(bundle, h);
    for (int k = 0; k < K; ++k) {
      const int y = data.targets[static_cast<std::size_t>(r) * K + k];
      if (y < 0) continue;
      ++acc.positions[k];
      const auto row = std::span(logits).subspan(static_cast<std::size_t>(k) * V, V);
      if (argmax(row) == y) ++hits[k];
    }
  }
  if (std::accumulate(acc.positions.begin(), acc.positions.end(), 0L) == 0) {
    throw InvalidArgument("eval_head_accuracy: no evaluable positions");
  }
  for (int k = 0; k < K; ++k) {
    if (acc.positions[k] > 0) acc.top1[k] = static_cast<double>(hits[k]) / acc.positions[k];
  }
  return acc;
}

HeadAccuracy eval_head_accuracy(const ModelBundle<double>& bundle,
                                const std::vector<DistillSample>& samples) {
  if (samples.empty()) throw InvalidArgument("eval_head_accuracy: empty evaluation set");
  return eval_head_accuracy(bundle, build_head_dataset(bundle, samples, true));
}

}  // namespace medusa
