// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#include "medusa/heads.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "medusa/errors.hpp"

namespace medusa {

std::vector<double> decay_lambdas(int num_heads, double decay) {
  std::vector<double> out(num_heads);
  double w = 1.0;
  for (auto& l : out) {
    w *= decay;
    l = w;
  }
  return out;
}

HeadLossResult head_loss(const ModelBundle<double>& m, std::span<const double> hidden,
                         std::span<const int> targets, std::span<const double> lambdas,
                         bool with_grads) {
  const int d = m.config.d_model;
  const int V = m.config.vocab_size;
  const int K = m.num_heads();
  if (static_cast<int>(lambdas.size()) != K) {
    throw InvalidArgument("head_loss: expected " + std::to_string(K) + " lambdas");
  }
  if (hidden.size() % d != 0) throw InvalidArgument("head_loss: hidden is not rows x d_model");
  const int rows = static_cast<int>(hidden.size() / d);
  if (targets.size() != static_cast<std::size_t>(rows) * K) {
    throw InvalidArgument("head_loss: targets must be rows x K");
  }

  HeadLossResult res;
  res.per_head_loss.assign(K, 0.0);
  res.valid_positions.assign(K, 0);
  int total_valid = 0;
  for (int t = 0; t < rows; ++t) {
    for (int k = 0; k < K; ++k) {
      const int y = targets[static_cast<std::size_t>(t) * K + k];
      if (y < 0) continue;
      if (y >= V) throw InvalidArgument("head_loss: target " + std::to_string(y) + " out of range");
      ++res.valid_positions[k];
      ++total_valid;
    }
  }
  if (total_valid == 0) throw InvalidArgument("head_loss: no position has a target");

  if (with_grads) {
    res.grads.resize(K);
    for (auto& g : res.grads) {
      g.weight.assign(static_cast<std::size_t>(d) * d, 0.0);
      g.bias.assign(d, 0.0);
    }
  }

  const auto& lm = m.backbone.lm_head;
  std::vector<double> z(d), sig(d), u(d), logits(V), du(d), dz(d);
  for (int k = 0; k < K; ++k) {
    const int n_k = res.valid_positions[k];
    if (n_k == 0) continue;
    const auto& H = m.heads[k];
    const double coef = lambdas[k] / n_k;
    double ce_sum = 0.0;
    for (int t = 0; t < rows; ++t) {
      const int y = targets[static_cast<std::size_t>(t) * K + k];
      if (y < 0) continue;
      const double* h = hidden.data() + static_cast<std::size_t>(t) * d;
      kernels::linear(H.weight.data(), d, d, h, 1, z.data());
      for (int i = 0; i < d; ++i) {
        z[i] += H.bias[i];
        sig[i] = kernels::sigmoid(z[i]);
        u[i] = h[i] + z[i] * sig[i];
      }
      kernels::linear(lm.data(), V, d, u.data(), 1, logits.data());
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (double l : logits) sum += std::exp(l - mx);
      const double lse = mx + std::log(sum);
      ce_sum += lse - logits[y];

      if (!with_grads || coef == 0.0) continue;
      std::fill(du.begin(), du.end(), 0.0);
      for (int v = 0; v < V; ++v) {
        const double g = coef * (std::exp(logits[v] - lse) - (v == y ? 1.0 : 0.0));
        const double* row = lm.data() + static_cast<std::size_t>(v) * d;
        for (int i = 0; i < d; ++i) du[i] += g * row[i];
      }
      auto& G = res.grads[k];
      for (int i = 0; i < d; ++i) {
        // d/dz silu(z) = s (1 + z (1 - s))
        dz[i] = du[i] * sig[i] * (1.0 + z[i] * (1.0 - sig[i]));
        G.bias[i] += dz[i];
        double* gw = G.weight.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) gw[j] += dz[i] * h[j];
      }
    }
    res.per_head_loss[k] = ce_sum / n_k;
    res.loss += lambdas[k] * res.per_head_loss[k];
  }
  return res;
}

}  // namespace medusa
