// Copyright 2026 The Medusa Static Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>

// Scalar kernels. Each output element is reduced in a fixed order that does
// not depend on how many rows are processed together, so a batched call and
// a sequence of single-row calls round identically.
namespace medusa::kernels {

template <class Real>
inline Real dot(const Real* a, const Real* b, int n) noexcept {
  Real a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 += a[i] * b[i];
    a1 += a[i + 1] * b[i + 1];
    a2 += a[i + 2] * b[i + 2];
    a3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) a0 += a[i] * b[i];
  return (a0 + a1) + (a2 + a3);
}

// y[t][r] = dot(w[r], x[t]) for t < rows; w is [out][in].
template <class Real>
inline void linear(const Real* w, int out, int in, const Real* x, int rows, Real* y) noexcept {
  for (int r = 0; r < out; ++r) {
    const Real* wr = w + static_cast<std::size_t>(r) * in;
    for (int t = 0; t < rows; ++t) {
      y[static_cast<std::size_t>(t) * out + r] = dot(wr, x + static_cast<std::size_t>(t) * in, in);
    }
  }
}

template <class Real>
inline void rmsnorm_rows(const Real* x, int rows, int d, const Real* gain, Real eps,
                         Real* y) noexcept {
  for (int t = 0; t < rows; ++t) {
    const Real* xr = x + static_cast<std::size_t>(t) * d;
    Real* yr = y + static_cast<std::size_t>(t) * d;
    const Real ms = dot(xr, xr, d) / static_cast<Real>(d);
    const Real inv = Real(1) / std::sqrt(ms + eps);
    for (int i = 0; i < d; ++i) yr[i] = xr[i] * inv * gain[i];
  }
}

template <class Real>
inline Real sigmoid(Real x) noexcept {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <class Real>
inline Real silu(Real x) noexcept {
  return x * sigmoid(x);
}

}  // namespace medusa::kernels
