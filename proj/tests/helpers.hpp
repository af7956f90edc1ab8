#pragma once

// Test-side reference implementations. These deliberately re-derive each
// operation with plain loops so library results are checked against an
// independent path.

#include <cmath>
#include <cstddef>
#include <vector>

#include "sitvos/rng.hpp"
#include "sitvos/tensor.hpp"

namespace ref {

using sitvos::Rng;
using sitvos::Shape;
using sitvos::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  return c;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const std::size_t r = x.extent(0), c = x.extent(1);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    T mx = x(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x(i, j));
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(x(i, j) - mx);
    for (std::size_t j = 0; j < c; ++j) y(i, j) = std::exp(x(i, j) - mx) / sum;
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t r = x.extent(0), c = x.extent(1);
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += x(i, j);
    mean /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<T>(c);
    for (std::size_t j = 0; j < c; ++j)
      y(i, j) = (x(i, j) - mean) / std::sqrt(var + eps) * gamma[j] + beta[j];
  }
  return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride, std::size_t padding) {
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::size_t cout = k.extent(0), kh = k.extent(2), kw = k.extent(3);
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  Tensor<T> y({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += x(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                     k(co, ci, ky, kx);
            }
        y(co, oy, ox) = acc;
      }
  return y;
}

// Half-pixel-center bilinear sampling, evaluated pointwise from the formula.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
  const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
  Tensor<T> y({c, oh, ow});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double sy = (oy + 0.5) * static_cast<double>(h) / oh - 0.5;
        double sx = (ox + 0.5) * static_cast<double>(w) / ow - 0.5;
        sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
        sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t x0 = static_cast<std::size_t>(sx);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double fy = sy - y0, fx = sx - x0;
        const double v = (1 - fy) * ((1 - fx) * x(ch, y0, x0) + fx * x(ch, y0, x1)) +
                         fy * ((1 - fx) * x(ch, y1, x0) + fx * x(ch, y1, x1));
        y(ch, oy, ox) = static_cast<T>(v);
      }
  return y;
}

// Brute-force per-element scaled dot-product attention.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  const std::size_t nq = q.extent(0), dk = q.extent(1), nk = k.extent(0), dv = v.extent(1);
  Tensor<T> out({nq, dv});
  for (std::size_t i = 0; i < nq; ++i) {
    std::vector<double> logits(nk);
    double mx = -1e300;
    for (std::size_t j = 0; j < nk; ++j) {
      double dot = 0;
      for (std::size_t p = 0; p < dk; ++p) dot += static_cast<double>(q(i, p)) * k(j, p);
      logits[j] = dot / std::sqrt(static_cast<double>(dk));
      mx = std::max(mx, logits[j]);
    }
    double z = 0;
    for (std::size_t j = 0; j < nk; ++j) z += std::exp(logits[j] - mx);
    for (std::size_t p = 0; p < dv; ++p) {
      double acc = 0;
      for (std::size_t j = 0; j < nk; ++j)
        acc += std::exp(logits[j] - mx) / z * static_cast<double>(v(j, p));
      out(i, p) = static_cast<T>(acc);
    }
  }
  return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  T worst = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace ref
