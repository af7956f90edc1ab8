#pragma once

#include <cstddef>

#include "sitvos/errors.hpp"
#include "sitvos/tensor.hpp"

namespace sitvos {

// Central-difference gradient of a scalar function of a tensor. The function
// is evaluated 2 * numel times; meant for double precision and tiny shapes.
template <typename T, typename F>
Tensor<T> finite_diff_grad(F&& f, const Tensor<T>& x, T h) {
  if (h <= T(0)) throw ContractError("finite_diff_grad: step must be positive");
  Tensor<T> grad(x.shape());
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + h;
    const T fp = f(probe);
    probe[i] = orig - h;
    const T fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (T(2) * h);
  }
  return grad;
}

// Largest relative elementwise deviation, with an absolute floor so that
// near-zero entries do not blow the ratio up.
template <typename T>
T max_relative_error(const Tensor<T>& a, const Tensor<T>& b, T floor = T(1e-8)) {
  require_same_shape(a.shape(), b.shape(), "max_relative_error");
  T worst = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace sitvos
