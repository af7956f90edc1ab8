#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sitvos/errors.hpp"
#include "sitvos/tensor.hpp"

namespace sitvos {

// A named trainable tensor. Gradients accumulate across backward passes until
// explicitly cleared by the optimizer.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros(value.shape())) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::function<void(Node<T>&)> backprop;  // pulls this->grad into parents
  Parameter<T>* param = nullptr;
  bool needs_grad = false;
};

// Lightweight handle to a node recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Node<T>* node, Tape<T>* tape) : node_(node), tape_(tape) {}

  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool valid() const { return node_ != nullptr; }

  Node<T>* node() const { return node_; }
  Tape<T>* tape() const { return tape_; }

 private:
  Node<T>* node_ = nullptr;
  Tape<T>* tape_ = nullptr;
};

// Records primitive operations in execution order; nodes therefore appear
// after all of their inputs, which is the only invariant backward() needs.
// A tape is confined to one thread.
template <typename T>
class Tape {
 public:
  Var<T> constant(Tensor<T> v) {
    Node<T>& n = nodes_.emplace_back();
    n.value = std::move(v);
    n.needs_grad = false;
    return Var<T>(&n, this);
  }

  // Differentiable leaf not bound to a Parameter (gradient readable via grad()).
  Var<T> input(Tensor<T> v) {
    Node<T>& n = nodes_.emplace_back();
    n.value = std::move(v);
    n.grad = Tensor<T>::zeros(n.value.shape());
    n.needs_grad = true;
    return Var<T>(&n, this);
  }

  // Leaf bound to a Parameter; backward() adds the node gradient into p.grad.
  Var<T> leaf(Parameter<T>& p) {
    Node<T>& n = nodes_.emplace_back();
    n.value = p.value;
    n.grad = Tensor<T>::zeros(p.value.shape());
    n.param = &p;
    n.needs_grad = true;
    return Var<T>(&n, this);
  }

  Var<T> make(Tensor<T> value, bool needs_grad, std::function<void(Node<T>&)> backprop) {
    Node<T>& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) {
      n.grad = Tensor<T>::zeros(n.value.shape());
      n.backprop = std::move(backprop);
    }
    return Var<T>(&n, this);
  }

  void backward(const Var<T>& loss) {
    if (loss.tape() != this) throw ContractError("backward: loss recorded on a different tape");
    if (loss.value().size() != 1) throw ContractError("backward: loss must be a scalar tensor");
    loss.node()->grad[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->needs_grad && it->backprop) it->backprop(*it);
    }
    for (auto& n : nodes_) {
      if (n.param) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node<T>> nodes_;
};

namespace detail {

template <typename T>
bool any_needs_grad(std::initializer_list<const Var<T>*> vars) {
  for (const Var<T>* v : vars)
    if ((*v).node()->needs_grad) return true;
  return false;
}

template <typename T>
Tape<T>* same_tape(std::initializer_list<const Var<T>*> vars, const char* what) {
  Tape<T>* t = nullptr;
  for (const Var<T>* v : vars) {
    if (!v->valid()) throw ContractError(std::string(what) + ": invalid operand");
    if (!t) t = v->tape();
    if (v->tape() != t) throw ContractError(std::string(what) + ": operands on different tapes");
  }
  return t;
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b[k,n]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>* tape = detail::same_tape<T>({&a, &b}, "matmul");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.extent(1) != bv.extent(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                         shape_str(bv.shape()));
  const std::size_t m = av.extent(0), k = av.extent(1), n = bv.extent(1);
  Tensor<T> out({m, n});
  detail::gemm_acc(av.data(), bv.data(), out.data(), m, k, n);
  const bool ng = detail::any_needs_grad<T>({&a, &b});
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  return tape->make(std::move(out), ng, [an, bn, m, k, n](Node<T>& self) {
    if (an->needs_grad)
      detail::gemm_nt_acc(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k);
    if (bn->needs_grad)
      detail::gemm_tn_acc(an->value.data(), self.grad.data(), bn->grad.data(), m, k, n);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Tape<T>* tape = detail::same_tape<T>({&a}, "transpose");
  const Tensor<T>& av = a.value();
  if (av.rank() != 2) throw DimensionError("transpose: expected rank-2, got " + shape_str(av.shape()));
  const std::size_t r = av.extent(0), c = av.extent(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
  Node<T>* an = a.node();
  return tape->make(std::move(out), an->needs_grad, [an, r, c](Node<T>& self) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) an->grad(i, j) += self.grad(j, i);
  });
}

// Row-wise softmax with max subtraction; rows sum to 1.
template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  Tape<T>* tape = detail::same_tape<T>({&x}, "softmax_rows");
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("softmax_rows: expected rank-2, got " + shape_str(xv.shape()));
  const std::size_t r = xv.extent(0), c = xv.extent(1);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < r; ++i) {
    T mx = xv(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xv(i, j));
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T e = std::exp(xv(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= inv;
  }
  Node<T>* xn = x.node();
  return tape->make(std::move(out), xn->needs_grad, [xn, r, c](Node<T>& self) {
    // dx = y * (dy - <dy, y>) row-wise
    for (std::size_t i = 0; i < r; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j < c; ++j) dot += self.grad(i, j) * self.value(i, j);
      for (std::size_t j = 0; j < c; ++j)
        xn->grad(i, j) += self.value(i, j) * (self.grad(i, j) - dot);
    }
  });
}

// Row-wise layer normalization: (x - mean) / sqrt(var + eps) * gamma + beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  Tape<T>* tape = detail::same_tape<T>({&x, &gamma, &beta}, "layer_norm");
  if (eps <= T(0)) throw ContractError("layer_norm: eps must be positive");
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("layer_norm: expected rank-2, got " + shape_str(xv.shape()));
  const std::size_t r = xv.extent(0), c = xv.extent(1);
  if (gamma.value().size() != c || beta.value().size() != c)
    throw DimensionError("layer_norm: gamma/beta length must equal column count " + std::to_string(c));
  Tensor<T> out(xv.shape());
  Tensor<T> xhat(xv.shape());
  std::vector<T> invstd(r);
  const T* g = gamma.value().data();
  const T* b = beta.value().data();
  for (std::size_t i = 0; i < r; ++i) {
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += xv(i, j);
    mean /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T d = xv(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T istd = T(1) / std::sqrt(var + eps);
    invstd[i] = istd;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xv(i, j) - mean) * istd;
      xhat(i, j) = h;
      out(i, j) = h * g[j] + b[j];
    }
  }
  const bool ng = detail::any_needs_grad<T>({&x, &gamma, &beta});
  Node<T>* xn = x.node();
  Node<T>* gn = gamma.node();
  Node<T>* bn = beta.node();
  return tape->make(std::move(out), ng,
                    [xn, gn, bn, xhat = std::move(xhat), invstd = std::move(invstd), r, c](Node<T>& self) {
    for (std::size_t i = 0; i < r; ++i) {
      T sum_dh = T(0), sum_dh_h = T(0);
      for (std::size_t j = 0; j < c; ++j) {
        const T dh = self.grad(i, j) * gn->value[j];
        sum_dh += dh;
        sum_dh_h += dh * xhat(i, j);
      }
      if (xn->needs_grad) {
        const T scale = invstd[i] / static_cast<T>(c);
        for (std::size_t j = 0; j < c; ++j) {
          const T dh = self.grad(i, j) * gn->value[j];
          xn->grad(i, j) += scale * (static_cast<T>(c) * dh - sum_dh - xhat(i, j) * sum_dh_h);
        }
      }
      if (gn->needs_grad)
        for (std::size_t j = 0; j < c; ++j) gn->grad[j] += self.grad(i, j) * xhat(i, j);
      if (bn->needs_grad)
        for (std::size_t j = 0; j < c; ++j) bn->grad[j] += self.grad(i, j);
    }
  });
}

// Cross-correlation of x[c_in,h,w] with kernel[c_out,c_in,kh,kw].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, std::size_t stride, std::size_t padding) {
  Tape<T>* tape = detail::same_tape<T>({&x, &kernel}, "conv2d");
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  if (xv.rank() != 3 || kv.rank() != 4)
    throw DimensionError("conv2d: expected input rank 3 and kernel rank 4, got " +
                         shape_str(xv.shape()) + " and " + shape_str(kv.shape()));
  const std::size_t cin = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
  const std::size_t cout = kv.extent(0), kh = kv.extent(2), kw = kv.extent(3);
  if (kv.extent(1) != cin)
    throw DimensionError("conv2d: kernel expects " + std::to_string(kv.extent(1)) +
                         " input channels, input has " + std::to_string(cin));
  if (kh % 2 == 0 || kw % 2 == 0) throw ContractError("conv2d: kernel extents must be odd");
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  const std::size_t hp = h + 2 * padding, wp = w + 2 * padding;
  if (hp < kh || wp < kw)
    throw DimensionError("conv2d: kernel " + shape_str(kv.shape()) +
                         " does not fit the padded input " + shape_str(xv.shape()) + " (padding " +
                         std::to_string(padding) + ")");
  // Floor output extents: trailing rows/cols that no full window covers are dropped.
  const std::size_t oh = (hp - kh) / stride + 1, ow = (wp - kw) / stride + 1;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  Tensor<T> out({cout, oh, ow});
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T kval = kv(co, ci, ky, kx);
          if (kval == T(0)) continue;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            const T* xrow = &xv(ci, static_cast<std::size_t>(iy), 0);
            T* orow = &out(co, oy, 0);
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              orow[ox] += kval * xrow[ix];
            }
          }
        }
      }
    }
  }
  const bool ng = detail::any_needs_grad<T>({&x, &kernel});
  Node<T>* xn = x.node();
  Node<T>* kn = kernel.node();
  return tape->make(std::move(out), ng,
                    [xn, kn, cin, h, w, cout, kh, kw, oh, ow, stride, pad](Node<T>& self) {
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T kval = kn->value(co, ci, ky, kx);
            T kacc = T(0);
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              const T* grow = &self.grad(co, oy, 0);
              const T* xrow = &xn->value(ci, static_cast<std::size_t>(iy), 0);
              T* xgrow = xn->needs_grad ? &xn->grad(ci, static_cast<std::size_t>(iy), 0) : nullptr;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                const T g = grow[ox];
                kacc += g * xrow[ix];
                if (xgrow) xgrow[ix] += g * kval;
              }
            }
            if (kn->needs_grad) kn->grad(co, ci, ky, kx) += kacc;
          }
        }
      }
    }
  });
}

// Bilinear resampling with half-pixel centers (align-corners = false).
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  Tape<T>* tape = detail::same_tape<T>({&x}, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw ContractError("bilinear_resize: output extents must be >= 1");
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3)
    throw DimensionError("bilinear_resize: expected rank-3, got " + shape_str(xv.shape()));
  const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  // Per output coordinate: source neighbours and interpolation weights.
  struct Sample {
    std::size_t lo, hi;
    T w_hi;
  };
  std::vector<Sample> ys(out_h), xs(out_w);
  auto make_samples = [](std::vector<Sample>& v, std::size_t n_out, std::size_t n_in, double scale) {
    for (std::size_t i = 0; i < n_out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      const double max_src = static_cast<double>(n_in - 1);
      if (src > max_src) src = max_src;
      const std::size_t lo = static_cast<std::size_t>(src);
      const std::size_t hi = std::min(lo + 1, n_in - 1);
      v[i] = {lo, hi, static_cast<T>(src - static_cast<double>(lo))};
    }
  };
  make_samples(ys, out_h, h, sy);
  make_samples(xs, out_w, w, sx);
  Tensor<T> out({c, out_h, out_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto [ylo, yhi, wy] = ys[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto [xlo, xhi, wx] = xs[ox];
        const T v00 = xv(ch, ylo, xlo), v01 = xv(ch, ylo, xhi);
        const T v10 = xv(ch, yhi, xlo), v11 = xv(ch, yhi, xhi);
        const T top = v00 + wx * (v01 - v00);
        const T bot = v10 + wx * (v11 - v10);
        out(ch, oy, ox) = top + wy * (bot - top);
      }
    }
  }
  Node<T>* xn = x.node();
  return tape->make(std::move(out), xn->needs_grad,
                    [xn, ys = std::move(ys), xs = std::move(xs), c, out_h, out_w](Node<T>& self) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const auto [ylo, yhi, wy] = ys[oy];
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const auto [xlo, xhi, wx] = xs[ox];
          const T g = self.grad(ch, oy, ox);
          xn->grad(ch, ylo, xlo) += g * (T(1) - wy) * (T(1) - wx);
          xn->grad(ch, ylo, xhi) += g * (T(1) - wy) * wx;
          xn->grad(ch, yhi, xlo) += g * wy * (T(1) - wx);
          xn->grad(ch, yhi, xhi) += g * wy * wx;
        }
      }
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>* tape = detail::same_tape<T>({&a, &b}, "add");
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const bool ng = detail::any_needs_grad<T>({&a, &b});
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  return tape->make(std::move(out), ng, [an, bn](Node<T>& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    if (bn->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>* tape = detail::same_tape<T>({&a, &b}, "mul");
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const bool ng = detail::any_needs_grad<T>({&a, &b});
  Node<T>* an = a.node();
  Node<T>* bn = b.node();
  return tape->make(std::move(out), ng, [an, bn](Node<T>& self) {
    if (an->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
    if (bn->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tape<T>* tape = detail::same_tape<T>({&a}, "relu");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > T(0) ? a.value()[i] : T(0);
  Node<T>* an = a.node();
  return tape->make(std::move(out), an->needs_grad, [an](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (an->value[i] > T(0)) an->grad[i] += self.grad[i];
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tape<T>* tape = detail::same_tape<T>({&a}, "scale");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * s;
  Node<T>* an = a.node();
  return tape->make(std::move(out), an->needs_grad, [an, s](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
  });
}

// x[c,h,w] + b[c] broadcast over the spatial axes.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
  Tape<T>* tape = detail::same_tape<T>({&x, &bias}, "add_channel_bias");
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3 || bias.value().size() != xv.extent(0))
    throw DimensionError("add_channel_bias: input " + shape_str(xv.shape()) + " vs bias " +
                         shape_str(bias.shape()));
  const std::size_t c = xv.extent(0), hw = xv.extent(1) * xv.extent(2);
  Tensor<T> out(xv.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const T b = bias.value()[ch];
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] + b;
  }
  const bool ng = detail::any_needs_grad<T>({&x, &bias});
  Node<T>* xn = x.node();
  Node<T>* bn = bias.node();
  return tape->make(std::move(out), ng, [xn, bn, c, hw](Node<T>& self) {
    if (xn->needs_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    if (bn->needs_grad) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        T acc = T(0);
        for (std::size_t i = 0; i < hw; ++i) acc += self.grad[ch * hw + i];
        bn->grad[ch] += acc;
      }
    }
  });
}

// Softmax over the channel axis of x[c,h,w], independently per pixel.
template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  Tape<T>* tape = detail::same_tape<T>({&x}, "softmax_channels");
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3)
    throw DimensionError("softmax_channels: expected rank-3, got " + shape_str(xv.shape()));
  const std::size_t c = xv.extent(0), hw = xv.extent(1) * xv.extent(2);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < hw; ++i) {
    T mx = xv[i];
    for (std::size_t ch = 1; ch < c; ++ch) mx = std::max(mx, xv[ch * hw + i]);
    T sum = T(0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T e = std::exp(xv[ch * hw + i] - mx);
      out[ch * hw + i] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + i] *= inv;
  }
  Node<T>* xn = x.node();
  return tape->make(std::move(out), xn->needs_grad, [xn, c, hw](Node<T>& self) {
    for (std::size_t i = 0; i < hw; ++i) {
      T dot = T(0);
      for (std::size_t ch = 0; ch < c; ++ch) dot += self.grad[ch * hw + i] * self.value[ch * hw + i];
      for (std::size_t ch = 0; ch < c; ++ch)
        xn->grad[ch * hw + i] += self.value[ch * hw + i] * (self.grad[ch * hw + i] - dot);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Tape<T>* tape = detail::same_tape<T>({&a}, "sum");
  T acc = T(0);
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i];
  Tensor<T> out({1});
  out[0] = acc;
  Node<T>* an = a.node();
  return tape->make(std::move(out), an->needs_grad, [an](Node<T>& self) {
    const T g = self.grad[0];
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tape<T>* tape = detail::same_tape<T>({&a}, "reshape");
  Tensor<T> out = a.value().reshaped(std::move(shape));
  Node<T>* an = a.node();
  return tape->make(std::move(out), an->needs_grad, [an](Node<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

// Row-concatenation of rank-2 tensors sharing a column count.
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty input");
  std::vector<const Var<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  Tape<T>* tape = parts[0].tape();
  for (const auto& p : parts)
    if (p.tape() != tape) throw ContractError("concat_rows: operands on different tapes");
  const std::size_t cols = parts[0].value().extent(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().extent(1) != cols)
      throw DimensionError("concat_rows: all parts must be rank-2 with " + std::to_string(cols) +
                           " columns, got " + shape_str(p.value().shape()));
    rows += p.value().extent(0);
  }
  Tensor<T> out({rows, cols});
  std::size_t offset = 0;
  bool ng = false;
  std::vector<std::pair<Node<T>*, std::size_t>> layout;
  for (const auto& p : parts) {
    const Tensor<T>& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    layout.emplace_back(p.node(), offset);
    offset += v.size();
    ng = ng || p.node()->needs_grad;
  }
  return tape->make(std::move(out), ng, [layout = std::move(layout)](Node<T>& self) {
    for (const auto& [n, off] : layout) {
      if (!n->needs_grad) continue;
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += self.grad[off + i];
    }
  });
}

// Mean over pixels of -log(p_true), probabilities clamped to [1e-7, 1].
// probs is [2,h,w] (channel 1 = foreground); truth is a binary [h,w] mask.
template <typename T>
Var<T> cross_entropy_loss(const Var<T>& probs, const Tensor<T>& truth) {
  Tape<T>* tape = detail::same_tape<T>({&probs}, "cross_entropy_loss");
  const Tensor<T>& pv = probs.value();
  if (pv.rank() != 3 || pv.extent(0) != 2)
    throw DimensionError("cross_entropy_loss: expected probs [2,h,w], got " + shape_str(pv.shape()));
  const std::size_t h = pv.extent(1), w = pv.extent(2), hw = h * w;
  if (truth.size() != hw)
    throw DimensionError("cross_entropy_loss: truth " + shape_str(truth.shape()) +
                         " does not cover " + std::to_string(hw) + " pixels");
  constexpr T kClampLo = T(1e-7);
  Tensor<T> out({1});
  T acc = T(0);
  for (std::size_t i = 0; i < hw; ++i) {
    const std::size_t ch = truth[i] > T(0.5) ? 1 : 0;
    const T p = std::min(std::max(pv[ch * hw + i], kClampLo), T(1));
    acc -= std::log(p);
  }
  out[0] = acc / static_cast<T>(hw);
  Node<T>* pn = probs.node();
  return tape->make(std::move(out), pn->needs_grad, [pn, truth, hw](Node<T>& self) {
    const T lo = T(1e-7);
    const T g = self.grad[0] / static_cast<T>(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t ch = truth[i] > T(0.5) ? 1 : 0;
      const T p = pn->value[ch * hw + i];
      if (p > lo && p < T(1)) pn->grad[ch * hw + i] -= g / p;
    }
  });
}

}  // namespace sitvos
