#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sitvos/autodiff.hpp"
#include "sitvos/rng.hpp"

namespace sitvos {

// Optional sink for attention weight matrices (set while --debug-attention is
// active). Thread-local so concurrent per-object passes do not interleave.
template <typename T>
struct AttentionDebug {
  std::vector<std::pair<std::string, Tensor<T>>> maps;
};

template <typename T>
inline thread_local AttentionDebug<T>* g_attention_debug = nullptr;

template <typename T>
inline thread_local const char* g_attention_label = "";

// Parameters of one single-head attention block: biasless projections plus the
// layer-norm affine applied after the residual add.
template <typename T>
struct AttentionParams {
  Parameter<T> w_q, w_k, w_v, ln_gamma, ln_beta;

  static AttentionParams init(std::size_t channels, std::size_t d_k, Rng& rng,
                              const std::string& prefix) {
    // d_v = channels so the residual add stays well-formed.
    const T std_qk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(channels)));
    AttentionParams p;
    p.w_q = Parameter<T>(prefix + ".w_q", Tensor<T>::randn({channels, d_k}, rng, std_qk));
    p.w_k = Parameter<T>(prefix + ".w_k", Tensor<T>::randn({channels, d_k}, rng, std_qk));
    p.w_v = Parameter<T>(prefix + ".w_v", Tensor<T>::randn({channels, channels}, rng, std_qk));
    p.ln_gamma = Parameter<T>(prefix + ".ln_gamma", Tensor<T>::ones({channels}));
    p.ln_beta = Parameter<T>(prefix + ".ln_beta", Tensor<T>::zeros({channels}));
    return p;
  }

  std::size_t channels() const { return w_q.value.extent(0); }
  std::size_t d_k() const { return w_q.value.extent(1); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&w_q);
    out.push_back(&w_k);
    out.push_back(&w_v);
    out.push_back(&ln_gamma);
    out.push_back(&ln_beta);
  }
};

// Per-pass tape bindings of an AttentionParams set.
template <typename T>
struct AttentionVars {
  Var<T> w_q, w_k, w_v, ln_gamma, ln_beta;
  T ln_eps;
};

template <typename T>
AttentionVars<T> bind(Tape<T>& tape, AttentionParams<T>& p, T ln_eps = T(1e-5)) {
  return AttentionVars<T>{tape.leaf(p.w_q), tape.leaf(p.w_k), tape.leaf(p.w_v),
                          tape.leaf(p.ln_gamma), tape.leaf(p.ln_beta), ln_eps};
}

// softmax(q k^T / sqrt(d_k)) v
template <typename T>
Var<T> scaled_dot_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  if (q.shape().size() != 2 || k.shape().size() != 2 || v.shape().size() != 2 ||
      q.shape()[1] != k.shape()[1] || k.shape()[0] != v.shape()[0])
    throw DimensionError("scaled_dot_attention: incompatible q " + shape_str(q.shape()) + ", k " +
                         shape_str(k.shape()) + ", v " + shape_str(v.shape()));
  const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.shape()[1])));
  Var<T> logits = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  Var<T> weights = softmax_rows(logits);
  if (g_attention_debug<T>)
    g_attention_debug<T>->maps.emplace_back(g_attention_label<T>, weights.value());
  return matmul(weights, v);
}

// LN(Attention(x Wq, x Wk, x Wv) + x)
template <typename T>
Var<T> sa_block(const Var<T>& x, const AttentionVars<T>& p) {
  if (x.shape().size() != 2 || x.shape()[1] != p.w_q.shape()[0])
    throw DimensionError("sa_block: input " + shape_str(x.shape()) + " does not match channel count " +
                         std::to_string(p.w_q.shape()[0]));
  Var<T> attn = scaled_dot_attention(matmul(x, p.w_q), matmul(x, p.w_k), matmul(x, p.w_v));
  return layer_norm(add(attn, x), p.ln_gamma, p.ln_beta, p.ln_eps);
}

// LN(Attention(query Wq, key Wk, value Wv) + query); key and value sources may
// differ (the mask-gated value path needs that split).
template <typename T>
Var<T> ca_block(const Var<T>& query_src, const Var<T>& key_src, const Var<T>& value_src,
                const AttentionVars<T>& p) {
  const std::size_t c = p.w_q.shape()[0];
  if (query_src.shape()[1] != c || key_src.shape()[1] != c || value_src.shape()[1] != c)
    throw DimensionError("ca_block: all inputs must have " + std::to_string(c) + " columns");
  if (key_src.shape()[0] != value_src.shape()[0])
    throw DimensionError("ca_block: key rows " + std::to_string(key_src.shape()[0]) +
                         " != value rows " + std::to_string(value_src.shape()[0]));
  Var<T> attn = scaled_dot_attention(matmul(query_src, p.w_q), matmul(key_src, p.w_k),
                                     matmul(value_src, p.w_v));
  return layer_norm(add(attn, query_src), p.ln_gamma, p.ln_beta, p.ln_eps);
}

}  // namespace sitvos
