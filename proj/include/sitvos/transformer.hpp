#pragma once

#include <string>
#include <vector>

#include "sitvos/attention.hpp"

namespace sitvos {

// Five independent single-head blocks: encoder SA, decoder SA, the two FIM
// cross-attentions, and the final decoder CA.
template <typename T>
struct InteractiveTransformerParams {
  AttentionParams<T> enc_sa, dec_sa, fim_mem_ca, fim_query_ca, dec_ca;

  static InteractiveTransformerParams init(std::size_t channels, std::size_t d_k, Rng& rng,
                                           const std::string& prefix) {
    InteractiveTransformerParams p;
    p.enc_sa = AttentionParams<T>::init(channels, d_k, rng, prefix + ".enc_sa");
    p.dec_sa = AttentionParams<T>::init(channels, d_k, rng, prefix + ".dec_sa");
    p.fim_mem_ca = AttentionParams<T>::init(channels, d_k, rng, prefix + ".fim_mem_ca");
    p.fim_query_ca = AttentionParams<T>::init(channels, d_k, rng, prefix + ".fim_query_ca");
    p.dec_ca = AttentionParams<T>::init(channels, d_k, rng, prefix + ".dec_ca");
    return p;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    enc_sa.collect(out);
    dec_sa.collect(out);
    fim_mem_ca.collect(out);
    fim_query_ca.collect(out);
    dec_ca.collect(out);
  }
};

// Every intermediate embedding of one pass. Memory-side tensors have T*HW
// rows, query-side tensors HW rows, all share C columns.
template <typename T>
struct TransformerState {
  Var<T> m_ori, q_ori, m_sa, q_sa, m_e, m_x, m_out, q_out, t_out;
};

namespace detail {

template <typename T>
struct ScopedAttentionLabel {
  explicit ScopedAttentionLabel(const char* label) { g_attention_label<T> = label; }
  ~ScopedAttentionLabel() { g_attention_label<T> = ""; }
};

}  // namespace detail

// Encoder: SA over the stacked past-frame embeddings.
template <typename T>
Var<T> encode(Tape<T>& tape, const Var<T>& m_ori, InteractiveTransformerParams<T>& params) {
  detail::ScopedAttentionLabel<T> label("enc_sa");
  return sa_block(m_ori, bind(tape, params.enc_sa));
}

// Decoder entry: SA over the current frame's embedding.
template <typename T>
Var<T> decoder_self(Tape<T>& tape, const Var<T>& q_ori, InteractiveTransformerParams<T>& params) {
  detail::ScopedAttentionLabel<T> label("dec_sa");
  return sa_block(q_ori, bind(tape, params.dec_sa));
}

template <typename T>
struct FimOut {
  Var<T> m_x, m_out, q_out;
};

// Feature interaction: the memory branch attends into Q_SA; the query branch
// attends into M_SA keyed values gated by the mask embedding (M_x = M_E * M_ori).
template <typename T>
FimOut<T> fim(Tape<T>& tape, const Var<T>& m_sa, const Var<T>& q_sa, const Var<T>& m_ori,
              const Var<T>& m_e, InteractiveTransformerParams<T>& params) {
  Var<T> m_x = mul(m_e, m_ori);
  Var<T> m_out, q_out;
  {
    detail::ScopedAttentionLabel<T> label("fim_mem_ca");
    m_out = ca_block(m_sa, q_sa, q_sa, bind(tape, params.fim_mem_ca));
  }
  {
    detail::ScopedAttentionLabel<T> label("fim_query_ca");
    q_out = ca_block(q_sa, m_sa, m_x, bind(tape, params.fim_query_ca));
  }
  return {m_x, m_out, q_out};
}

// Final cross-attention: Q_out queries M_out as both key and value.
template <typename T>
Var<T> decode_cross(Tape<T>& tape, const Var<T>& q_out, const Var<T>& m_out,
                    InteractiveTransformerParams<T>& params) {
  detail::ScopedAttentionLabel<T> label("dec_ca");
  return ca_block(q_out, m_out, m_out, bind(tape, params.dec_ca));
}

// When true, fim() is skipped and m_out/q_out alias m_sa/q_sa (ablation path).
template <typename T>
TransformerState<T> transformer_forward(Tape<T>& tape, const Var<T>& m_ori, const Var<T>& m_e,
                                        const Var<T>& q_ori,
                                        InteractiveTransformerParams<T>& params,
                                        bool bypass_fim = false) {
  if (m_ori.shape()[1] != q_ori.shape()[1])
    throw DimensionError("transformer: memory and query channel counts differ");
  require_same_shape(m_ori.shape(), m_e.shape(), "transformer m_ori vs m_e");
  if (m_ori.shape()[0] % q_ori.shape()[0] != 0)
    throw DimensionError("transformer: memory rows must be a multiple of query rows");
  TransformerState<T> st;
  st.m_ori = m_ori;
  st.m_e = m_e;
  st.q_ori = q_ori;
  st.m_sa = encode(tape, m_ori, params);
  st.q_sa = decoder_self(tape, q_ori, params);
  if (bypass_fim) {
    st.m_x = mul(m_e, m_ori);
    st.m_out = st.m_sa;
    st.q_out = st.q_sa;
  } else {
    FimOut<T> f = fim(tape, st.m_sa, st.q_sa, m_ori, m_e, params);
    st.m_x = f.m_x;
    st.m_out = f.m_out;
    st.q_out = f.q_out;
  }
  st.t_out = decode_cross(tape, st.q_out, st.m_out, params);
  return st;
}

}  // namespace sitvos
