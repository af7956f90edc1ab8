#pragma once

#include <string>
#include <vector>

#include "sitvos/backbone.hpp"

namespace sitvos {

// Two 3x3 convs with identity shortcut: x + conv_b(relu(conv_a(relu(x)))).
template <typename T>
struct ResBlockParams {
  ConvLayer<T> a, b;

  static ResBlockParams init(std::size_t channels, Rng& rng, const std::string& prefix) {
    return ResBlockParams{ConvLayer<T>::init(channels, channels, 3, rng, prefix + ".a"),
                          ConvLayer<T>::init(channels, channels, 3, rng, prefix + ".b")};
  }

  void collect(std::vector<Parameter<T>*>& out) {
    a.collect(out);
    b.collect(out);
  }
};

template <typename T>
Var<T> res_block(Tape<T>& tape, const Var<T>& x, ResBlockParams<T>& p) {
  return add(x, conv_layer(tape, relu(conv_layer(tape, relu(x), p.a, 1, 1)), p.b, 1, 1));
}

template <typename T>
struct RefinementParams {
  ConvLayer<T> skip_conv;          // skip channels -> working width, 3x3
  ResBlockParams<T> merge_residual;
  ResBlockParams<T> post_residual;

  static RefinementParams init(std::size_t width, std::size_t skip_channels, Rng& rng,
                               const std::string& prefix) {
    RefinementParams p;
    p.skip_conv = ConvLayer<T>::init(width, skip_channels, 3, rng, prefix + ".skip");
    p.merge_residual = ResBlockParams<T>::init(width, rng, prefix + ".merge");
    p.post_residual = ResBlockParams<T>::init(width, rng, prefix + ".post");
    return p;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    skip_conv.collect(out);
    merge_residual.collect(out);
    post_residual.collect(out);
  }
};

template <typename T>
struct DecoderParams {
  ConvLayer<T> entry_conv;           // C -> width, 3x3
  ResBlockParams<T> entry_residual;
  RefinementParams<T> refine8, refine4;
  ConvLayer<T> head;                 // width -> 2, 3x3

  static DecoderParams init(std::size_t transformer_channels, std::size_t width,
                            std::size_t skip8_channels, std::size_t skip4_channels, Rng& rng,
                            const std::string& prefix) {
    DecoderParams p;
    p.entry_conv = ConvLayer<T>::init(width, transformer_channels, 3, rng, prefix + ".entry");
    p.entry_residual = ResBlockParams<T>::init(width, rng, prefix + ".entry_res");
    p.refine8 = RefinementParams<T>::init(width, skip8_channels, rng, prefix + ".refine8");
    p.refine4 = RefinementParams<T>::init(width, skip4_channels, rng, prefix + ".refine4");
    p.head = ConvLayer<T>::init(2, width, 3, rng, prefix + ".head");
    return p;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    entry_conv.collect(out);
    entry_residual.collect(out);
    refine8.collect(out);
    refine4.collect(out);
    head.collect(out);
  }
};

// skip_conv(skip) + 2x-upsampled residual-processed x, then a residual block.
// Doubles the spatial extent.
template <typename T>
Var<T> refinement(Tape<T>& tape, const Var<T>& x, const Var<T>& skip, RefinementParams<T>& p) {
  const auto& xs = x.shape();
  const auto& ss = skip.shape();
  if (ss.size() != 3 || xs.size() != 3 || ss[1] != 2 * xs[1] || ss[2] != 2 * xs[2])
    throw DimensionError("refinement: skip " + shape_str(ss) + " must be 2x the spatial size of x " +
                         shape_str(xs));
  Var<T> main = bilinear_resize(res_block(tape, x, p.merge_residual), ss[1], ss[2]);
  Var<T> merged = add(conv_layer(tape, skip, p.skip_conv, 1, 1), main);
  return res_block(tape, merged, p.post_residual);
}

// t_out [HW, C] -> per-pixel class probabilities [2, h, w] at full frame
// resolution. f8 and f4 are the query frame's stride-8 / stride-4 features.
template <typename T>
Var<T> decode(Tape<T>& tape, const Var<T>& t_out, const Var<T>& f8, const Var<T>& f4,
              DecoderParams<T>& params) {
  const std::size_t c = t_out.shape()[1];
  const std::size_t h16 = f8.shape()[1] / 2, w16 = f8.shape()[2] / 2;
  if (t_out.shape()[0] != h16 * w16 || f4.shape()[1] != 4 * h16 || f4.shape()[2] != 4 * w16)
    throw DimensionError("decode: t_out rows " + std::to_string(t_out.shape()[0]) +
                         " do not match skip scales f8 " + shape_str(f8.shape()) + ", f4 " +
                         shape_str(f4.shape()));
  Var<T> x = reshape(transpose(t_out), {c, h16, w16});
  x = res_block(tape, conv_layer(tape, x, params.entry_conv, 1, 1), params.entry_residual);
  x = refinement(tape, x, f8, params.refine8);
  x = refinement(tape, x, f4, params.refine4);
  Var<T> logits = conv_layer(tape, x, params.head, 1, 1);
  Var<T> probs4 = softmax_channels(logits);
  return bilinear_resize(probs4, 16 * h16, 16 * w16);
}

}  // namespace sitvos
