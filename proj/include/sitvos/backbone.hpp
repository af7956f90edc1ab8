#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sitvos/autodiff.hpp"
#include "sitvos/rng.hpp"

namespace sitvos {

// Counts extract() calls; the feature-reuse invariant asserts one per frame
// over a whole-video inference.
inline std::atomic<std::uint64_t>& backbone_invocations() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

struct BackboneConfig {
  // Channel counts of the stride-4 / stride-8 / stride-16 stage outputs.
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::size_t projection_channels = 32;
  // Mask encoder trunk at half the widths (its input is the 1-channel mask).
  std::vector<std::size_t> mask_encoder_channels{8, 16, 32};
};

template <typename T>
struct ConvLayer {
  Parameter<T> kernel;  // [c_out, c_in, kh, kw]
  Parameter<T> bias;    // [c_out]

  static ConvLayer init(std::size_t c_out, std::size_t c_in, std::size_t k, Rng& rng,
                        const std::string& prefix) {
    const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(c_in * k * k)));
    ConvLayer l;
    l.kernel = Parameter<T>(prefix + ".kernel", Tensor<T>::randn({c_out, c_in, k, k}, rng, stddev));
    l.bias = Parameter<T>(prefix + ".bias", Tensor<T>::zeros({c_out}));
    return l;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&kernel);
    out.push_back(&bias);
  }
};

template <typename T>
Var<T> conv_layer(Tape<T>& tape, const Var<T>& x, ConvLayer<T>& p, std::size_t stride,
                  std::size_t padding) {
  return add_channel_bias(conv2d(x, tape.leaf(p.kernel), stride, padding), tape.leaf(p.bias));
}

// One downsampling stage: conv3x3/2 -> relu -> conv3x3/1 -> relu.
template <typename T>
struct StageParams {
  ConvLayer<T> down, same;

  static StageParams init(std::size_t c_out, std::size_t c_in, Rng& rng, const std::string& prefix) {
    return StageParams{ConvLayer<T>::init(c_out, c_in, 3, rng, prefix + ".down"),
                       ConvLayer<T>::init(c_out, c_out, 3, rng, prefix + ".same")};
  }

  void collect(std::vector<Parameter<T>*>& out) {
    down.collect(out);
    same.collect(out);
  }
};

template <typename T>
Var<T> stage_forward(Tape<T>& tape, const Var<T>& x, StageParams<T>& p) {
  return relu(conv_layer(tape, relu(conv_layer(tape, x, p.down, 2, 1)), p.same, 1, 1));
}

// Stride-2 stem plus three stride-2 stages: outputs at strides 4, 8, 16.
// Used for both the frame backbone (3-channel input) and the mask encoder
// (1-channel input, halved widths).
template <typename T>
struct TrunkParams {
  ConvLayer<T> stem;
  StageParams<T> s1, s2, s3;

  static TrunkParams init(std::size_t in_channels, const std::vector<std::size_t>& stage_channels,
                          Rng& rng, const std::string& prefix) {
    if (stage_channels.size() != 3)
      throw ContractError("trunk: exactly 3 stage channel counts required");
    TrunkParams p;
    p.stem = ConvLayer<T>::init(stage_channels[0], in_channels, 3, rng, prefix + ".stem");
    p.s1 = StageParams<T>::init(stage_channels[0], stage_channels[0], rng, prefix + ".s1");
    p.s2 = StageParams<T>::init(stage_channels[1], stage_channels[0], rng, prefix + ".s2");
    p.s3 = StageParams<T>::init(stage_channels[2], stage_channels[1], rng, prefix + ".s3");
    return p;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    stem.collect(out);
    s1.collect(out);
    s2.collect(out);
    s3.collect(out);
  }
};

template <typename T>
struct TrunkOut {
  Var<T> f4, f8, f16;
};

template <typename T>
TrunkOut<T> trunk_forward(Tape<T>& tape, const Var<T>& x, TrunkParams<T>& p) {
  const auto& s = x.shape();
  if (s.size() != 3 || s[1] % 16 != 0 || s[2] % 16 != 0)
    throw DimensionError("trunk: input dims must be divisible by 16, got " + shape_str(s));
  Var<T> stem = relu(conv_layer(tape, x, p.stem, 2, 1));
  Var<T> f4 = stage_forward(tape, stem, p.s1);
  Var<T> f8 = stage_forward(tape, f4, p.s2);
  Var<T> f16 = stage_forward(tape, f8, p.s3);
  return {f4, f8, f16};
}

// 1x1 projection to C channels, then flatten to HW rows (row-major spatial).
template <typename T>
Var<T> project(Tape<T>& tape, const Var<T>& f16, ConvLayer<T>& proj) {
  Var<T> p = conv_layer(tape, f16, proj, 1, 0);
  const std::size_t c = p.shape()[0], hw = p.shape()[1] * p.shape()[2];
  return transpose(reshape(p, {c, hw}));
}

template <typename T>
struct BackboneParams {
  TrunkParams<T> trunk;
  ConvLayer<T> projection;  // c16 -> C, 1x1

  static BackboneParams init(const BackboneConfig& cfg, Rng& rng, const std::string& prefix) {
    BackboneParams p;
    p.trunk = TrunkParams<T>::init(3, cfg.stage_channels, rng, prefix + ".trunk");
    p.projection =
        ConvLayer<T>::init(cfg.projection_channels, cfg.stage_channels[2], 1, rng, prefix + ".proj");
    return p;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    trunk.collect(out);
    projection.collect(out);
  }
};

template <typename T>
struct MaskEncoderParams {
  TrunkParams<T> trunk;
  ConvLayer<T> projection;

  static MaskEncoderParams init(const BackboneConfig& cfg, Rng& rng, const std::string& prefix) {
    MaskEncoderParams p;
    p.trunk = TrunkParams<T>::init(1, cfg.mask_encoder_channels, rng, prefix + ".trunk");
    p.projection = ConvLayer<T>::init(cfg.projection_channels, cfg.mask_encoder_channels[2], 1, rng,
                                      prefix + ".proj");
    return p;
  }

  void collect(std::vector<Parameter<T>*>& out) {
    trunk.collect(out);
    projection.collect(out);
  }
};

// One frame's multi-scale features on the active tape.
template <typename T>
struct FrameFeatureVars {
  Var<T> f4, f8, f16;
  Var<T> embedding;  // [HW, C]
};

// Cached plain-tensor copy of the above (what the memory bank stores).
template <typename T>
struct FrameFeatures {
  Tensor<T> f4, f8, f16;
  Tensor<T> embedding;
};

template <typename T>
FrameFeatures<T> detach(const FrameFeatureVars<T>& v) {
  return FrameFeatures<T>{v.f4.value(), v.f8.value(), v.f16.value(), v.embedding.value()};
}

// Shared-weight feature extraction; the same parameter storage backs both the
// memory and query roles.
template <typename T>
FrameFeatureVars<T> extract(Tape<T>& tape, const Var<T>& frame, BackboneParams<T>& params) {
  if (frame.shape().size() != 3 || frame.shape()[0] != 3)
    throw DimensionError("extract: expected [3,h,w] frame, got " + shape_str(frame.shape()));
  backbone_invocations().fetch_add(1, std::memory_order_relaxed);
  TrunkOut<T> t = trunk_forward(tape, frame, params.trunk);
  Var<T> emb = project(tape, t.f16, params.projection);
  return {t.f4, t.f8, t.f16, emb};
}

// Mask to [HW, C] embedding; values must lie in [0, 1].
template <typename T>
Var<T> encode_mask(Tape<T>& tape, const Var<T>& mask, MaskEncoderParams<T>& params) {
  if (mask.shape().size() != 3 || mask.shape()[0] != 1)
    throw DimensionError("encode_mask: expected [1,h,w] mask, got " + shape_str(mask.shape()));
  for (std::size_t i = 0; i < mask.value().size(); ++i)
    if (mask.value()[i] < T(0) || mask.value()[i] > T(1))
      throw ContractError("encode_mask: mask values must lie in [0,1]");
  TrunkOut<T> t = trunk_forward(tape, mask, params.trunk);
  return project(tape, t.f16, params.projection);
}

// ---------------------------------------------------------------------------
// Memory bank
// ---------------------------------------------------------------------------

template <typename T>
struct MemoryEntry {
  int frame_index;
  std::shared_ptr<const FrameFeatures<T>> features;  // shared across objects
  Tensor<T> mask_embedding;                          // [HW, C], per object
};

template <typename T>
class MemoryBank {
 public:
  void append(int frame_index, std::shared_ptr<const FrameFeatures<T>> features,
              Tensor<T> mask_embedding) {
    if (!entries_.empty() && frame_index <= entries_.back().frame_index)
      throw ContractError("memory bank: frame indices must be strictly increasing");
    require_same_shape(features->embedding.shape(), mask_embedding.shape(),
                       "memory bank entry embedding vs mask embedding");
    entries_.push_back({frame_index, std::move(features), std::move(mask_embedding)});
  }

  const MemoryEntry<T>& find(int frame_index) const {
    for (const auto& e : entries_)
      if (e.frame_index == frame_index) return e;
    throw LookupError("memory bank: no entry for frame " + std::to_string(frame_index));
  }

  const std::vector<MemoryEntry<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<MemoryEntry<T>> entries_;
};

// Row-concatenation of the selected frames' embeddings in ascending frame
// order: M_ori and M_E, both [T*HW, C].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> assemble_memory(const MemoryBank<T>& bank,
                                                std::vector<int> selected) {
  if (selected.empty()) throw ContractError("assemble_memory: empty selection");
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  const std::size_t hw = bank.find(selected[0]).mask_embedding.extent(0);
  const std::size_t c = bank.find(selected[0]).mask_embedding.extent(1);
  Tensor<T> m_ori({selected.size() * hw, c});
  Tensor<T> m_e({selected.size() * hw, c});
  std::size_t offset = 0;
  for (int idx : selected) {
    const MemoryEntry<T>& e = bank.find(idx);
    std::copy(e.features->embedding.data(), e.features->embedding.data() + hw * c,
              m_ori.data() + offset);
    std::copy(e.mask_embedding.data(), e.mask_embedding.data() + hw * c, m_e.data() + offset);
    offset += hw * c;
  }
  return {std::move(m_ori), std::move(m_e)};
}

}  // namespace sitvos
