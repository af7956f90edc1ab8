#pragma once

#include <map>
#include <memory>
#include <vector>

#include "sitvos/memory_manager.hpp"
#include "sitvos/model.hpp"

namespace sitvos {

// Integer object-id map (0 = background); tensors stay floating-point only.
struct LabelMap {
  std::size_t h = 0, w = 0;
  std::vector<int> ids;

  LabelMap() = default;
  LabelMap(std::size_t h_, std::size_t w_) : h(h_), w(w_), ids(h_ * w_, 0) {}
  int& at(std::size_t y, std::size_t x) { return ids[y * w + x]; }
  int at(std::size_t y, std::size_t x) const { return ids[y * w + x]; }
};

template <typename T>
struct VideoTask {
  std::vector<Tensor<T>> frames;      // each [3,h,w], dims divisible by 16
  std::map<int, Tensor<T>> first_masks;  // object id (>0) -> binary [1,h,w]
};

template <typename T>
void validate_task(const VideoTask<T>& task) {
  if (task.frames.empty()) throw ContractError("video task: no frames");
  if (task.first_masks.empty()) throw ContractError("video task: no first-frame objects");
  const Shape& fs = task.frames[0].shape();
  if (fs.size() != 3 || fs[0] != 3 || fs[1] % 16 != 0 || fs[2] % 16 != 0)
    throw DimensionError("video task: frames must be [3,h,w] with dims divisible by 16, got " +
                         shape_str(fs));
  for (const auto& f : task.frames) require_same_shape(f.shape(), fs, "video task frames");
  std::vector<char> taken(fs[1] * fs[2], 0);
  for (const auto& [id, mask] : task.first_masks) {
    if (id <= 0) throw ContractError("video task: object ids must be positive");
    if (mask.shape() != Shape{1, fs[1], fs[2]})
      throw DimensionError("video task: mask for object " + std::to_string(id) +
                           " has shape " + shape_str(mask.shape()));
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] != T(0) && mask[i] != T(1))
        throw ContractError("video task: first-frame masks must be binary");
      if (mask[i] == T(1)) {
        if (taken[i]) throw ContractError("video task: first-frame masks overlap");
        taken[i] = 1;
      }
    }
  }
}

struct PipelineOptions {
  MemoryPolicy policy = MemoryPolicy::first_and_previous();
  bool soft_aggregation = true;  // false: raw per-pixel probability argmax
  bool bypass_fim = false;       // ablation: skip the feature interaction module
  bool keep_probs = false;
};

template <typename T>
struct SegmentationResult {
  std::vector<LabelMap> label_maps;                      // one per frame
  std::vector<std::map<int, Tensor<T>>> per_object_probs;  // kept when requested
  std::uint64_t backbone_calls = 0;
  std::vector<std::size_t> memory_sizes;         // per segmented frame t = 1..F-1
  std::vector<std::vector<int>> memory_indices;  // ditto
};

// Soft aggregation: per pixel, odds o_i = c_i/(1-c_i) with c_i = clamp(p_i),
// background odds from the product of complements; label = argmax.
template <typename T>
LabelMap merge(const std::map<int, Tensor<T>>& probs, bool soft_aggregation = true) {
  if (probs.empty()) throw ContractError("merge: no probability maps");
  const Shape& s = probs.begin()->second.shape();
  if (s.size() != 3 || s[0] != 1)
    throw DimensionError("merge: expected [1,h,w] maps, got " + shape_str(s));
  for (const auto& [id, p] : probs) require_same_shape(p.shape(), s, "merge probability maps");
  const std::size_t h = s[1], w = s[2], hw = h * w;
  static constexpr double kEps = 1e-5;
  const auto odds = [](double p) {
    const double c = std::min(std::max(p, kEps), 1.0 - kEps);
    return c / (1.0 - c);
  };
  LabelMap out(h, w);
  for (std::size_t i = 0; i < hw; ++i) {
    double bg_complement = 1.0;
    for (const auto& [id, p] : probs) bg_complement *= 1.0 - static_cast<double>(p[i]);
    int best_id = 0;
    double best = soft_aggregation ? odds(bg_complement) : bg_complement;
    for (const auto& [id, p] : probs) {
      const double score =
          soft_aggregation ? odds(static_cast<double>(p[i])) : static_cast<double>(p[i]);
      if (score > best) {
        best = score;
        best_id = id;
      }
    }
    out.ids[i] = best_id;
  }
  return out;
}

template <typename T>
struct FrameResult {
  std::shared_ptr<const FrameFeatures<T>> features;  // current frame, shared by all objects
  std::map<int, Tensor<T>> probs;                    // object id -> foreground [1,h,w]
};

// One inference step: extract the frame's features ONCE, then run the
// transformer + decoder per object against that object's assembled memory.
template <typename T>
FrameResult<T> segment_frame(SitvosModel<T>& model, const Tensor<T>& frame,
                             const std::map<int, MemoryBank<T>>& banks,
                             const std::vector<int>& selected, bool bypass_fim = false) {
  if (selected.empty()) throw ContractError("segment_frame: empty memory selection");
  Tape<T> tape;
  FrameFeatureVars<T> feats = extract(tape, tape.constant(frame), model.backbone);
  const std::size_t h = frame.extent(1), w = frame.extent(2), hw = h * w;

  FrameResult<T> out;
  out.features = std::make_shared<const FrameFeatures<T>>(detach(feats));
  for (const auto& [id, bank] : banks) {
    auto [m_ori, m_e] = assemble_memory(bank, selected);
    TransformerState<T> st =
        transformer_forward(tape, tape.constant(std::move(m_ori)), tape.constant(std::move(m_e)),
                            feats.embedding, model.transformer, bypass_fim);
    Var<T> probs = decode(tape, st.t_out, feats.f8, feats.f4, model.decoder);
    Tensor<T> fg({1, h, w});
    std::copy(probs.value().data() + hw, probs.value().data() + 2 * hw, fg.data());
    out.probs.emplace(id, std::move(fg));
  }
  return out;
}

template <typename T>
SegmentationResult<T> run_video(SitvosModel<T>& model, const VideoTask<T>& task,
                                const PipelineOptions& opts) {
  validate_task(task);
  const std::size_t h = task.frames[0].extent(1), w = task.frames[0].extent(2);
  SegmentationResult<T> result;
  const std::uint64_t calls_before = backbone_invocations().load();

  // Frame 0: ground-truth annotation seeds every object's memory.
  std::map<int, MemoryBank<T>> banks;
  {
    Tape<T> tape;
    FrameFeatureVars<T> feats = extract(tape, tape.constant(task.frames[0]), model.backbone);
    auto shared = std::make_shared<const FrameFeatures<T>>(detach(feats));
    LabelMap truth(h, w);
    for (const auto& [id, mask] : task.first_masks) {
      Var<T> m_e = encode_mask(tape, tape.constant(mask), model.mask_encoder);
      banks[id].append(0, shared, m_e.value());
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == T(1)) truth.ids[i] = id;
    }
    result.label_maps.push_back(std::move(truth));
    if (opts.keep_probs) result.per_object_probs.push_back(task.first_masks);
  }

  for (std::size_t t = 1; t < task.frames.size(); ++t) {
    const std::vector<int> selected = select(static_cast<int>(t), opts.policy);
    result.memory_indices.push_back(selected);
    result.memory_sizes.push_back(selected.size());

    FrameResult<T> fr =
        segment_frame(model, task.frames[t], banks, selected, opts.bypass_fim);
    LabelMap labels = merge(fr.probs, opts.soft_aggregation);

    // Feed back the binarized merged result as each object's new memory mask.
    Tape<T> tape;
    for (auto& [id, bank] : banks) {
      Tensor<T> mask({1, h, w});
      for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = labels.ids[i] == id ? T(1) : T(0);
      Var<T> m_e = encode_mask(tape, tape.constant(mask), model.mask_encoder);
      bank.append(static_cast<int>(t), fr.features, m_e.value());
    }
    if (opts.keep_probs) result.per_object_probs.push_back(std::move(fr.probs));
    result.label_maps.push_back(std::move(labels));
  }
  result.backbone_calls = backbone_invocations().load() - calls_before;
  return result;
}

}  // namespace sitvos
