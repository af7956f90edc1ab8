#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "sitvos/data_synth.hpp"
#include "sitvos/pipeline.hpp"

namespace sitvos {

struct TrainConfig {
  double base_lr = 1e-5;
  double poly_power = 0.9;
  std::size_t batch_size = 4;
  std::size_t crop = 64;  // paper regime: 384
  std::size_t max_steps = 0;
  int interval_max = 25;
  std::uint64_t seed = 0;
  std::size_t num_objects = 1;
  std::size_t seq_length = 30;     // main-stage sequence length
  std::size_t seq_pool = 4;        // main-stage sequences kept in rotation
  bool predicted_mask_feedback = true;  // false: ground-truth middle-frame mask
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only

  void validate() const {
    if (base_lr <= 0) throw ContractError("train config: base_lr must be positive");
    if (poly_power <= 0) throw ContractError("train config: poly_power must be positive");
    if (crop % 16 != 0) throw ContractError("train config: crop must be divisible by 16");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
    if (interval_max < 0) throw ContractError("train config: interval_max must be >= 0");
  }
};

// base · (1 − step/total)^power
inline double poly_lr(std::size_t step, std::size_t total, double base, double power) {
  if (total < 1) throw ContractError("poly_lr: total must be >= 1");
  if (step > total) throw ContractError("poly_lr: step past the schedule end");
  return base * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total), power);
}

// Value-level cross entropy (no tape); mirrors cross_entropy_loss exactly.
template <typename T>
double cross_entropy(const Tensor<T>& probs, const Tensor<T>& truth) {
  if (probs.rank() != 3 || probs.extent(0) != 2)
    throw DimensionError("cross_entropy: expected probs [2,h,w], got " + shape_str(probs.shape()));
  const std::size_t hw = probs.extent(1) * probs.extent(2);
  if (truth.size() != hw)
    throw DimensionError("cross_entropy: truth does not cover " + std::to_string(hw) + " pixels");
  double acc = 0;
  for (std::size_t i = 0; i < hw; ++i) {
    const std::size_t ch = truth[i] > T(0.5) ? 1 : 0;
    const double p =
        std::min(std::max(static_cast<double>(probs[ch * hw + i]), 1e-7), 1.0);
    acc -= std::log(p);
  }
  return acc / static_cast<double>(hw);
}

// Bias-corrected adaptive-moment optimizer over a fixed parameter registry.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Parameter<T>* p : params_) {
      m_.push_back(Tensor<double>::zeros(p->value.shape()));
      v_.push_back(Tensor<double>::zeros(p->value.shape()));
    }
  }

  std::size_t steps() const { return t_; }

  // Applies one update from the accumulated gradients, then clears them.
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const double g = static_cast<double>(p.grad[j]);
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p.value[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps_));
      }
      p.zero_grad();
    }
  }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

namespace detail {

template <typename T>
Tensor<T> truth_mask_or_empty(const std::map<int, Tensor<T>>& masks, int id, std::size_t h,
                              std::size_t w) {
  auto it = masks.find(id);
  if (it != masks.end()) return it->second;
  return Tensor<T>::zeros({1, h, w});
}

}  // namespace detail

// Forward + backward over one 3-frame clip; gradients are accumulated into the
// model (scaled by loss_scale), the loss value is returned. Frame 0's ground
// truth seeds the memory; frame 1 is predicted, its (by default predicted,
// binarized) mask joins the memory; frame 2 is predicted against both.
template <typename T>
double clip_forward_backward(SitvosModel<T>& model, const Clip<T>& clip, const TrainConfig& cfg,
                             double loss_scale = 1.0) {
  if (clip.frames.size() != 3 || clip.masks.size() != 3)
    throw ContractError("train clip: exactly 3 frames with masks required");
  if (clip.masks[0].empty()) throw ContractError("train clip: no objects in frame 0");
  const std::size_t h = clip.frames[0].extent(1), w = clip.frames[0].extent(2);

  Tape<T> tape;
  // Per object: differentiable memory rows (frame embedding, mask embedding).
  std::map<int, std::vector<Var<T>>> mem_emb, mem_mask;

  FrameFeatureVars<T> f0 = extract(tape, tape.constant(clip.frames[0]), model.backbone);
  for (const auto& [id, mask] : clip.masks[0]) {
    mem_emb[id].push_back(f0.embedding);
    mem_mask[id].push_back(encode_mask(tape, tape.constant(mask), model.mask_encoder));
  }

  std::vector<Var<T>> object_losses;
  std::map<int, Tensor<T>> frame1_probs;

  for (int target = 1; target <= 2; ++target) {
    FrameFeatureVars<T> fq =
        extract(tape, tape.constant(clip.frames[static_cast<std::size_t>(target)]), model.backbone);
    std::map<int, Var<T>> probs_vars;
    for (auto& [id, emb_rows] : mem_emb) {
      TransformerState<T> st =
          transformer_forward(tape, concat_rows(emb_rows), concat_rows(mem_mask[id]), fq.embedding,
                              model.transformer);
      Var<T> probs = decode(tape, st.t_out, fq.f8, fq.f4, model.decoder);
      Tensor<T> truth = detail::truth_mask_or_empty(clip.masks[static_cast<std::size_t>(target)],
                                                    id, h, w);
      object_losses.push_back(cross_entropy_loss(probs, truth));
      probs_vars.emplace(id, probs);
    }
    if (target == 1) {
      // Middle-frame mask feedback: binarize the merged prediction (or use the
      // ground truth when configured) and push its embedding into the memory.
      const std::size_t hw = h * w;
      std::map<int, Tensor<T>> fg;
      for (const auto& [id, pv] : probs_vars) {
        Tensor<T> m({1, h, w});
        std::copy(pv.value().data() + hw, pv.value().data() + 2 * hw, m.data());
        fg.emplace(id, std::move(m));
      }
      LabelMap labels = merge(fg, /*soft_aggregation=*/true);
      for (auto& [id, emb_rows] : mem_emb) {
        Tensor<T> mask({1, h, w});
        if (cfg.predicted_mask_feedback) {
          for (std::size_t i = 0; i < hw; ++i) mask[i] = labels.ids[i] == id ? T(1) : T(0);
        } else {
          mask = detail::truth_mask_or_empty(clip.masks[1], id, h, w);
        }
        emb_rows.push_back(fq.embedding);
        mem_mask[id].push_back(encode_mask(tape, tape.constant(mask), model.mask_encoder));
      }
    }
  }

  Var<T> total = object_losses[0];
  for (std::size_t i = 1; i < object_losses.size(); ++i) total = add(total, object_losses[i]);
  // Per-object average over the two predicted frames, batched scale folded in.
  const double norm = loss_scale / static_cast<double>(mem_emb.size());
  Var<T> loss = scale(total, static_cast<T>(norm));
  tape.backward(loss);
  return static_cast<double>(total.value()[0]) / static_cast<double>(mem_emb.size());
}

// One full optimization step on a single clip.
template <typename T>
double train_clip_step(SitvosModel<T>& model, Adam<T>& opt, const Clip<T>& clip,
                       const TrainConfig& cfg, double lr) {
  const double loss = clip_forward_backward(model, clip, cfg, 1.0);
  opt.step(lr);
  return loss;
}

enum class Stage { Pretrain, Main };

inline Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "main") return Stage::Main;
  throw FormatError("unknown training stage '" + s + "'");
}

struct StageResult {
  std::vector<double> losses;  // one per step (batch mean)
  std::vector<double> lrs;
};

namespace detail {

// Clips occasionally lose an object to full occlusion in frame 0; retry.
template <typename T>
Clip<T> fresh_clip(Rng& rng, const TrainConfig& cfg, std::size_t length) {
  SequenceConfig sc;
  sc.length = length;
  sc.num_objects = cfg.num_objects;
  sc.h = sc.w = cfg.crop;
  for (int attempt = 0; attempt < 32; ++attempt) {
    Clip<T> clip = make_sequence<T>(rng, sc);
    if (clip.masks[0].size() == cfg.num_objects) return clip;
  }
  throw ContractError("data synthesis failed to place all objects in frame 0");
}

template <typename T>
Clip<T> triple_of(const Clip<T>& seq, const std::array<std::size_t, 3>& idx) {
  Clip<T> out;
  out.seed = seq.seed;
  for (std::size_t i : idx) {
    out.frames.push_back(seq.frames[i]);
    out.masks.push_back(seq.masks[i]);
  }
  return out;
}

}  // namespace detail

// Pretrain: a fresh 3-frame clip per batch element. Main: triples sampled from
// a rotating pool of long sequences with interval uniform in [0, interval_max].
template <typename T>
StageResult run_stage(SitvosModel<T>& model, Stage stage, const TrainConfig& cfg,
                      const std::string& checkpoint_path = "",
                      const std::string& loss_csv = "") {
  cfg.validate();
  Rng rng(cfg.seed);
  Adam<T> opt(model.parameters(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  model.zero_grads();

  std::vector<Clip<T>> pool;
  if (stage == Stage::Main)
    for (std::size_t i = 0; i < cfg.seq_pool; ++i)
      pool.push_back(detail::fresh_clip<T>(rng, cfg, cfg.seq_length));

  StageResult result;
  std::ofstream csv;
  if (!loss_csv.empty()) {
    csv.open(loss_csv);
    if (!csv) throw IoError("cannot open loss curve for writing: " + loss_csv);
    csv << "step,lr,loss\n";
  }

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const double lr = poly_lr(step, cfg.max_steps, cfg.base_lr, cfg.poly_power);
    double loss_sum = 0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      Clip<T> clip;
      if (stage == Stage::Pretrain) {
        clip = detail::fresh_clip<T>(rng, cfg, 3);
      } else {
        const Clip<T>& seq = pool[rng.below(pool.size())];
        clip = detail::triple_of(seq, sample_triple(rng, seq.frames.size(), cfg.interval_max));
      }
      loss_sum += clip_forward_backward(model, clip, cfg, 1.0 / static_cast<double>(cfg.batch_size));
    }
    opt.step(lr);
    result.losses.push_back(loss_sum / static_cast<double>(cfg.batch_size));
    result.lrs.push_back(lr);
    if (csv.is_open())
      csv << step << ',' << lr << ',' << result.losses.back() << '\n';
    if (!checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(model, checkpoint_path);
  }
  if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
  return result;
}

}  // namespace sitvos
