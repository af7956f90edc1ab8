#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sitvos/backbone.hpp"
#include "sitvos/seg_decoder.hpp"
#include "sitvos/transformer.hpp"

namespace sitvos {

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t d_k = 8;           // attention key width
  std::size_t decoder_width = 32;
};

// Every trainable parameter of the full network, grouped by role.
template <typename T>
struct SitvosModel {
  ModelConfig config;
  BackboneParams<T> backbone;
  MaskEncoderParams<T> mask_encoder;
  InteractiveTransformerParams<T> transformer;
  DecoderParams<T> decoder;

  static SitvosModel init(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    SitvosModel m;
    m.config = cfg;
    m.backbone = BackboneParams<T>::init(cfg.backbone, rng, "backbone");
    m.mask_encoder = MaskEncoderParams<T>::init(cfg.backbone, rng, "mask_encoder");
    m.transformer = InteractiveTransformerParams<T>::init(cfg.backbone.projection_channels, cfg.d_k,
                                                          rng, "transformer");
    m.decoder = DecoderParams<T>::init(cfg.backbone.projection_channels, cfg.decoder_width,
                                       cfg.backbone.stage_channels[1], cfg.backbone.stage_channels[0],
                                       rng, "decoder");
    return m;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    backbone.collect(out);
    mask_encoder.collect(out);
    transformer.collect(out);
    decoder.collect(out);
    return out;
  }

  void zero_grads() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
  }
};

// Checkpoint = <path> with concatenated tensor containers plus <path>.json
// mapping parameter name -> byte offset (and recording the model config).
template <typename T>
void save_checkpoint(SitvosModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  nlohmann::json manifest;
  manifest["dtype"] = std::is_same_v<T, float> ? "f32" : "f64";
  manifest["config"] = {
      {"stage_channels", model.config.backbone.stage_channels},
      {"projection_channels", model.config.backbone.projection_channels},
      {"mask_encoder_channels", model.config.backbone.mask_encoder_channels},
      {"d_k", model.config.d_k},
      {"decoder_width", model.config.decoder_width},
  };
  nlohmann::json offsets = nlohmann::json::object();
  for (Parameter<T>* p : model.parameters()) {
    offsets[p->name] = static_cast<std::uint64_t>(os.tellp());
    write_tensor(os, p->value);
  }
  manifest["offsets"] = std::move(offsets);
  if (!os) throw IoError("short write to checkpoint: " + path);
  std::ofstream ms(path + ".json");
  if (!ms) throw IoError("cannot open checkpoint manifest for writing: " + path + ".json");
  ms << manifest.dump(2) << '\n';
}

inline ModelConfig checkpoint_config(const std::string& path) {
  std::ifstream ms(path + ".json");
  if (!ms) throw IoError("cannot open checkpoint manifest: " + path + ".json");
  nlohmann::json manifest = nlohmann::json::parse(ms, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded()) throw FormatError("malformed checkpoint manifest: " + path + ".json");
  ModelConfig cfg;
  const auto& c = manifest.at("config");
  cfg.backbone.stage_channels = c.at("stage_channels").get<std::vector<std::size_t>>();
  cfg.backbone.projection_channels = c.at("projection_channels").get<std::size_t>();
  cfg.backbone.mask_encoder_channels = c.at("mask_encoder_channels").get<std::vector<std::size_t>>();
  cfg.d_k = c.at("d_k").get<std::size_t>();
  cfg.decoder_width = c.at("decoder_width").get<std::size_t>();
  return cfg;
}

template <typename T>
SitvosModel<T> load_checkpoint(const std::string& path) {
  std::ifstream ms(path + ".json");
  if (!ms) throw IoError("cannot open checkpoint manifest: " + path + ".json");
  nlohmann::json manifest = nlohmann::json::parse(ms, nullptr, /*allow_exceptions=*/false);
  if (manifest.is_discarded()) throw FormatError("malformed checkpoint manifest: " + path + ".json");
  const std::string want = std::is_same_v<T, float> ? "f32" : "f64";
  if (manifest.at("dtype").get<std::string>() != want)
    throw FormatError("checkpoint dtype " + manifest["dtype"].get<std::string>() +
                      " does not match requested " + want);

  SitvosModel<T> model = SitvosModel<T>::init(checkpoint_config(path), /*seed=*/0);
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  const auto& offsets = manifest.at("offsets");
  for (Parameter<T>* p : model.parameters()) {
    auto it = offsets.find(p->name);
    if (it == offsets.end()) throw LookupError("checkpoint missing parameter '" + p->name + "'");
    is.clear();
    const std::uint64_t offset = it.value().template get<std::uint64_t>();
    is.seekg(static_cast<std::streamoff>(offset));
    Tensor<T> t = read_tensor<T>(is);
    require_same_shape(t.shape(), p->value.shape(), ("checkpoint parameter " + p->name).c_str());
    p->value = std::move(t);
  }
  return model;
}

}  // namespace sitvos
