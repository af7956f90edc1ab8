// Single command-line entry point: synth / train / infer / eval / bench-mem.
//
// Every subcommand that takes --seed is bit-deterministic across runs of the
// same build. All errors are reported as one structured line on stderr and a
// nonzero exit code.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sitvos/config.hpp"
#include "sitvos/image_io.hpp"
#include "sitvos/metrics.hpp"
#include "sitvos/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sitvos;

namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

const std::set<std::string> kKnownKeys = {
    "model.stage_channels",     "model.projection_channels", "model.mask_encoder_channels",
    "model.d_k",                "model.decoder_width",       "train.base_lr",
    "train.poly_power",         "train.batch_size",          "train.crop",
    "train.steps",              "train.stage",               "train.interval_max",
    "train.num_objects",        "train.seq_length",          "train.seq_pool",
    "train.predicted_mask_feedback",                         "train.checkpoint_every",
    "train.seed",               "memory.policy",             "pipeline.soft_merge",
    "pipeline.bypass_fim",
};

ConfigMap load_config(const std::string& path) {
  ConfigMap cfg = path.empty() ? ConfigMap() : ConfigMap::load(path);
  return cfg;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw FormatError("");
      out.push_back(v);
    } catch (...) {
      throw FormatError("config key '" + key + "': not a comma-separated integer list: '" + s + "'");
    }
  }
  if (out.empty()) throw FormatError("config key '" + key + "': empty list");
  return out;
}

ModelConfig model_config_from(const ConfigMap& cfg) {
  ModelConfig mc;
  if (cfg.has("model.stage_channels"))
    mc.backbone.stage_channels =
        parse_size_list(cfg.get_string("model.stage_channels", ""), "model.stage_channels");
  mc.backbone.projection_channels = static_cast<std::size_t>(
      cfg.get_int("model.projection_channels", static_cast<long long>(mc.backbone.projection_channels)));
  if (cfg.has("model.mask_encoder_channels"))
    mc.backbone.mask_encoder_channels = parse_size_list(
        cfg.get_string("model.mask_encoder_channels", ""), "model.mask_encoder_channels");
  mc.d_k = static_cast<std::size_t>(cfg.get_int("model.d_k", static_cast<long long>(mc.d_k)));
  mc.decoder_width = static_cast<std::size_t>(
      cfg.get_int("model.decoder_width", static_cast<long long>(mc.decoder_width)));
  return mc;
}

// Numeric-friendly listing of the PNG files in a directory.
std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    const std::string sa = a.filename().string(), sb = b.filename().string();
    return sa.size() != sb.size() ? sa.size() < sb.size() : sa < sb;
  });
  if (out.empty()) throw IoError("no png files in " + dir.string());
  return out;
}

std::string frame_name(std::size_t i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i << ".png";
  return os.str();
}

LabelMap masks_to_labels(const std::map<int, Tensor<float>>& masks, std::size_t h, std::size_t w) {
  LabelMap out(h, w);
  for (const auto& [id, m] : masks)
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i] == 1.0f) out.ids[i] = id;
  return out;
}

std::map<int, Tensor<float>> labels_to_masks(const LabelMap& labels) {
  std::map<int, Tensor<float>> out;
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    const int id = labels.ids[i];
    if (id <= 0) continue;
    auto [it, inserted] = out.try_emplace(id, Tensor<float>::zeros({1, labels.h, labels.w}));
    it->second[i] = 1.0f;
  }
  return out;
}

Tensor<double> object_mask2d(const LabelMap& labels, int id) {
  Tensor<double> m({labels.h, labels.w});
  for (std::size_t i = 0; i < labels.ids.size(); ++i) m[i] = labels.ids[i] == id ? 1.0 : 0.0;
  return m;
}

// Generate a sequence, retrying until all requested objects survive frame 0.
Clip<float> synth_clip(Rng& rng, std::size_t length, std::size_t objects, std::size_t size) {
  SequenceConfig sc;
  sc.length = length;
  sc.num_objects = objects;
  sc.h = sc.w = size;
  for (int attempt = 0; attempt < 32; ++attempt) {
    Clip<float> clip = make_sequence<float>(rng, sc);
    if (clip.masks[0].size() == objects) return clip;
  }
  throw ContractError("synthesis failed to place all objects in frame 0");
}

// A clip directory holds frames/*.png plus either annotation.png or the
// first frame's mask in masks/.
VideoTask<float> load_task(const fs::path& input, std::vector<std::string>& frame_names) {
  const std::vector<fs::path> files = list_pngs(input / "frames");
  VideoTask<float> task;
  for (const fs::path& p : files) {
    task.frames.push_back(read_rgb_png<float>(p.string()));
    frame_names.push_back(p.filename().string());
  }
  fs::path ann = input / "annotation.png";
  if (!fs::exists(ann)) ann = input / "masks" / files[0].filename();
  if (!fs::exists(ann))
    throw IoError("no annotation found: expected " + (input / "annotation.png").string() + " or " +
                  (input / "masks" / files[0].filename()).string());
  task.first_masks = labels_to_masks(read_label_png(ann.string()));
  if (task.first_masks.empty())
    throw ContractError("annotation has no foreground objects: " + ann.string());
  return task;
}

// Score predicted label maps against ground-truth label maps for the object
// ids present in the first truth frame. Frame 0 is the given annotation and
// is skipped unless there is nothing else to score.
SequenceScores score_sequence(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& truth) {
  if (pred.size() != truth.size())
    throw ContractError("prediction and truth frame counts differ: " +
                        std::to_string(pred.size()) + " vs " + std::to_string(truth.size()));
  std::set<int> ids;
  for (int id : truth[0].ids)
    if (id > 0) ids.insert(id);
  if (ids.empty()) throw ContractError("truth sequence has no objects in its first frame");
  const std::size_t start = truth.size() > 1 ? 1 : 0;
  SequenceScores scores;
  for (std::size_t f = start; f < truth.size(); ++f) {
    if (pred[f].h != truth[f].h || pred[f].w != truth[f].w)
      throw DimensionError("prediction/truth size mismatch at frame " + std::to_string(f));
    const double tol = default_boundary_tolerance(truth[f].h, truth[f].w);
    for (int id : ids) {
      const Tensor<double> p = object_mask2d(pred[f], id);
      const Tensor<double> t = object_mask2d(truth[f], id);
      scores[id].push_back({jaccard(p, t), boundary_f(p, t, tol)});
    }
  }
  return scores;
}

std::vector<LabelMap> read_label_dir(const fs::path& dir) {
  std::vector<LabelMap> out;
  for (const fs::path& p : list_pngs(dir)) out.push_back(read_label_png(p.string()));
  return out;
}

json report_to_json(const EvalReport& report, const std::vector<std::string>& names) {
  json out;
  out["global"] = {{"J", report.j}, {"F", report.f}, {"JF", report.jf}};
  json seqs = json::array();
  for (std::size_t i = 0; i < report.per_sequence.size(); ++i) {
    json objs = json::object();
    for (const auto& [id, o] : report.per_sequence[i])
      objs[std::to_string(id)] = {{"J", o.j}, {"F", o.f}};
    seqs.push_back({{"name", names[i]},
                    {"J", report.sequence_means[i].j},
                    {"F", report.sequence_means[i].f},
                    {"objects", std::move(objs)}});
  }
  out["sequences"] = std::move(seqs);
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw IoError("short write: " + path.string());
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string output;
  std::size_t clips = 1, length = 3, objects = 1, size = 64;
  std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
  if (a.size % 16 != 0) throw ContractError("--size must be divisible by 16");
  if (a.clips < 1 || a.length < 1 || a.objects < 1)
    throw ContractError("--clips, --length and --objects must be >= 1");
  Rng rng(a.seed);
  fs::create_directories(a.output);
  json manifest;
  manifest["seed"] = a.seed;
  manifest["clips"] = a.clips;
  manifest["length"] = a.length;
  manifest["objects"] = a.objects;
  manifest["size"] = a.size;
  json clip_list = json::array();
  for (std::size_t c = 0; c < a.clips; ++c) {
    std::ostringstream name;
    name << "clip_" << std::setw(4) << std::setfill('0') << c;
    const fs::path clip_dir = fs::path(a.output) / name.str();
    fs::create_directories(clip_dir / "frames");
    fs::create_directories(clip_dir / "masks");
    Clip<float> clip = synth_clip(rng, a.length, a.objects, a.size);
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      write_rgb_png((clip_dir / "frames" / frame_name(f)).string(), clip.frames[f]);
      write_label_png((clip_dir / "masks" / frame_name(f)).string(),
                      masks_to_labels(clip.masks[f], a.size, a.size));
    }
    json ids = json::array();
    for (const auto& [id, m] : clip.masks[0]) ids.push_back(id);
    clip_list.push_back({{"name", name.str()}, {"seed", clip.seed}, {"object_ids", std::move(ids)}});
  }
  manifest["clip_info"] = std::move(clip_list);
  write_json(fs::path(a.output) / "manifest.json", manifest);
  std::cout << "wrote " << a.clips << " clip(s) to " << a.output << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, checkpoint, init_from, loss_csv;
  std::string stage, base_lr, steps, batch_size, crop, seed;  // raw overrides
};

void run_train(const TrainArgs& a) {
  if (a.checkpoint.empty()) throw ContractError("--checkpoint (output path) is required");
  ConfigMap cfg = load_config(a.config);
  if (!a.stage.empty()) cfg.set("train.stage", a.stage);
  if (!a.base_lr.empty()) cfg.set("train.base_lr", a.base_lr);
  if (!a.steps.empty()) cfg.set("train.steps", a.steps);
  if (!a.batch_size.empty()) cfg.set("train.batch_size", a.batch_size);
  if (!a.crop.empty()) cfg.set("train.crop", a.crop);
  if (!a.seed.empty()) cfg.set("train.seed", a.seed);
  cfg.require_known(kKnownKeys);

  TrainConfig tc;
  tc.base_lr = cfg.get_double("train.base_lr", tc.base_lr);
  tc.poly_power = cfg.get_double("train.poly_power", tc.poly_power);
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", 4));
  tc.crop = static_cast<std::size_t>(cfg.get_int("train.crop", 64));
  tc.max_steps = static_cast<std::size_t>(cfg.get_int("train.steps", 0));
  tc.interval_max = static_cast<int>(cfg.get_int("train.interval_max", 25));
  tc.num_objects = static_cast<std::size_t>(cfg.get_int("train.num_objects", 1));
  tc.seq_length = static_cast<std::size_t>(cfg.get_int("train.seq_length", 30));
  tc.seq_pool = static_cast<std::size_t>(cfg.get_int("train.seq_pool", 4));
  tc.predicted_mask_feedback = cfg.get_bool("train.predicted_mask_feedback", true);
  tc.checkpoint_every = static_cast<std::size_t>(cfg.get_int("train.checkpoint_every", 0));
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 0));
  const Stage stage = parse_stage(cfg.get_string("train.stage", "pretrain"));

  SitvosModel<float> model =
      a.init_from.empty() ? SitvosModel<float>::init(model_config_from(cfg), tc.seed)
                          : load_checkpoint<float>(a.init_from);
  const auto t0 = std::chrono::steady_clock::now();
  StageResult result = run_stage(model, stage, tc, a.checkpoint, a.loss_csv);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json summary;
  summary["stage"] = cfg.get_string("train.stage", "pretrain");
  summary["steps"] = result.losses.size();
  summary["wall_time_s"] = secs;
  summary["checkpoint"] = a.checkpoint;
  if (!result.losses.empty()) {
    summary["first_loss"] = result.losses.front();
    summary["final_loss"] = result.losses.back();
  }
  std::cout << summary.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
  std::string config, checkpoint, input, output, memory_policy;
  std::uint64_t seed = 0;
  int threads = 1;
  bool debug_attention = false;
};

void run_infer(const InferArgs& a) {
  if (a.checkpoint.empty()) throw ContractError("--checkpoint is required");
  if (a.input.empty() || a.output.empty()) throw ContractError("--input and --output are required");
  if (a.threads < 1) throw ContractError("--threads must be >= 1");
  ConfigMap cfg = load_config(a.config);
  if (!a.memory_policy.empty()) cfg.set("memory.policy", a.memory_policy);
  cfg.require_known(kKnownKeys);

  PipelineOptions opts;
  opts.policy = MemoryPolicy::parse(cfg.get_string("memory.policy", "first-prev"));
  opts.soft_aggregation = cfg.get_bool("pipeline.soft_merge", true);
  opts.bypass_fim = cfg.get_bool("pipeline.bypass_fim", false);
  opts.keep_probs = a.debug_attention;

  SitvosModel<float> model = load_checkpoint<float>(a.checkpoint);
  std::vector<std::string> frame_names;
  VideoTask<float> task = load_task(a.input, frame_names);

  AttentionDebug<float> attn_debug;
  if (a.debug_attention) g_attention_debug<float> = &attn_debug;
  const auto t0 = std::chrono::steady_clock::now();
  SegmentationResult<float> result = run_video(model, task, opts);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_attention_debug<float> = nullptr;

  fs::create_directories(a.output);
  for (std::size_t f = 0; f < result.label_maps.size(); ++f)
    write_label_png((fs::path(a.output) / frame_names[f]).string(), result.label_maps[f]);
  if (a.debug_attention) {
    const fs::path dbg = fs::path(a.output) / "debug";
    fs::create_directories(dbg);
    // Per-object foreground probability maps for inspection.
    for (std::size_t f = 0; f < result.per_object_probs.size(); ++f)
      for (const auto& [id, p] : result.per_object_probs[f]) {
        Tensor<float> gray({3, p.extent(1), p.extent(2)});
        for (std::size_t c = 0; c < 3; ++c)
          std::copy(p.data(), p.data() + p.size(), gray.data() + c * p.size());
        write_rgb_png((dbg / ("prob_" + std::to_string(id) + "_" + frame_names[f])).string(), gray);
      }
    // Every attention weight matrix of the run, concatenated into one tensor
    // container with a JSON index (block label, shape, byte offset).
    std::ofstream os(dbg / "attention.sitt", std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + (dbg / "attention.sitt").string());
    json index = json::array();
    for (const auto& [label, weights] : attn_debug.maps) {
      index.push_back({{"label", label},
                       {"rows", weights.extent(0)},
                       {"cols", weights.extent(1)},
                       {"offset", static_cast<std::uint64_t>(os.tellp())}});
      write_tensor(os, weights);
    }
    write_json(dbg / "attention_index.json", index);
  }

  json manifest;
  manifest["policy"] = opts.policy.str();
  manifest["soft_aggregation"] = opts.soft_aggregation;
  manifest["bypass_fim"] = opts.bypass_fim;
  manifest["seed"] = a.seed;
  manifest["threads"] = a.threads;
  manifest["frames"] = task.frames.size();
  json ids = json::array();
  for (const auto& [id, m] : task.first_masks) ids.push_back(id);
  manifest["object_ids"] = std::move(ids);
  manifest["backbone_calls"] = result.backbone_calls;
  manifest["memory_sizes"] = result.memory_sizes;
  manifest["memory_indices"] = result.memory_indices;
  manifest["wall_time_s"] = secs;
  write_json(fs::path(a.output) / "manifest.json", manifest);
  std::cout << "segmented " << task.frames.size() << " frame(s) with " << task.first_masks.size()
            << " object(s) in " << std::fixed << std::setprecision(3) << secs << " s\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred, truth, output;
};

// Truth may be a single PNG directory, or a directory of sequences where each
// entry is either a PNG directory itself or a clip directory with masks/.
std::vector<std::pair<std::string, fs::path>> discover_sequences(const fs::path& truth) {
  if (!fs::is_directory(truth)) throw IoError("not a directory: " + truth.string());
  for (const auto& e : fs::directory_iterator(truth))
    if (e.is_regular_file() && e.path().extension() == ".png") return {{".", truth}};
  std::vector<std::pair<std::string, fs::path>> out;
  for (const auto& e : fs::directory_iterator(truth)) {
    if (!e.is_directory()) continue;
    const fs::path masks = e.path() / "masks";
    out.emplace_back(e.path().filename().string(), fs::is_directory(masks) ? masks : e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError("no sequences found under " + truth.string());
  return out;
}

void run_eval(const EvalArgs& a) {
  if (a.pred.empty() || a.truth.empty()) throw ContractError("--pred and --truth are required");
  std::vector<SequenceScores> all;
  std::vector<std::string> names;
  for (const auto& [name, truth_dir] : discover_sequences(a.truth)) {
    const fs::path pred_dir = name == "." ? fs::path(a.pred) : fs::path(a.pred) / name;
    all.push_back(score_sequence(read_label_dir(pred_dir), read_label_dir(truth_dir)));
    names.push_back(name);
  }
  const EvalReport report = aggregate(all);
  const json out = report_to_json(report, names);
  std::cout << out.dump(2) << "\n";
  if (!a.output.empty()) write_json(a.output, out);
}

// ---------------------------------------------------------------------------
// bench-mem
// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string checkpoint, dataset, output;
  int every_k = 5, fixed_n = 5;
  std::uint64_t seed = 0;
};

void run_bench(const BenchArgs& a) {
  if (a.checkpoint.empty() || a.dataset.empty())
    throw ContractError("--checkpoint and --dataset are required");
  SitvosModel<float> model = load_checkpoint<float>(a.checkpoint);

  // Load every clip once.
  struct Entry {
    std::string name;
    VideoTask<float> task;
    std::vector<LabelMap> truth;
  };
  std::vector<Entry> entries;
  for (const auto& e : fs::directory_iterator(a.dataset)) {
    if (!e.is_directory() || !fs::is_directory(e.path() / "frames")) continue;
    Entry entry;
    entry.name = e.path().filename().string();
    std::vector<std::string> ignore;
    entry.task = load_task(e.path(), ignore);
    entry.truth = read_label_dir(e.path() / "masks");
    entries.push_back(std::move(entry));
  }
  std::sort(entries.begin(), entries.end(),
            [](const Entry& x, const Entry& y) { return x.name < y.name; });
  if (entries.empty()) throw IoError("no clip directories under " + a.dataset);

  const std::vector<MemoryPolicy> policies = {
      MemoryPolicy::first_only(),          MemoryPolicy::previous_only(),
      MemoryPolicy::first_and_previous(),  MemoryPolicy::every_k(a.every_k),
      MemoryPolicy::fixed_n(a.fixed_n),
  };

  json rows = json::array();
  std::vector<std::array<double, 5>> table;  // j, f, jf, mem, secs
  for (const MemoryPolicy& policy : policies) {
    PipelineOptions opts;
    opts.policy = policy;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SequenceScores> all;
    double mem_sum = 0;
    std::size_t mem_count = 0;
    for (const Entry& entry : entries) {
      SegmentationResult<float> result = run_video(model, entry.task, opts);
      all.push_back(score_sequence(result.label_maps, entry.truth));
      for (std::size_t s : result.memory_sizes) mem_sum += static_cast<double>(s);
      mem_count += result.memory_sizes.size();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const EvalReport report = aggregate(all);
    const double mean_mem = mem_count == 0 ? 0.0 : mem_sum / static_cast<double>(mem_count);
    rows.push_back({{"policy", policy.str()},
                    {"J", report.j},
                    {"F", report.f},
                    {"JF", report.jf},
                    {"mean_memory_size", mean_mem},
                    {"wall_time_s", secs}});
    table.push_back({report.j, report.f, report.jf, mean_mem, secs});
  }

  json out;
  out["seed"] = a.seed;
  out["clips"] = entries.size();
  out["rows"] = rows;
  std::cout << out.dump(2) << "\n";

  std::cout << std::left << std::setw(14) << "policy" << std::right << std::setw(9) << "J"
            << std::setw(9) << "F" << std::setw(9) << "J&F" << std::setw(10) << "mem"
            << std::setw(11) << "time_s" << "\n";
  for (std::size_t i = 0; i < policies.size(); ++i)
    std::cout << std::left << std::setw(14) << policies[i].str() << std::right << std::fixed
              << std::setprecision(4) << std::setw(9) << table[i][0] << std::setw(9) << table[i][1]
              << std::setw(9) << table[i][2] << std::setprecision(2) << std::setw(10) << table[i][3]
              << std::setw(11) << table[i][4] << "\n";
  if (!a.output.empty()) write_json(a.output, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SITVOS-style semi-supervised video object segmentation toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "Generate a synthetic sprite dataset");
  s->add_option("--output", synth.output, "Output dataset directory")->required();
  s->add_option("--clips", synth.clips, "Number of clips");
  s->add_option("--length", synth.length, "Frames per clip");
  s->add_option("--objects", synth.objects, "Objects per clip");
  s->add_option("--size", synth.size, "Frame height/width (divisible by 16)");
  s->add_option("--seed", synth.seed, "Random seed");

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "Train a model on synthetic clips");
  t->add_option("--config", train.config, "Config file (key = value lines)");
  t->add_option("--checkpoint", train.checkpoint, "Output checkpoint path")->required();
  t->add_option("--init-from", train.init_from, "Start from an existing checkpoint");
  t->add_option("--stage", train.stage, "pretrain | main");
  t->add_option("--steps", train.steps, "Number of optimization steps");
  t->add_option("--base-lr", train.base_lr, "Base learning rate");
  t->add_option("--batch-size", train.batch_size, "Clips per step");
  t->add_option("--crop", train.crop, "Frame size (divisible by 16)");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--loss-csv", train.loss_csv, "Write the loss curve as CSV");

  InferArgs infer;
  CLI::App* i = app.add_subcommand("infer", "Segment a video from a first-frame annotation");
  i->add_option("--config", infer.config, "Config file");
  i->add_option("--checkpoint", infer.checkpoint, "Model checkpoint");
  i->add_option("--input", infer.input, "Clip directory (frames/ + annotation)");
  i->add_option("--output", infer.output, "Output directory for indexed PNGs");
  i->add_option("--memory-policy", infer.memory_policy,
                "first | prev | first-prev | every-k:K | fixed-n:N");
  i->add_option("--seed", infer.seed, "Random seed");
  i->add_option("--threads", infer.threads, "Worker cap");
  i->add_flag("--debug-attention", infer.debug_attention,
              "Dump per-object probability maps alongside the predictions");

  EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", eval.pred, "Prediction directory");
  e->add_option("--truth", eval.truth, "Ground-truth directory");
  e->add_option("--output", eval.output, "Also write the JSON report here");

  BenchArgs bench;
  CLI::App* b = app.add_subcommand("bench-mem", "Compare all memory policies on a dataset");
  b->add_option("--checkpoint", bench.checkpoint, "Model checkpoint");
  b->add_option("--dataset", bench.dataset, "Dataset directory of clips");
  b->add_option("--every-k", bench.every_k, "Interval for the every-k policy");
  b->add_option("--fixed-n", bench.fixed_n, "Capacity for the fixed-n policy");
  b->add_option("--seed", bench.seed, "Random seed");
  b->add_option("--output", bench.output, "Also write the JSON report here");

  try {
    app.parse(argc, argv);
    if (s->parsed()) run_synth(synth);
    if (t->parsed()) run_train(train);
    if (i->parsed()) run_infer(infer);
    if (e->parsed()) run_eval(eval);
    if (b->parsed()) run_bench(bench);
  } catch (const CLI::CallForHelp& ex) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: usage: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::string msg = ex.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  return 0;
}
