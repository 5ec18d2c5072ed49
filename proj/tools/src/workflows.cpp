// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/tools/workflows.hpp"

#include <chrono>
#include <cstdio>
#include <map>
#include <sstream>

#include "semmix/array_io.hpp"
#include "semmix/error.hpp"
#include "semmix/image_io.hpp"
#include "semmix/oracle.hpp"
#include "semmix/shapes.hpp"
#include "semmix/trainer.hpp"

namespace semmix::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kMixConfigKeys[] = {"kmax", "kmin", "nu", "guidance", "steps",
                                                "eta", "seed", "layout_noise_mode"};

fs::path absolute_path(const json& value, std::string_view key) {
  if (!value.is_string() || value.get<std::string>().empty()) {
    throw_invalid(std::string(key) + " must be a non-empty path");
  }
  return fs::absolute(value.get<std::string>()).lexically_normal();
}

void reject_unknown(const json& doc, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!doc.is_object()) throw_invalid(std::string(what) + " config must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw_invalid("unknown " + std::string(what) + " field '" + key + "'");
    }
  }
}

template <typename T>
T field(const json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw_invalid("field '" + key + "' has the wrong type");
  }
}

std::string require_string(const json& doc, const std::string& key) {
  if (!doc.contains(key) || !doc.at(key).is_string()) {
    throw_invalid("field '" + key + "' is required and must be a string");
  }
  return doc.at(key).get<std::string>();
}

void require_file(const fs::path& p, std::string_view what) {
  if (!fs::exists(p)) throw_not_found(std::string(what) + " not found: " + p.string());
}

SampleBatch load_png_sample(const fs::path& path, int side) {
  require_file(path, "image");
  const GrayImage img = read_png(path);
  if (img.width != side || img.height != side) {
    throw_invalid("image " + path.string() + " is " + std::to_string(img.width) + "x" +
                  std::to_string(img.height) + ", model expects " + std::to_string(side) + "x" +
                  std::to_string(side));
  }
  return SampleBatch::single(SampleShape::image(side), from_gray(img));
}

json normalize_layout(const json& layout) {
  if (!layout.is_object()) throw_invalid("layout must be an object");
  const int kinds = layout.contains("image") + layout.contains("data") + layout.contains("prompt");
  if (kinds != 1) throw_invalid("layout needs exactly one of image, data, or prompt");
  if (layout.contains("image")) {
    reject_unknown(layout, {"image"}, "layout");
    return {{"image", absolute_path(layout.at("image"), "layout.image").string()}};
  }
  if (layout.contains("data")) {
    reject_unknown(layout, {"data", "index"}, "layout");
    const auto index = field<long long>(layout, "index", 0);
    if (index < 0) throw_invalid("layout.index must be >= 0");
    return {{"data", absolute_path(layout.at("data"), "layout.data").string()}, {"index", index}};
  }
  reject_unknown(layout, {"prompt"}, "layout");
  return {{"prompt", require_string(layout, "prompt")}};
}

void write_manifest(RunManifest& manifest, const fs::path& out) {
  manifest.save(out / kRunManifestName);
}

void write_png_output(RunManifest& m, const fs::path& out, const std::string& name, const SampleBatch& b,
                      std::size_t i) {
  write_file_atomic(out / name, sample_png(b, i));
  m.add_output(out, name);
}

void write_batch_array(RunManifest& m, const fs::path& out, const std::string& name,
                       const std::vector<SampleBatch>& samples) {
  FloatArray arr;
  const auto& shape = samples.front().shape();
  arr.dims = {samples.size(), static_cast<std::uint64_t>(shape.channels),
              static_cast<std::uint64_t>(shape.height), static_cast<std::uint64_t>(shape.width)};
  for (const auto& s : samples) {
    for (double v : s.values()) arr.values.push_back(static_cast<float>(v));
  }
  write_array(out / name, arr);
  m.add_output(out, name);
}

std::string cell_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cell_%03zu.png", i);
  return buf;
}

// ------------------------------------------------------------------ normalize

json normalize_gen_data(const json& doc) {
  reject_unknown(doc, {"shapes", "textures", "count_per_class", "seed", "image_size"}, "gen-data");
  return ShapesSpec::from_json(doc).to_json();
}

json normalize_train(const json& doc) {
  reject_unknown(doc, {"data", "train", "resume"}, "train");
  if (!doc.contains("data")) throw_invalid("train needs a data directory");
  const TrainConfig cfg = TrainConfig::from_json(field<json>(doc, "train", json::object()));
  return {{"data", absolute_path(doc.at("data"), "data").string()},
          {"train", cfg.to_json()},
          {"resume", field<bool>(doc, "resume", false)}};
}

json normalize_sample(const json& doc) {
  reject_unknown(doc, {"model", "prompt", "count", "steps", "eta", "guidance", "seed"}, "sample");
  const int count = field<int>(doc, "count", 8);
  const int steps = field<int>(doc, "steps", kDefaultInferenceSteps);
  const double eta = field<double>(doc, "eta", 0.0);
  if (count < 1 || count > 4096) throw_invalid("count must lie in [1, 4096]");
  if (steps < 1) throw_invalid("steps must be >= 1");
  if (!(eta >= 0.0 && eta <= 1.0)) throw_invalid("eta must lie in [0, 1]");
  if (!doc.contains("model")) throw_invalid("sample needs a model");
  return {{"model", absolute_path(doc.at("model"), "model").string()},
          {"prompt", field<std::string>(doc, "prompt", "<null>")},
          {"count", count},
          {"steps", steps},
          {"eta", eta},
          {"guidance", field<double>(doc, "guidance", 1.0)},
          {"seed", field<std::uint64_t>(doc, "seed", 0)}};
}

json normalize_mix(std::string_view command, const json& doc) {
  if (!doc.is_object()) throw_invalid("mix config must be an object");
  if (!doc.contains("model")) throw_invalid(std::string(command) + " needs a model");
  json copy = doc;
  copy["model"] = absolute_path(doc.at("model"), "model").string();
  if (command == "sweep" && (!doc.contains("axes") || !doc.at("axes").is_array() || doc.at("axes").empty())) {
    throw_invalid("sweep needs at least one axis");
  }
  if (command != "sweep" && doc.contains("axes")) throw_invalid("axes are only valid for sweep");
  if (command == "mix-tt" && !(doc.contains("layout") && doc.at("layout").contains("prompt"))) {
    throw_invalid("mix-tt needs a layout prompt");
  }
  if (command == "remove") {
    if (doc.contains("mode") && doc.at("mode") != "remove") throw_invalid("remove runs in remove mode");
    copy["mode"] = "remove";
  }
  MixRequest req = parse_mix_request(copy);
  json out = mix_request_json(req);
  out["model"] = copy["model"];
  return out;
}

json normalize_oracle_check(const json& doc) {
  reject_unknown(doc, {"world", "dimensions", "probes", "seed", "tolerance", "step", "schedule"}, "oracle-check");
  const auto probes = field<int>(doc, "probes", 1000);
  const double tol = field<double>(doc, "tolerance", 1e-4);
  const double step = field<double>(doc, "step", 1e-5);
  if (probes < 1) throw_invalid("probes must be >= 1");
  if (!(tol > 0.0) || !(step > 0.0)) throw_invalid("tolerance and step must be positive");
  json out = {{"probes", probes},
              {"seed", field<std::uint64_t>(doc, "seed", 0)},
              {"tolerance", tol},
              {"step", step},
              {"schedule", field<json>(doc, "schedule", NoiseSchedule(1000, ScheduleFamily::kCosine).describe())}};
  NoiseSchedule::from_description(out["schedule"]);
  if (doc.contains("world") && !doc.at("world").is_null()) {
    out["world"] = MixtureWorld::from_json(doc.at("world")).to_json();
  } else {
    const auto dims = field<std::vector<int>>(doc, "dimensions", {2, 8});
    if (dims.empty()) throw_invalid("dimensions must not be empty");
    for (int d : dims) {
      if (d < 1 || d > 64) throw_invalid("dimensions must lie in [1, 64]");
    }
    out["dimensions"] = dims;
  }
  return out;
}

json normalize_inspect(const json& doc) {
  reject_unknown(doc, {"target", "prompt", "t", "image"}, "inspect");
  if (!doc.contains("target")) throw_invalid("inspect needs a target");
  json out = {{"target", absolute_path(doc.at("target"), "target").string()}};
  if (doc.contains("prompt")) {
    out["prompt"] = require_string(doc, "prompt");
    out["t"] = field<int>(doc, "t", 500);
    if (doc.contains("image")) out["image"] = absolute_path(doc.at("image"), "image").string();
  } else if (doc.contains("t") || doc.contains("image")) {
    throw_invalid("t and image are only used together with prompt");
  }
  return out;
}

// ------------------------------------------------------------------ execute

RunOutcome run_gen_data(const json& cfg, const fs::path& out) {
  const ShapesSpec spec = ShapesSpec::from_json(cfg);
  const ShapesDataset data = generate_shapes(spec);
  save_dataset(data, out);
  RunManifest m;
  m.command = "gen-data";
  m.config = cfg;
  m.seeds = {spec.seed};
  for (const char* f : {"images.smxarr", "manifest.json", "prompts.tsv"}) m.add_output(out, f);
  return {m, {{"images", data.size()}, {"vocabulary", data.vocabulary.to_json()}}};
}

RunOutcome run_train(const json& cfg, const fs::path& out) {
  const fs::path data_dir = cfg.at("data").get<std::string>();
  require_file(data_dir / "images.smxarr", "dataset");
  const ShapesDataset data = load_dataset(data_dir);
  const TrainConfig tc = TrainConfig::from_json(cfg.at("train"));
  const fs::path ckpt_path = out / "model.ckpt";
  std::optional<ModelCheckpoint> resume;
  if (cfg.at("resume").get<bool>() && fs::exists(ckpt_path)) resume = load_checkpoint(ckpt_path);
  const TrainingData td{&data.images, &data.prompts, &data.vocabulary, data_fingerprint(data.images, data.prompts)};
  TrainHooks hooks;
  hooks.checkpoint_path = ckpt_path;
  hooks.log_path = out / "train_log.tsv";
  const ModelCheckpoint ckpt = train(td, tc, hooks, resume);
  RunManifest m;
  m.command = "train";
  m.config = cfg;
  m.seeds = {tc.seed};
  m.add_output(out, "model.ckpt");
  if (fs::exists(out / "train_log.tsv")) m.auxiliary.push_back("train_log.tsv");
  return {m, {{"step", ckpt.training.value("step", 0)}, {"loss", ckpt.training.value("loss", 0.0)},
              {"data_fingerprint", td.fingerprint}}};
}

RunOutcome run_sample(const json& cfg, const fs::path& out) {
  const LoadedModel lm = load_model(cfg.at("model").get<std::string>());
  const auto& model = *lm.model;
  const Prompt prompt = parse_prompt(cfg.at("prompt").get<std::string>(), model.vocabulary());
  const auto count = cfg.at("count").get<std::size_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const StepPlan plan = make_step_plan(model.schedule(), cfg.at("steps").get<int>(), cfg.at("eta").get<double>());
  std::vector<SampleBatch> samples;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<Rng> rngs{make_rng(seed, i)};
    samples.push_back(semmix::sample(model, prompt, plan, cfg.at("guidance").get<double>(), rngs, false).x0);
  }
  RunManifest m;
  m.command = "sample";
  m.config = cfg;
  m.checkpoint_sha256 = lm.sha256;
  m.seeds = {seed};
  write_batch_array(m, out, "samples.smxarr", samples);
  std::vector<std::span<const double>> cells;
  for (std::size_t i = 0; i < count; ++i) {
    write_png_output(m, out, cell_name(i), samples[i], 0);
    cells.push_back(samples[i].values());
  }
  const auto side = model.sample_shape().width;
  const int cols = static_cast<int>(std::min<std::size_t>(count, 8));
  const int rows = static_cast<int>((count + 7) / 8);
  const std::vector<double> blank(samples.front().values().size(), kBackgroundLevel);
  while (cells.size() < static_cast<std::size_t>(rows * cols)) cells.push_back(blank);
  write_file_atomic(out / "montage.png", encode_png(montage(cells, rows, cols, side)));
  m.add_output(out, "montage.png");
  return {m, {{"samples", count}}};
}

RunOutcome run_mix_like(std::string_view command, const json& cfg, const fs::path& out) {
  const LoadedModel lm = load_model(cfg.at("model").get<std::string>());
  const MixRequest req = parse_mix_request(cfg);
  const MixOutputs res = run_mix_request(*lm.model, req);
  RunManifest m;
  m.command = std::string(command);
  m.config = cfg;
  m.checkpoint_sha256 = lm.sha256;
  for (const auto& info : res.cell_info) m.seeds.push_back(info.at("seed").get<std::uint64_t>());
  write_batch_array(m, out, "output.smxarr", res.cells);
  json summary = {{"cells", res.cells.size()}, {"rows", res.rows}, {"columns", res.columns}};
  if (command == "sweep") {
    for (std::size_t i = 0; i < res.cells.size(); ++i) write_png_output(m, out, cell_name(i), res.cells[i], 0);
    std::vector<std::span<const double>> spans;
    for (const auto& c : res.cells) spans.push_back(c.values());
    const auto side = lm.model->sample_shape().width;
    write_file_atomic(out / "montage.png",
                      encode_png(montage(spans, static_cast<int>(res.rows), static_cast<int>(res.columns), side,
                                         res.labels)));
    m.add_output(out, "montage.png");
    write_file_atomic(out / "cells.json", json(res.cell_info).dump(2) + "\n");
    m.add_output(out, "cells.json");
  } else {
    write_png_output(m, out, "output.png", res.cells[0], 0);
    summary["config"] = res.cell_info[0];
  }
  m.auxiliary.push_back("timings.json");
  write_file_atomic(out / "timings.json", json{{"wall_seconds", res.wall_seconds}}.dump() + "\n");
  return {m, summary};
}

RunOutcome run_oracle_check(const json& cfg, const fs::path& out) {
  const NoiseSchedule sched = NoiseSchedule::from_description(cfg.at("schedule"));
  const auto probes = cfg.at("probes").get<std::size_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const double step = cfg.at("step").get<double>();
  json worlds = json::array();
  double worst = 0.0;
  if (cfg.contains("world")) {
    const auto r = score_fd_check(MixtureWorld::from_json(cfg.at("world")), sched, probes, seed, step);
    worst = r.max_error;
    worlds.push_back(r.to_json());
  } else {
    for (int dim : cfg.at("dimensions").get<std::vector<int>>()) {
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(dim));
      const auto r = score_fd_check(random_world(dim, rng), sched, probes, seed, step);
      json j = r.to_json();
      j["dimension"] = dim;
      worlds.push_back(j);
      worst = std::max(worst, r.max_error);
    }
  }
  const double tol = cfg.at("tolerance").get<double>();
  const json report = {{"max_error", worst}, {"tolerance", tol}, {"pass", worst <= tol}, {"worlds", worlds}};
  RunManifest m;
  m.command = "oracle-check";
  m.config = cfg;
  m.seeds = {seed};
  write_file_atomic(out / "report.json", report.dump(2) + "\n");
  m.add_output(out, "report.json");
  return {m, report};
}

json inspect_checkpoint(const fs::path& p) {
  const ModelCheckpoint ckpt = load_checkpoint(p);
  std::size_t params = 0;
  for (const auto& b : ckpt.weights) params += b.size();
  return {{"kind", "checkpoint"},
          {"sha256", sha256_file(p)},
          {"architecture", ckpt.architecture.to_json()},
          {"schedule", ckpt.schedule},
          {"vocabulary", ckpt.vocabulary.to_json()},
          {"training", ckpt.training},
          {"parameters", params},
          {"has_ema", ckpt.ema_weights.has_value()},
          {"has_optimizer", ckpt.optimizer.has_value()}};
}

RunOutcome run_inspect(const json& cfg, const fs::path& out) {
  const fs::path target = cfg.at("target").get<std::string>();
  require_file(target, "inspect target");
  json info;
  RunManifest m;
  m.command = "inspect";
  m.config = cfg;
  if (fs::is_directory(target)) {
    const ShapesDataset data = load_dataset(target);
    info = {{"kind", "dataset"}, {"manifest", data.manifest()}, {"images", data.size()},
            {"fingerprint", data_fingerprint(data.images, data.prompts)}};
  } else if (target.extension() == ".ckpt") {
    info = inspect_checkpoint(target);
    m.checkpoint_sha256 = info.at("sha256");
    if (cfg.contains("prompt")) {
      const LoadedModel lm = load_model(target);
      const auto& model = *lm.model;
      const int side = model.sample_shape().width;
      const int t = cfg.at("t").get<int>();
      const Prompt prompt = parse_prompt(cfg.at("prompt").get<std::string>(), model.vocabulary());
      SampleBatch x0 = cfg.contains("image") ? load_png_sample(cfg.at("image").get<std::string>(), side)
                                             : SampleBatch(SampleShape::image(side), 1);
      SampleBatch x_t = x0;
      for (double& v : x_t.values()) v *= model.schedule().alpha(t);
      AttentionCapture cap;
      model.predict_eps_with_attention(x_t, t, std::span(&prompt, 1), cap);
      json layers = json::array();
      for (const auto& layer : cap.weighted[0]) {
        const int n = static_cast<int>(std::lround(std::sqrt(layer.n_image())));
        for (int j = 0; j < layer.n_text(); ++j) {
          const Eigen::VectorXd col = layer.maps.col(j);
          const double lo = col.minCoeff(), hi = col.maxCoeff();
          std::vector<double> img(static_cast<std::size_t>(col.size()));
          for (Eigen::Index r = 0; r < col.size(); ++r) {
            img[static_cast<std::size_t>(r)] = hi > lo ? 2.0 * (col[r] - lo) / (hi - lo) - 1.0 : 0.0;
          }
          const std::string name = "attention_l" + std::to_string(layer.layer) + "_tok" + std::to_string(j) + ".png";
          write_file_atomic(out / name, encode_png(to_gray(img, n, n)));
          m.add_output(out, name);
          layers.push_back({{"layer", layer.layer}, {"token", j}, {"word", model.vocabulary().word(prompt.tokens[static_cast<std::size_t>(j)])},
                            {"mean", col.mean()}, {"min", lo}, {"max", hi}, {"file", name}});
        }
      }
      info["attention"] = layers;
    }
  } else if (target.extension() == ".smxarr") {
    const FloatArray a = read_array(target);
    info = {{"kind", "array"}, {"dims", a.dims}};
  } else if (target.extension() == ".json") {
    const RunManifest rm = RunManifest::load(target);
    info = {{"kind", "run_manifest"}, {"manifest", rm.to_json()}};
  } else if (target.extension() == ".png") {
    const GrayImage img = read_png(target);
    info = {{"kind", "png"}, {"width", img.width}, {"height", img.height}};
  } else {
    throw_invalid("cannot inspect " + target.string());
  }
  write_file_atomic(out / "inspect.json", info.dump(2) + "\n");
  m.add_output(out, "inspect.json");
  return {m, info};
}

}  // namespace

const std::vector<std::string>& run_commands() {
  static const std::vector<std::string> names{"gen-data", "train", "sample", "mix", "mix-tt",
                                              "remove", "sweep", "inspect", "oracle-check"};
  return names;
}

json normalize_config(std::string_view command, const json& doc) {
  if (command == "gen-data") return normalize_gen_data(doc);
  if (command == "train") return normalize_train(doc);
  if (command == "sample") return normalize_sample(doc);
  if (command == "mix" || command == "mix-tt" || command == "remove" || command == "sweep") {
    return normalize_mix(command, doc);
  }
  if (command == "oracle-check") return normalize_oracle_check(doc);
  if (command == "inspect") return normalize_inspect(doc);
  throw_invalid("unknown command '" + std::string(command) + "'");
}

RunOutcome execute(std::string_view command, const json& config, const fs::path& out) {
  const json cfg = normalize_config(command, config);
  fs::create_directories(out);
  RunOutcome r;
  if (command == "gen-data") r = run_gen_data(cfg, out);
  else if (command == "train") r = run_train(cfg, out);
  else if (command == "sample") r = run_sample(cfg, out);
  else if (command == "oracle-check") r = run_oracle_check(cfg, out);
  else if (command == "inspect") r = run_inspect(cfg, out);
  else r = run_mix_like(command, cfg, out);
  write_manifest(r.manifest, out);
  return r;
}

json ReplayReport::to_json() const {
  return {{"command", command}, {"matched", matched}, {"mismatched", mismatched}, {"ok", ok()}};
}

ReplayReport replay(const fs::path& manifest_path, const fs::path& out) {
  require_file(manifest_path, "run manifest");
  const RunManifest recorded = RunManifest::load(manifest_path);
  if (fs::exists(out) && fs::equivalent(out, manifest_path.parent_path())) {
    throw_invalid("replay output directory must differ from the recorded run");
  }
  const RunOutcome again = execute(recorded.command, recorded.config, out);
  ReplayReport rep;
  rep.command = recorded.command;
  std::map<std::string, std::string> fresh;
  for (const auto& o : again.manifest.outputs) fresh[o.path] = o.sha256;
  for (const auto& o : recorded.outputs) {
    const auto it = fresh.find(o.path);
    (it != fresh.end() && it->second == o.sha256 ? rep.matched : rep.mismatched).push_back(o.path);
  }
  if (!recorded.checkpoint_sha256.empty() && recorded.checkpoint_sha256 != again.manifest.checkpoint_sha256) {
    rep.mismatched.push_back("checkpoint");
  }
  return rep;
}

LoadedModel load_model(const fs::path& path) {
  require_file(path, "checkpoint");
  LoadedModel lm;
  lm.path = fs::absolute(path).lexically_normal();
  lm.sha256 = sha256_file(path);
  lm.model = std::make_shared<const UNetDenoiser>(load_checkpoint(path));
  return lm;
}

MixRequest parse_mix_request(const json& doc) {
  if (!doc.is_object()) throw_invalid("mix request must be an object");
  MixRequest req;
  json mix_fields = json::object();
  for (const auto& [key, value] : doc.items()) {
    if (std::find(std::begin(kMixConfigKeys), std::end(kMixConfigKeys), key) != std::end(kMixConfigKeys)) {
      mix_fields[key] = value;
    } else if (key == "content") {
      req.content = require_string(doc, "content");
    } else if (key == "layout") {
      req.layout = normalize_layout(value);
    } else if (key == "mode") {
      req.mode = require_string(doc, "mode");
    } else if (key == "workers") {
      req.workers = field<int>(doc, "workers", 1);
    } else if (key == "axes") {
      if (!value.is_array()) throw_invalid("axes must be a list");
      for (const auto& ax : value) {
        if (!ax.is_object() || !ax.contains("param") || !ax.contains("values")) {
          throw_invalid("each axis needs param and values");
        }
        reject_unknown(ax, {"param", "values"}, "axis");
        SweepAxis a;
        a.param = sweep_param_from_string(require_string(ax, "param"));
        if (ax.at("values").is_string()) {
          a.values = parse_sweep_values(ax.at("values").get<std::string>());
        } else {
          a.values = field<std::vector<double>>(ax, "values", {});
        }
        if (a.values.empty()) throw_invalid("axis '" + std::string(to_string(a.param)) + "' is empty");
        for (const auto& prev : req.axes) {
          if (prev.param == a.param) throw_invalid("axis '" + std::string(to_string(a.param)) + "' repeated");
        }
        req.axes.push_back(std::move(a));
      }
    } else if (key != "model") {
      throw_invalid("unknown mix field '" + key + "'");
    }
  }
  req.config = MixConfig::from_json(mix_fields);
  if (req.content.empty()) throw_invalid("content prompt is required");
  if (req.layout.is_null()) throw_invalid("layout source is required");
  if (req.mode != "mix" && req.mode != "conditional" && req.mode != "remove") {
    throw_invalid("mode must be mix, conditional, or remove");
  }
  if (req.mode == "remove" && req.layout.contains("prompt")) throw_invalid("removal needs an image layout");
  if (req.workers < 1 || req.workers > 64) throw_invalid("workers must lie in [1, 64]");
  if (req.axes.size() > 2) throw_invalid("at most two sweep axes (rows, columns)");
  return req;
}

json mix_request_json(const MixRequest& req) {
  json out = req.config.to_json();
  out["content"] = req.content;
  out["layout"] = req.layout;
  out["mode"] = req.mode;
  if (!req.axes.empty()) {
    json axes = json::array();
    for (const auto& a : req.axes) axes.push_back({{"param", to_string(a.param)}, {"values", a.values}});
    out["axes"] = axes;
    out["workers"] = req.workers;
  }
  return out;
}

LayoutSource resolve_layout(const json& layout, const Denoiser& model) {
  const int side = model.sample_shape().width;
  LayoutSource src;
  if (layout.contains("prompt")) {
    src.prompt = parse_prompt(layout.at("prompt").get<std::string>(), model.vocabulary());
  } else if (layout.contains("image")) {
    src.image = load_png_sample(layout.at("image").get<std::string>(), side);
  } else {
    const fs::path dir = layout.at("data").get<std::string>();
    require_file(dir / "images.smxarr", "dataset");
    const FloatArray arr = read_array(dir / "images.smxarr");
    const auto index = layout.at("index").get<std::uint64_t>();
    if (arr.dims.size() != 4 || arr.dims[2] != static_cast<std::uint64_t>(side) ||
        arr.dims[3] != static_cast<std::uint64_t>(side) || arr.dims[1] != 1) {
      throw_invalid("dataset images do not match the model sample shape");
    }
    if (index >= arr.dims[0]) throw_not_found("dataset index " + std::to_string(index) + " out of range");
    const auto plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    const auto first = arr.values.begin() + static_cast<std::ptrdiff_t>(index * plane);
    src.image = SampleBatch::single(SampleShape::image(side), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(plane)));
  }
  return src;
}

namespace {

MixResult run_one(const Denoiser& model, const LayoutSource& layout, const Prompt& content,
                  const MixConfig& cfg, const std::string& mode) {
  if (mode == "mix") return run_single_mix(model, layout, content, cfg);
  std::vector<Rng> rngs{make_rng(cfg.seed, 0)};
  if (mode == "remove") return remove_concept(model, *layout.image, content, cfg, rngs);
  // Plain conditional generation from the layout state at K_max.
  cfg.validate();
  const Trajectory traj = layout.image
                              ? layout_noises_from_image(&model, model.schedule(), *layout.image, cfg, rngs)
                              : layout_noises_from_prompt(model, *layout.prompt, cfg, rngs);
  const StepPlan plan = make_step_plan(model.schedule(), cfg.steps, cfg.eta);
  const int k_max = traj.indices.front();
  MixResult r;
  r.output = denoise(model, traj.at(k_max), k_max, content, plan, cfg.guidance, rngs, false).x0;
  r.layout = traj;
  r.config = cfg;
  return r;
}

std::string axis_label(SweepParam p, double v) {
  std::ostringstream s;
  s << to_string(p) << '=' << v;
  return s.str();
}

}  // namespace

MixOutputs run_mix_request(const Denoiser& model, const MixRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  const LayoutSource layout = resolve_layout(req.layout, model);
  const Prompt content = parse_prompt(req.content, model.vocabulary());
  validate_prompt(content, model.vocabulary());
  MixOutputs out;
  auto echo = [&](const MixConfig& cfg, const Prompt& p) {
    json j = cfg.to_json();
    j["content"] = format_prompt(p, model.vocabulary());
    j["mode"] = req.mode;
    return j;
  };
  if (req.axes.empty()) {
    const MixResult r = run_one(model, layout, content, req.config, req.mode);
    out.cells.push_back(r.output);
    out.cell_info.push_back(echo(req.config, content));
  } else {
    if (req.mode != "mix") throw_invalid("sweeps run in mix mode");
    const SweepResult grid = sweep(model, layout, content, req.config, req.axes, req.workers);
    out.rows = grid.rows();
    out.columns = grid.columns();
    for (const auto& cell : grid.cells) {
      out.cells.push_back(cell.result.output);
      json info = echo(cell.config, cell.content);
      info["index"] = cell.index;
      info["coords"] = cell.coords;
      out.cell_info.push_back(info);
      std::vector<std::string> label;
      for (std::size_t a = 0; a < grid.axes.size(); ++a) {
        label.push_back(axis_label(grid.axes[a].param, grid.axes[a].values[cell.coords[a]]));
      }
      out.labels.push_back(label);
    }
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::string sample_png(const SampleBatch& batch, std::size_t index) {
  const auto& shape = batch.shape();
  if (shape.channels != 1) throw_invalid("PNG export needs single-channel samples");
  return encode_png(to_gray(batch.sample(index), shape.width, shape.height));
}

}  // namespace semmix::tools
