// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "semmix/error.hpp"
#include "semmix/manifest.hpp"

namespace semmix {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kFormat = "semmix-checkpoint";
constexpr int kVersion = 1;

nlohmann::json blob_entry(const std::string& group, const std::string& name, std::size_t size) {
  return {{"group", group}, {"name", name}, {"size", size}};
}

}  // namespace

WeightSet export_weights(const UNet<float>& net) {
  WeightSet out;
  for (const auto* p : net.parameters()) {
    out.emplace_back(p->value.data(), p->value.data() + p->value.size());
  }
  return out;
}

void import_weights(UNet<float>& net, const WeightSet& weights) {
  auto& params = net.parameters();
  if (weights.size() != params.size()) throw_invalid("checkpoint blob count does not match architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (weights[i].size() != params[i]->size()) {
      throw_invalid("checkpoint blob '" + params[i]->name + "' has the wrong size");
    }
    std::memcpy(params[i]->value.data(), weights[i].data(), weights[i].size() * sizeof(float));
  }
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  UNet<float> probe(ckpt.architecture);
  const auto params = probe.parameters();
  if (ckpt.weights.size() != params.size()) throw_invalid("checkpoint weights do not match architecture");

  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["architecture"] = ckpt.architecture.to_json();
  header["schedule"] = ckpt.schedule;
  header["vocabulary"] = ckpt.vocabulary.to_json();
  header["training"] = ckpt.training;
  header["rng_state"] = ckpt.rng_state;
  nlohmann::json blobs = nlohmann::json::array();
  std::vector<const std::vector<float>*> payload;
  auto add_group = [&](const std::string& group, const WeightSet& set) {
    if (set.size() != params.size()) throw_invalid("checkpoint group '" + group + "' is incomplete");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (set[i].size() != params[i]->size()) {
        throw_invalid("checkpoint blob '" + params[i]->name + "' has the wrong size");
      }
      blobs.push_back(blob_entry(group, params[i]->name, set[i].size()));
      payload.push_back(&set[i]);
    }
  };
  add_group("weights", ckpt.weights);
  if (ckpt.ema_weights) add_group("ema", *ckpt.ema_weights);
  if (ckpt.optimizer) {
    header["optimizer_step"] = ckpt.optimizer->step;
    add_group("adam_m", ckpt.optimizer->first_moment);
    add_group("adam_v", ckpt.optimizer->second_moment);
  }
  header["blobs"] = std::move(blobs);

  const std::string text = header.dump();
  std::string bytes;
  const std::uint64_t len = text.size();
  bytes.append(reinterpret_cast<const char*>(&len), sizeof(len));
  bytes += text;
  for (const auto* blob : payload) {
    bytes.append(reinterpret_cast<const char*>(blob->data()), blob->size() * sizeof(float));
  }
  write_file_atomic(path, bytes);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_not_found("checkpoint not found: " + path.string());
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof(len)) || len > (1u << 26)) {
    throw_io("malformed checkpoint header in " + path.string());
  }
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw_io("truncated checkpoint header in " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw_io("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != kVersion) {
    throw_io("unsupported checkpoint format in " + path.string());
  }

  ModelCheckpoint ckpt;
  ckpt.architecture = UNetConfig::from_json(header.at("architecture"));
  ckpt.schedule = header.at("schedule");
  ckpt.vocabulary = Vocabulary::from_json(header.at("vocabulary"));
  ckpt.training = header.value("training", nlohmann::json::object());
  ckpt.rng_state = header.value("rng_state", "");

  WeightSet weights, ema, adam_m, adam_v;
  for (const auto& entry : header.at("blobs")) {
    std::vector<float> blob(entry.at("size").get<std::size_t>());
    if (!in.read(reinterpret_cast<char*>(blob.data()),
                 static_cast<std::streamsize>(blob.size() * sizeof(float)))) {
      throw_io("truncated checkpoint blob '" + entry.at("name").get<std::string>() + "'");
    }
    const auto group = entry.at("group").get<std::string>();
    if (group == "weights") weights.push_back(std::move(blob));
    else if (group == "ema") ema.push_back(std::move(blob));
    else if (group == "adam_m") adam_m.push_back(std::move(blob));
    else if (group == "adam_v") adam_v.push_back(std::move(blob));
    else throw_io("unknown checkpoint blob group '" + group + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw_io("trailing bytes in checkpoint " + path.string());

  // Validates blob sizes against the descriptor.
  UNet<float> probe(ckpt.architecture);
  import_weights(probe, weights);
  if (!ema.empty()) import_weights(probe, ema);
  ckpt.weights = std::move(weights);
  if (!ema.empty()) ckpt.ema_weights = std::move(ema);
  if (!adam_m.empty()) {
    import_weights(probe, adam_m);
    import_weights(probe, adam_v);
    ckpt.optimizer = OptimizerState{header.value("optimizer_step", std::int64_t{0}), std::move(adam_m),
                                    std::move(adam_v)};
  }
  return ckpt;
}

// ---------------------------------------------------------------- UNetDenoiser

UNetDenoiser::UNetDenoiser(const ModelCheckpoint& ckpt)
    : UNetDenoiser(ckpt.architecture, NoiseSchedule::from_description(ckpt.schedule), ckpt.vocabulary,
                   ckpt.inference_weights()) {}

UNetDenoiser::UNetDenoiser(const UNetConfig& config, const NoiseSchedule& sched, Vocabulary vocab,
                           const WeightSet& weights)
    : schedule_(sched), vocab_(std::move(vocab)), net_(std::make_unique<UNet<float>>(config)) {
  if (static_cast<std::size_t>(config.vocab_size) != vocab_.size()) {
    throw_invalid("architecture vocabulary size does not match the vocabulary");
  }
  import_weights(*net_, weights);
}

SampleShape UNetDenoiser::sample_shape() const {
  const auto& c = net_->config();
  return {c.in_channels, c.image_size, c.image_size};
}

SampleBatch UNetDenoiser::predict_eps(const SampleBatch& x_t, int t,
                                      std::span<const Prompt> prompts) const {
  return run(x_t, t, prompts, nullptr);
}

SampleBatch UNetDenoiser::predict_eps_with_attention(const SampleBatch& x_t, int t,
                                                     std::span<const Prompt> prompts,
                                                     AttentionCapture& capture) const {
  return run(x_t, t, prompts, &capture);
}

SampleBatch UNetDenoiser::run(const SampleBatch& x_t, int t, std::span<const Prompt> prompts,
                              AttentionCapture* capture) const {
  check_predict_args(*this, x_t, t, prompts);
  const auto shape = x_t.shape();
  const int n = static_cast<int>(x_t.count());
  nn::Tensor<float> x(shape.channels, n, shape.height, shape.width);
  const std::size_t plane = x.plane();
  for (int b = 0; b < n; ++b) {
    const auto s = x_t.sample(static_cast<std::size_t>(b));
    for (int c = 0; c < shape.channels; ++c) {
      float* dst = x.plane_ptr(c, b);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(s[c * plane + i]);
    }
  }
  std::vector<Prompt> expanded;
  if (prompts.size() == 1) expanded.assign(static_cast<std::size_t>(n), prompts[0]);
  else expanded.assign(prompts.begin(), prompts.end());
  const std::vector<double> steps(static_cast<std::size_t>(n), static_cast<double>(t));
  const nn::Tensor<float> y = net_->forward(x, steps, expanded, nullptr, capture);

  SampleBatch out(shape, x_t.count());
  for (int b = 0; b < n; ++b) {
    auto s = out.sample(static_cast<std::size_t>(b));
    for (int c = 0; c < shape.channels; ++c) {
      const float* src = y.plane_ptr(c, b);
      for (std::size_t i = 0; i < plane; ++i) s[c * plane + i] = src[i];
    }
  }
  if (!out.all_finite()) throw_numeric("network produced non-finite output");
  return out;
}

}  // namespace semmix
