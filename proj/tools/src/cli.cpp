// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/tools/cli.hpp"

#include <functional>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "semmix/manifest.hpp"
#include "semmix/tools/service.hpp"
#include "semmix/tools/workflows.hpp"

namespace semmix::tools {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidConfig: return kExitInvalidConfig;
    case ErrorCategory::kNotFound: return kExitNotFound;
    case ErrorCategory::kIo: return kExitIo;
    case ErrorCategory::kNumeric: return kExitNumeric;
    case ErrorCategory::kCheckFailed: return kExitCheckFailed;
    case ErrorCategory::kCapacity: return kExitCapacity;
    case ErrorCategory::kInternal: return kExitInternal;
  }
  return kExitInternal;
}

namespace {

void report_error(std::ostream& err, std::string_view category, const std::string& message) {
  err << json{{"error", {{"category", category}, {"message", message}}}}.dump() << "\n";
}

/// Flag values that were given on the command line, applied over the config
/// document in declaration order.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flags, std::vector<std::string> path,
                   const std::string& help) {
    auto value = std::make_shared<std::optional<T>>();
    auto* opt = app->add_option(flags, *value, help);
    appliers_.push_back([value, path](json& doc) {
      if (!value->has_value()) return;
      json* node = &doc;
      for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!node->contains(path[i]) || !(*node)[path[i]].is_object()) (*node)[path[i]] = json::object();
        node = &(*node)[path[i]];
      }
      (*node)[path.back()] = **value;
    });
    return opt;
  }

  void add_flag(CLI::App* app, const std::string& flags, std::vector<std::string> path, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    app->add_flag(flags, *value, help);
    appliers_.push_back([value, path](json& doc) {
      if (*value) doc[path.front()] = true;
    });
  }

  void apply(json& doc) const {
    for (const auto& f : appliers_) f(doc);
  }

 private:
  std::vector<std::function<void(json&)>> appliers_;
};

struct RunCommand {
  CLI::App* app = nullptr;
  std::string name;
  Overrides overrides;
  std::string config_path;
  std::string out_dir;
  std::function<void(json&)> finish;  // command-specific post-processing
};

void add_common(RunCommand& cmd) {
  cmd.app->add_option("--config", cmd.config_path, "JSON config document; flags override its fields")
      ->check(CLI::ExistingFile);
  cmd.app->add_option("--out", cmd.out_dir, "Output directory")->required();
}

void add_mix_config_flags(RunCommand& cmd, bool with_values) {
  auto* a = cmd.app;
  auto& o = cmd.overrides;
  o.add<std::string>(a, "--model", {"model"}, "Checkpoint file");
  o.add<std::string>(a, "--content", {"content"}, "Content prompt, e.g. \"striped\" or \"striped:-1\"");
  o.add<std::string>(a, "--image", {"layout", "image"}, "Layout image (PNG)");
  o.add<std::string>(a, "--data", {"layout", "data"}, "Dataset directory for --index");
  o.add<long long>(a, "--index", {"layout", "index"}, "Layout image index in --data");
  o.add<std::string>(a, "--layout-prompt", {"layout", "prompt"}, "Layout prompt (text-text mixing)");
  if (with_values) {
    o.add<double>(a, "--nu", {"nu"}, "Mixing constant in [0, 1]");
    o.add<double>(a, "--kmin", {"kmin"}, "Lower window fraction of T");
    o.add<double>(a, "--kmax", {"kmax"}, "Upper window fraction of T");
  }
  o.add<double>(a, "--guidance", {"guidance"}, "Guidance weight");
  o.add<int>(a, "--steps", {"steps"}, "Inference steps");
  o.add<double>(a, "--eta", {"eta"}, "Stochasticity (0 = deterministic)");
  o.add<std::uint64_t>(a, "--seed", {"seed"}, "Seed");
  o.add<std::string>(a, "--layout-noise-mode,--layout_noise_mode", {"layout_noise_mode"},
                     "shared-eps or ddim-inversion");
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json doc = json::parse(read_file(path));
    if (!doc.is_object()) throw_invalid("config document must be a JSON object");
    return doc;
  } catch (const json::exception& e) {
    throw_invalid("config document " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"semmix: semantic mixing with a toy conditional diffusion model", "semmix"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(code_version()));

  std::vector<std::unique_ptr<RunCommand>> commands;
  auto make = [&](const std::string& name, const std::string& help) -> RunCommand& {
    auto cmd = std::make_unique<RunCommand>();
    cmd->name = name;
    cmd->app = app.add_subcommand(name, help);
    add_common(*cmd);
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  {
    auto& c = make("gen-data", "Generate the synthetic shapes dataset");
    c.overrides.add<std::vector<std::string>>(c.app, "--shapes", {"shapes"}, "Shape classes")->delimiter(',');
    c.overrides.add<std::vector<std::string>>(c.app, "--textures", {"textures"}, "Textures")->delimiter(',');
    c.overrides.add<int>(c.app, "--count-per-class", {"count_per_class"}, "Images per shape/texture pair");
    c.overrides.add<std::uint64_t>(c.app, "--seed", {"seed"}, "Generator seed");
    c.overrides.add<int>(c.app, "--image-size", {"image_size"}, "Image side in pixels");
  }
  {
    auto& c = make("train", "Train the conditional denoiser");
    auto& o = c.overrides;
    o.add<std::string>(c.app, "--data", {"data"}, "Dataset directory");
    o.add<int>(c.app, "--steps", {"train", "steps"}, "Optimizer steps");
    o.add<int>(c.app, "--batch-size", {"train", "batch_size"}, "Batch size");
    o.add<double>(c.app, "--learning-rate", {"train", "learning_rate"}, "Adam learning rate");
    o.add<double>(c.app, "--prompt-dropout", {"train", "prompt_dropout"}, "Probability of the NULL prompt");
    o.add<double>(c.app, "--token-dropout", {"train", "token_dropout"}, "Probability of dropping one concept");
    o.add<double>(c.app, "--ema-decay", {"train", "ema_decay"}, "EMA decay (0 disables)");
    o.add<std::uint64_t>(c.app, "--seed", {"train", "seed"}, "Seed");
    o.add<int>(c.app, "--checkpoint-every", {"train", "checkpoint_every"}, "Checkpoint cadence");
    o.add<int>(c.app, "--log-every", {"train", "log_every"}, "Log cadence");
    o.add<int>(c.app, "--schedule-steps", {"train", "schedule", "steps"}, "Diffusion steps T");
    o.add<std::string>(c.app, "--schedule", {"train", "schedule", "family"}, "cosine or linear");
    o.add_flag(c.app, "--resume", {"resume"}, "Continue from <out>/model.ckpt when present");
  }
  {
    auto& c = make("sample", "Draw conditional samples");
    auto& o = c.overrides;
    o.add<std::string>(c.app, "--model", {"model"}, "Checkpoint file");
    o.add<std::string>(c.app, "--prompt", {"prompt"}, "Prompt (\"<null>\" for unconditional)");
    o.add<int>(c.app, "--count", {"count"}, "Number of samples");
    o.add<int>(c.app, "--steps", {"steps"}, "Inference steps");
    o.add<double>(c.app, "--eta", {"eta"}, "Stochasticity");
    o.add<double>(c.app, "--guidance", {"guidance"}, "Guidance weight");
    o.add<std::uint64_t>(c.app, "--seed", {"seed"}, "Seed");
  }
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"mix", "Image-text (or text-text) semantic mixing"},
           {"mix-tt", "Text-text semantic mixing"},
           {"remove", "Concept removal with a negatively scaled token"}}) {
    auto& c = make(name, help);
    add_mix_config_flags(c, true);
    if (name == "mix") c.overrides.add<std::string>(c.app, "--mode", {"mode"}, "mix or conditional");
  }
  std::string axes_order;
  {
    auto& c = make("sweep", "Grid of mixes over nu, kmin, kmax, and token scale s");
    add_mix_config_flags(c, false);
    auto& o = c.overrides;
    o.add<std::string>(c.app, "--nu", {"sweep_axes", "nu"}, "Values: lo:hi:step or a comma list");
    o.add<std::string>(c.app, "--kmin", {"sweep_axes", "kmin"}, "Values for kmin");
    o.add<std::string>(c.app, "--kmax", {"sweep_axes", "kmax"}, "Values for kmax");
    o.add<std::string>(c.app, "--s", {"sweep_axes", "s"}, "Values for the content token scale");
    o.add<int>(c.app, "--workers", {"workers"}, "Worker threads");
    c.app->add_option("--axes", axes_order, "Axis order, rows first (default kmax,kmin,s,nu)");
    c.finish = [&axes_order](json& doc) {
      if (!doc.contains("sweep_axes")) return;
      const json given = doc["sweep_axes"];
      doc.erase("sweep_axes");
      std::vector<std::string> order{"kmax", "kmin", "s", "nu"};
      if (!axes_order.empty()) {
        order.clear();
        std::stringstream ss(axes_order);
        for (std::string item; std::getline(ss, item, ',');) order.push_back(item);
      }
      json axes = doc.value("axes", json::array());
      for (const auto& name : order) {
        if (!given.contains(name)) {
          if (!axes_order.empty()) throw_invalid("--axes names '" + name + "' without values");
          continue;
        }
        axes.push_back({{"param", name}, {"values", parse_sweep_values(given[name].get<std::string>())}});
      }
      if (axes.size() < given.size()) throw_invalid("--axes must list every swept parameter");
      doc["axes"] = axes;
    };
  }
  {
    auto& c = make("inspect", "Describe a checkpoint, dataset, array, PNG, or run manifest");
    auto& o = c.overrides;
    o.add<std::string>(c.app, "--target", {"target"}, "File or dataset directory");
    o.add<std::string>(c.app, "--prompt", {"prompt"}, "Dump attention maps for this prompt (checkpoints)");
    o.add<int>(c.app, "--t", {"t"}, "Timestep for attention maps");
    o.add<std::string>(c.app, "--image", {"image"}, "Clean image noised to t for attention maps");
  }
  {
    auto& c = make("oracle-check", "Check the oracle score against finite differences");
    auto& o = c.overrides;
    o.add<int>(c.app, "--probes", {"probes"}, "Random probes per world");
    o.add<std::uint64_t>(c.app, "--seed", {"seed"}, "Seed");
    o.add<double>(c.app, "--tolerance", {"tolerance"}, "Maximum allowed error");
    o.add<std::vector<int>>(c.app, "--dimensions", {"dimensions"}, "Random world dimensions")->delimiter(',');
  }

  std::string replay_manifest, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a recorded command and compare output hashes");
  replay_cmd->add_option("--manifest", replay_manifest, "run_manifest.json of the recorded run")->required();
  replay_cmd->add_option("--out", replay_out, "Fresh output directory")->required();

  ServiceOptions sopt;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP job service");
  serve_cmd->add_option("--models", sopt.models_dir, "Directory of *.ckpt files")->required();
  serve_cmd->add_option("--datasets", sopt.data_dir, "Directory of dataset directories");
  serve_cmd->add_option("--jobs", sopt.jobs_dir, "Job and upload store")->required();
  serve_cmd->add_option("--workers", sopt.workers, "Worker threads");
  serve_cmd->add_option("--queue", sopt.queue_capacity, "Maximum queued jobs");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << code_version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    report_error(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (replay_cmd->parsed()) {
      const ReplayReport rep = replay(replay_manifest, replay_out);
      out << rep.to_json().dump() << "\n";
      if (!rep.ok()) {
        report_error(err, "check_failed", "replayed outputs differ from the manifest");
        return kExitCheckFailed;
      }
      return kExitOk;
    }
    if (serve_cmd->parsed()) return serve(sopt, host, port);
    for (const auto& cmd : commands) {
      if (!cmd->app->parsed()) continue;
      json doc = load_config(cmd->config_path);
      cmd->overrides.apply(doc);
      if (cmd->finish) cmd->finish(doc);
      const RunOutcome r = execute(cmd->name, doc, cmd->out_dir);
      out << json{{"command", cmd->name}, {"out", fs::absolute(cmd->out_dir).string()}, {"summary", r.summary}}.dump()
          << "\n";
      if (cmd->name == "oracle-check" && !r.summary.at("pass").get<bool>()) {
        report_error(err, "check_failed", "oracle score error above tolerance");
        return kExitCheckFailed;
      }
      return kExitOk;
    }
  } catch (const Error& e) {
    report_error(err, category_name(e.category()), e.what());
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return kExitInternal;
  }
  report_error(err, "usage", "no command given");
  return kExitUsage;
}

}  // namespace semmix::tools
