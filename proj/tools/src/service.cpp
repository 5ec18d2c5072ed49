// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/tools/service.hpp"

#include <csignal>
#include <iostream>

#include <httplib.h>

#include "semmix/error.hpp"
#include "semmix/image_io.hpp"
#include "semmix/shapes.hpp"

namespace semmix::tools {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(JobState state) {
  switch (state) {
    case JobState::kQueued: return "queued";
    case JobState::kRunning: return "running";
    case JobState::kDone: return "done";
    case JobState::kFailed: return "failed";
  }
  return "failed";
}

namespace {

JobState job_state_from_string(std::string_view s) {
  for (auto st : {JobState::kQueued, JobState::kRunning, JobState::kDone, JobState::kFailed}) {
    if (to_string(st) == s) return st;
  }
  throw_invalid("unknown job state '" + std::string(s) + "'");
}

bool safe_name(std::string_view name) {
  if (name.empty() || name.size() > 128 || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

const std::string kMixFields[] = {"kmax", "kmin", "nu", "guidance", "steps", "eta", "seed", "layout_noise_mode"};

std::vector<FieldError> field_errors(const json& body, const Denoiser* model) {
  std::vector<FieldError> out;
  for (const auto& key : kMixFields) {
    if (!body.contains(key)) continue;
    try {
      MixConfig::from_json(json{{key, body.at(key)}});
    } catch (const std::exception& e) {
      out.push_back({key, e.what()});
    }
  }
  if (out.empty()) {
    json cfg = json::object();
    for (const auto& key : kMixFields) {
      if (body.contains(key)) cfg[key] = body.at(key);
    }
    try {
      MixConfig::from_json(cfg);
    } catch (const std::exception& e) {
      out.push_back({body.contains("kmin") ? "kmin" : "kmax", e.what()});
    }
  }
  if (model) {
    for (std::string key : {"content"}) {
      if (!body.contains(key)) continue;
      try {
        const Prompt p = parse_prompt(body.at(key).get<std::string>(), model->vocabulary());
        validate_prompt(p, model->vocabulary());
      } catch (const std::exception& e) {
        out.push_back({key, e.what()});
      }
    }
    if (body.contains("layout") && body.at("layout").is_object() && body.at("layout").contains("prompt")) {
      try {
        parse_prompt(body.at("layout").at("prompt").get<std::string>(), model->vocabulary());
      } catch (const std::exception& e) {
        out.push_back({"layout.prompt", e.what()});
      }
    }
  }
  return out;
}

json error_body(std::string_view category, const std::string& message, const std::vector<FieldError>& fields = {}) {
  json j = {{"category", category}, {"message", message}};
  if (!fields.empty()) {
    json f = json::array();
    for (const auto& e : fields) f.push_back({{"field", e.field}, {"message", e.message}});
    j["fields"] = f;
  }
  return {{"error", j}};
}

}  // namespace

JobService::JobService(ServiceOptions options) : options_(std::move(options)) {
  if (options_.workers < 1) throw_invalid("service needs at least one worker");
  if (options_.queue_capacity < 1) throw_invalid("queue capacity must be >= 1");
  fs::create_directories(options_.jobs_dir / "jobs");
  fs::create_directories(options_.jobs_dir / "images");
  if (!options_.models_dir.empty() && fs::is_directory(options_.models_dir)) {
    for (const auto& entry : fs::directory_iterator(options_.models_dir)) {
      if (entry.path().extension() == ".ckpt") {
        models_.emplace(entry.path().stem().string(), load_model(entry.path()));
      }
    }
  }
  load_persisted();
  for (int i = 0; i < options_.workers; ++i) {
    workers_.emplace_back([this](std::stop_token st) { worker_loop(st); });
  }
}

JobService::~JobService() {
  for (auto& w : workers_) w.request_stop();
  cv_.notify_all();
  workers_.clear();
}

fs::path JobService::job_dir(const std::string& id) const { return options_.jobs_dir / "jobs" / id; }

void JobService::persist(const Job& job) const {
  const fs::path dir = job_dir(job.id);
  fs::create_directories(dir);
  json state = {{"id", job.id}, {"kind", job.kind}, {"model", job.model}, {"state", to_string(job.state)},
                {"request", job.request}, {"result", job.result}};
  if (!job.error.empty()) state["error"] = job.error;
  write_file_atomic(dir / "job.json", state.dump(2) + "\n");
}

void JobService::load_persisted() {
  const fs::path root = options_.jobs_dir / "jobs";
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path file = entry.path() / "job.json";
    if (!fs::exists(file)) continue;
    try {
      const json j = json::parse(read_file(file));
      Job job;
      job.id = j.at("id");
      job.kind = j.at("kind");
      job.model = j.at("model");
      job.request = j.at("request");
      job.state = job_state_from_string(j.at("state").get<std::string>());
      job.result = j.value("result", json());
      job.error = j.value("error", "");
      if (job.state == JobState::kQueued || job.state == JobState::kRunning) {
        job.state = JobState::kQueued;
        queue_.push_back(job.id);
      }
      jobs_.emplace(job.id, std::move(job));
    } catch (const std::exception& e) {
      std::cerr << "skipping unreadable job " << entry.path() << ": " << e.what() << "\n";
    }
  }
}

SubmitResult JobService::submit(std::string_view kind, const json& body) {
  if (kind != "mix" && kind != "sweep") throw_invalid("unknown job kind");
  if (!body.is_object()) throw RequestError("request body must be a JSON object", {});
  if (!body.contains("model") || !body.at("model").is_string()) {
    throw RequestError("model is required", {{"model", "model name is required"}});
  }
  const std::string model_name = body.at("model");
  const auto mit = models_.find(model_name);
  if (mit == models_.end()) throw_not_found("unknown model '" + model_name + "'");
  const auto& lm = mit->second;

  json doc = body;
  doc.erase("model");
  if (doc.contains("workers")) throw RequestError("workers is chosen by the service", {{"workers", "not accepted"}});
  if (kind == "sweep" && !doc.contains("axes")) throw RequestError("sweep needs axes", {{"axes", "required"}});
  if (kind == "mix" && doc.contains("axes")) throw RequestError("axes need a sweep job", {{"axes", "not accepted"}});
  if (doc.contains("layout") && doc.at("layout").is_object()) {
    json layout = doc.at("layout");
    if (layout.contains("image")) {
      const std::string ref = layout.value("image", "");
      const fs::path p = options_.jobs_dir / "images" / (ref + ".png");
      if (!safe_name(ref) || !fs::exists(p)) throw_not_found("unknown image reference '" + ref + "'");
      layout["image"] = p.string();
    } else if (layout.contains("dataset")) {
      const std::string name = layout.value("dataset", "");
      const fs::path p = options_.data_dir / name;
      if (!safe_name(name) || !fs::exists(p / "images.smxarr")) throw_not_found("unknown dataset '" + name + "'");
      layout.erase("dataset");
      layout["data"] = p.string();
    }
    doc["layout"] = layout;
  }

  MixRequest req;
  try {
    req = parse_mix_request(doc);
    if (req.layout.contains("image")) resolve_layout(req.layout, *lm.model);
    if (req.layout.contains("data")) resolve_layout(req.layout, *lm.model);
    const Prompt content = parse_prompt(req.content, lm.model->vocabulary());
    if (req.mode == "remove" && !content.has_negative_scale()) {
      throw_invalid("removal needs a negative token scale");
    }
    if (req.layout.contains("prompt")) parse_prompt(req.layout.at("prompt").get<std::string>(), lm.model->vocabulary());
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kNotFound) throw;
    auto fields = field_errors(body, lm.model.get());
    throw RequestError(e.what(), std::move(fields));
  }
  const json canonical = mix_request_json(req);
  const std::string id = sha256_hex(std::string(kind) + "\n" + lm.sha256 + "\n" + canonical.dump()).substr(0, 32);

  std::lock_guard lock(mu_);
  if (const auto it = jobs_.find(id); it != jobs_.end()) return {id, it->second.state, true};
  if (queue_.size() >= options_.queue_capacity) {
    throw Error(ErrorCategory::kCapacity, "job queue is full (" + std::to_string(options_.queue_capacity) + " queued)");
  }
  Job job;
  job.id = id;
  job.kind = std::string(kind);
  job.model = model_name;
  job.request = canonical;
  persist(job);
  jobs_.emplace(id, job);
  queue_.push_back(id);
  cv_.notify_one();
  return {id, JobState::kQueued, false};
}

std::string JobService::upload_image(const std::string& png_bytes) {
  decode_png(png_bytes);
  const std::string ref = sha256_hex(png_bytes).substr(0, 32);
  const fs::path p = options_.jobs_dir / "images" / (ref + ".png");
  if (!fs::exists(p)) write_file_atomic(p, png_bytes);
  return ref;
}

void JobService::worker_loop(std::stop_token stop) {
  while (true) {
    std::string id;
    {
      std::unique_lock lock(mu_);
      if (!cv_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
      id = queue_.front();
      queue_.pop_front();
      jobs_.at(id).state = JobState::kRunning;
      ++running_;
      persist(jobs_.at(id));
    }
    run_job(id);
  }
}

void JobService::run_job(const std::string& id) {
  Job snapshot;
  {
    std::lock_guard lock(mu_);
    snapshot = jobs_.at(id);
  }
  json result;
  std::string error;
  try {
    const auto& lm = models_.at(snapshot.model);
    const MixRequest req = parse_mix_request(snapshot.request);
    const MixOutputs out = run_mix_request(*lm.model, req);
    const fs::path dir = job_dir(id);
    for (std::size_t i = 0; i < out.cells.size(); ++i) {
      write_file_atomic(dir / ("cell_" + std::to_string(i) + ".png"), sample_png(out.cells[i], 0));
    }
    result = {{"cells", out.cells.size()}, {"rows", out.rows}, {"columns", out.columns},
              {"cell_info", out.cell_info}, {"labels", out.labels},
              {"timings", {{"wall_seconds", out.wall_seconds}}}, {"model_sha256", lm.sha256}};
  } catch (const Error& e) {
    error = std::string(category_name(e.category())) + ": " + e.what();
  } catch (const std::exception& e) {
    error = "internal error";
    std::cerr << "job " << id << " failed: " << e.what() << "\n";
  }
  {
    std::lock_guard lock(mu_);
    Job& job = jobs_.at(id);
    job.state = error.empty() ? JobState::kDone : JobState::kFailed;
    job.result = result;
    job.error = error;
    persist(job);
    --running_;
  }
  idle_cv_.notify_all();
}

std::optional<json> JobService::job(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  const Job& j = it->second;
  json out = {{"id", j.id}, {"kind", j.kind}, {"model", j.model}, {"state", to_string(j.state)},
              {"request", j.request}};
  if (j.state == JobState::kDone) out["result"] = j.result;
  if (!j.error.empty()) out["error"] = j.error;
  return out;
}

std::string JobService::result_png(const std::string& id, std::size_t cell) const {
  std::lock_guard lock(mu_);
  const auto it = jobs_.find(id);
  if (it == jobs_.end()) throw_not_found("unknown job '" + id + "'");
  if (it->second.state != JobState::kDone) {
    throw Error(ErrorCategory::kCheckFailed, "job is " + std::string(to_string(it->second.state)));
  }
  if (cell >= it->second.result.at("cells").get<std::size_t>()) {
    throw_not_found("cell " + std::to_string(cell) + " out of range");
  }
  return read_file(job_dir(id) / ("cell_" + std::to_string(cell) + ".png"));
}

json JobService::models() const {
  json out = json::array();
  for (const auto& [name, lm] : models_) {
    const auto& m = *lm.model;
    out.push_back({{"name", name},
                   {"sha256", lm.sha256},
                   {"vocabulary", m.vocabulary().to_json()},
                   {"image_size", m.sample_shape().width},
                   {"schedule", m.schedule().describe()}});
  }
  return out;
}

json JobService::datasets() const {
  json out = json::array();
  if (options_.data_dir.empty() || !fs::is_directory(options_.data_dir)) return out;
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    const fs::path manifest = entry.path() / "manifest.json";
    if (!fs::exists(manifest)) continue;
    try {
      out.push_back({{"name", entry.path().filename().string()}, {"manifest", json::parse(read_file(manifest))}});
    } catch (const std::exception&) {
    }
  }
  return out;
}

json JobService::health() const {
  std::lock_guard lock(mu_);
  return {{"status", "ok"},
          {"version", code_version()},
          {"models", models_.size()},
          {"workers", options_.workers},
          {"queue_capacity", options_.queue_capacity},
          {"queued", queue_.size()},
          {"running", running_}};
}

void JobService::wait_idle() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && running_ == 0; });
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int status_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kInvalidConfig: return 400;
    case ErrorCategory::kNotFound: return 404;
    case ErrorCategory::kCapacity: return 409;
    case ErrorCategory::kCheckFailed: return 409;
    default: return 500;
  }
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const RequestError& e) {
    send_json(res, 400, error_body("invalid_config", e.what(), e.fields()));
  } catch (const Error& e) {
    const int status = status_for(e.category());
    send_json(res, status, error_body(category_name(e.category()), status == 500 ? "internal error" : e.what()));
  } catch (const json::exception& e) {
    send_json(res, 400, error_body("invalid_config", std::string("malformed JSON: ") + e.what()));
  } catch (const std::exception& e) {
    std::cerr << "request failed: " << e.what() << "\n";
    send_json(res, 500, error_body("internal", "internal error"));
  }
}

}  // namespace

void register_routes(httplib::Server& server, JobService& service) {
  server.Get("/v1/health", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.health()); });
  });
  server.Get("/v1/models", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.models()); });
  });
  server.Get("/v1/datasets", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, service.datasets()); });
  });
  server.Post("/v1/images", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      try {
        send_json(res, 201, {{"image", service.upload_image(req.body)}});
      } catch (const Error& e) {
        if (e.category() != ErrorCategory::kIo && e.category() != ErrorCategory::kInvalidConfig) throw;
        throw RequestError(std::string("not a readable PNG: ") + e.what(), {{"body", "PNG expected"}});
      }
    });
  });
  for (std::string kind : {"mix", "sweep"}) {
    server.Post("/v1/jobs/" + kind, [&service, kind](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json body = json::parse(req.body);
        const SubmitResult r = service.submit(kind, body);
        send_json(res, r.existing ? 200 : 202, {{"id", r.id}, {"state", to_string(r.state)}, {"existing", r.existing}});
      });
    });
  }
  server.Get(R"(/v1/jobs/([0-9a-f]+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto j = service.job(req.matches[1]);
      if (!j) throw_not_found("unknown job");
      send_json(res, 200, *j);
    });
  });
  server.Get(R"(/v1/jobs/([0-9a-f]+)/result/(\d+))", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string png = service.result_png(req.matches[1], std::stoul(req.matches[2]));
      res.status = 200;
      res.set_content(png, "image/png");
    });
  });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_json(res, res.status, error_body("not_found", "no such endpoint"));
  });
}

namespace {
httplib::Server* g_server = nullptr;
void stop_server(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int serve(const ServiceOptions& options, const std::string& host, int port) {
  JobService service(options);
  httplib::Server server;
  register_routes(server, service);
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cerr << json{{"listening", host + ":" + std::to_string(port)}, {"version", code_version()}}.dump() << "\n";
  const bool ok = server.listen(host, port);
  g_server = nullptr;
  if (!ok) throw_io("cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace semmix::tools
