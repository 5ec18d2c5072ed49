// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/tools/workflows.hpp"

namespace httplib {
class Server;
}

namespace semmix::tools {

struct ServiceOptions {
  std::filesystem::path models_dir;  // *.ckpt, addressed by file stem
  std::filesystem::path data_dir;    // dataset directories, addressed by name
  std::filesystem::path jobs_dir;    // persisted jobs and uploaded images
  int workers = 1;
  std::size_t queue_capacity = 16;   // queued jobs beyond the running ones
};

enum class JobState { kQueued, kRunning, kDone, kFailed };
std::string_view to_string(JobState state);

struct FieldError {
  std::string field;
  std::string message;
};

/// Thrown for request bodies that fail validation (HTTP 400).
class RequestError : public std::runtime_error {
 public:
  RequestError(std::string message, std::vector<FieldError> fields)
      : std::runtime_error(std::move(message)), fields_(std::move(fields)) {}
  const std::vector<FieldError>& fields() const { return fields_; }

 private:
  std::vector<FieldError> fields_;
};

struct SubmitResult {
  std::string id;
  JobState state = JobState::kQueued;
  bool existing = false;  // identical request seen before
};

/// Job queue with W workers and at most Q queued jobs. Job ids are hashes of
/// the canonical request, so identical requests share one persisted result.
class JobService {
 public:
  explicit JobService(ServiceOptions options);
  ~JobService();
  JobService(const JobService&) = delete;
  JobService& operator=(const JobService&) = delete;

  /// kind is "mix" or "sweep". Throws RequestError, or Error(kCapacity) when
  /// the queue is full, or Error(kNotFound) for unknown models/datasets.
  SubmitResult submit(std::string_view kind, const nlohmann::json& body);

  /// Stores an uploaded PNG and returns its reference.
  std::string upload_image(const std::string& png_bytes);

  std::optional<nlohmann::json> job(const std::string& id) const;
  /// PNG bytes of one result cell; throws Error(kNotFound) or
  /// Error(kCheckFailed) when the job is not done yet.
  std::string result_png(const std::string& id, std::size_t cell) const;

  nlohmann::json models() const;
  nlohmann::json datasets() const;
  nlohmann::json health() const;

  /// Blocks until no job is queued or running.
  void wait_idle();

 private:
  struct Job {
    std::string id;
    std::string kind;
    std::string model;
    nlohmann::json request;  // canonical
    JobState state = JobState::kQueued;
    std::string error;
    nlohmann::json result;   // cell info, rows, columns, timings
  };

  void worker_loop(std::stop_token stop);
  void run_job(const std::string& id);
  void persist(const Job& job) const;
  void load_persisted();
  std::filesystem::path job_dir(const std::string& id) const;

  ServiceOptions options_;
  std::map<std::string, LoadedModel> models_;
  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::condition_variable idle_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<std::string> queue_;
  std::size_t running_ = 0;
  std::vector<std::jthread> workers_;
};

/// Registers every /v1 endpoint.
void register_routes(httplib::Server& server, JobService& service);

/// Runs the HTTP server until it is stopped. Returns the exit status.
int serve(const ServiceOptions& options, const std::string& host, int port);

}  // namespace semmix::tools
