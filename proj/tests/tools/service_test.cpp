// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <nlohmann/json.hpp>

#include "fixture.hpp"
#include "semmix/error.hpp"
#include "semmix/tools/service.hpp"

// After Eigen: <resolv.h> defines a macro named _res.
#include <httplib.h>

namespace semmix {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::ToyWorld;
using tools::JobService;
using tools::JobState;
using tools::ServiceOptions;

ServiceOptions options(const std::string& jobs, int workers = 1, std::size_t capacity = 16) {
  const auto& w = ToyWorld::get();
  ServiceOptions o;
  o.models_dir = w.models_dir;
  o.data_dir = w.data_dir.parent_path();
  o.jobs_dir = w.root / "service" / jobs;
  o.workers = workers;
  o.queue_capacity = capacity;
  return o;
}

json mix_body(double nu, std::uint64_t seed = 3) {
  return {{"model", "tiny"}, {"content", "striped"}, {"layout", {{"dataset", "toy"}, {"index", 0}}},
          {"nu", nu}, {"seed", seed}, {"steps", 10}};
}

/// JobService behind a live HTTP server on an ephemeral port.
class ServiceHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::remove_all(options("http").jobs_dir);
    service_ = std::make_unique<JobService>(options("http"));
    tools::register_routes(server_, *service_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
    service_.reset();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  json wait_done(const std::string& id) {
    auto c = client();
    for (int i = 0; i < 600; ++i) {
      const auto r = c.Get("/v1/jobs/" + id);
      const json j = json::parse(r->body);
      if (j.at("state") == "done" || j.at("state") == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ADD_FAILURE() << "job " << id << " did not finish";
    return {};
  }

  std::string post_job(const std::string& kind, const json& body, int expect_status = 202) {
    auto c = client();
    const auto r = c.Post("/v1/jobs/" + kind, body.dump(), "application/json");
    EXPECT_EQ(r->status, expect_status) << r->body;
    return json::parse(r->body).value("id", "");
  }

  std::unique_ptr<JobService> service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(ServiceHttp, HealthModelsAndDatasets) {
  auto c = client();
  auto r = c.Get("/v1/health");
  ASSERT_EQ(r->status, 200);
  const json h = json::parse(r->body);
  EXPECT_EQ(h.at("status"), "ok");
  EXPECT_TRUE(h.contains("version"));
  r = c.Get("/v1/models");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body).at(0).at("name"), "tiny");
  r = c.Get("/v1/datasets");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body).at(0).at("name"), "toy");
  EXPECT_EQ(c.Get("/v1/nothing")->status, 404);
}

TEST_F(ServiceHttp, InvalidRequestsCarryFieldErrors) {
  auto c = client();
  json body = mix_body(1.5);
  auto r = c.Post("/v1/jobs/mix", body.dump(), "application/json");
  ASSERT_EQ(r->status, 400);
  json err = json::parse(r->body).at("error");
  EXPECT_EQ(err.at("category"), "invalid_config");
  EXPECT_EQ(err.at("fields").at(0).at("field"), "nu");

  body = mix_body(0.5);
  body["content"] = "hexagon";
  r = c.Post("/v1/jobs/mix", body.dump(), "application/json");
  ASSERT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body).at("error").at("fields").at(0).at("field"), "content");

  EXPECT_EQ(c.Post("/v1/jobs/mix", "{not json", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/v1/images", "not a png", "image/png")->status, 400);
}

TEST_F(ServiceHttp, UnknownThingsAreNotFound) {
  auto c = client();
  json body = mix_body(0.5);
  body["model"] = "ghost";
  EXPECT_EQ(c.Post("/v1/jobs/mix", body.dump(), "application/json")->status, 404);
  body = mix_body(0.5);
  body["layout"] = {{"dataset", "ghost"}, {"index", 0}};
  EXPECT_EQ(c.Post("/v1/jobs/mix", body.dump(), "application/json")->status, 404);
  body["layout"] = {{"image", "0123abcd"}};
  EXPECT_EQ(c.Post("/v1/jobs/mix", body.dump(), "application/json")->status, 404);
  EXPECT_EQ(c.Get("/v1/jobs/00ff")->status, 404);
  EXPECT_EQ(c.Get("/v1/jobs/00ff/result/0")->status, 404);
}

TEST_F(ServiceHttp, NuOneMatchesConditionalJobByteForByte) {
  const std::string mixed = post_job("mix", mix_body(1.0));
  json cond = mix_body(0.5);
  cond["mode"] = "conditional";
  const std::string plain = post_job("mix", cond);
  ASSERT_NE(mixed, plain);
  EXPECT_EQ(wait_done(mixed).at("state"), "done");
  const json pj = wait_done(plain);
  ASSERT_EQ(pj.at("state"), "done");
  EXPECT_TRUE(pj.at("result").contains("timings"));
  EXPECT_EQ(pj.at("result").at("cell_info").at(0).at("mode"), "conditional");
  auto c = client();
  const auto a = c.Get("/v1/jobs/" + mixed + "/result/0");
  const auto b = c.Get("/v1/jobs/" + plain + "/result/0");
  ASSERT_EQ(a->status, 200);
  EXPECT_EQ(a->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(a->body, b->body);
  EXPECT_EQ(c.Get("/v1/jobs/" + mixed + "/result/1")->status, 404);
}

TEST_F(ServiceHttp, SweepCellsAreRowMajor) {
  json body = mix_body(0.5);
  body["axes"] = {{{"param", "nu"}, {"values", {0.0, 0.5, 1.0}}},
                  {{"param", "kmin"}, {"values", {0.1, 0.2, 0.3}}}};
  const std::string id = post_job("sweep", body);
  const json j = wait_done(id);
  ASSERT_EQ(j.at("state"), "done") << j.dump();
  const json& res = j.at("result");
  EXPECT_EQ(res.at("rows"), 3);
  EXPECT_EQ(res.at("columns"), 3);
  ASSERT_EQ(res.at("cells"), 9);
  auto c = client();
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < 3; ++col) {
      const json& info = res.at("cell_info").at(static_cast<std::size_t>(r * 3 + col));
      EXPECT_DOUBLE_EQ(info.at("nu").get<double>(), 0.5 * r);
      EXPECT_DOUBLE_EQ(info.at("kmin").get<double>(), 0.1 * (col + 1));
      EXPECT_EQ(c.Get("/v1/jobs/" + id + "/result/" + std::to_string(r * 3 + col))->status, 200);
    }
  }
  json single = mix_body(0.5);
  single["axes"] = body["axes"];
  EXPECT_EQ(client().Post("/v1/jobs/mix", single.dump(), "application/json")->status, 400);
}

TEST_F(ServiceHttp, IdenticalRequestsShareOneJob) {
  const std::string id = post_job("mix", mix_body(0.25));
  wait_done(id);
  const std::string png = client().Get("/v1/jobs/" + id + "/result/0")->body;
  EXPECT_EQ(post_job("mix", mix_body(0.25), 200), id);
  json reordered = json::parse(R"({"steps": 10, "seed": 3, "nu": 0.25, "model": "tiny",
                                   "layout": {"index": 0, "dataset": "toy"}, "content": "striped"})");
  EXPECT_EQ(post_job("mix", reordered, 200), id);
  EXPECT_NE(post_job("mix", mix_body(0.25, 4)), id);
  EXPECT_EQ(client().Get("/v1/jobs/" + id + "/result/0")->body, png);
}

TEST_F(ServiceHttp, UploadedImagesServeAsLayouts) {
  const ShapesDataset data = load_dataset(ToyWorld::get().data_dir);
  const std::string png = tools::sample_png(data.images, 5);
  auto c = client();
  const auto up = c.Post("/v1/images", png, "image/png");
  ASSERT_EQ(up->status, 201) << up->body;
  const std::string ref = json::parse(up->body).at("image");
  json body = mix_body(0.5);
  body["layout"] = {{"image", ref}};
  const json j = wait_done(post_job("mix", body));
  EXPECT_EQ(j.at("state"), "done") << j.dump();
  EXPECT_EQ(json::parse(c.Post("/v1/images", png, "image/png")->body).at("image"), ref);
}

TEST(Service, PersistedJobsSurviveRestart) {
  const ServiceOptions opt = options("restart");
  fs::remove_all(opt.jobs_dir);
  std::string id, png;
  {
    JobService s(opt);
    id = s.submit("mix", mix_body(0.5, 11)).id;
    s.wait_idle();
    ASSERT_EQ(s.job(id)->at("state"), "done");
    png = s.result_png(id, 0);
  }
  JobService again(opt);
  const auto j = again.job(id);
  ASSERT_TRUE(j.has_value());
  EXPECT_EQ(j->at("state"), "done");
  EXPECT_EQ(again.result_png(id, 0), png);
  const auto r = again.submit("mix", mix_body(0.5, 11));
  EXPECT_TRUE(r.existing);
  EXPECT_EQ(r.state, JobState::kDone);
}

TEST(Service, BoundedQueueRejectsExcessJobs) {
  const ServiceOptions opt = options("capacity", 1, 1);
  fs::remove_all(opt.jobs_dir);
  JobService s(opt);
  json slow = mix_body(0.5, 1);
  slow["steps"] = 400;
  slow["axes"] = {{{"param", "nu"}, {"values", {0.0, 0.5, 1.0}}}, {{"param", "kmin"}, {"values", {0.1, 0.3}}}};
  const std::string first = s.submit("sweep", slow).id;
  while (s.health().at("running") != 1) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  EXPECT_THROW(s.result_png(first, 0), Error);
  const auto second = s.submit("mix", mix_body(0.5, 2));
  EXPECT_FALSE(second.existing);
  try {
    s.submit("mix", mix_body(0.5, 3));
    ADD_FAILURE() << "third job accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kCapacity);
  }
  s.wait_idle();
  EXPECT_EQ(s.job(first)->at("state"), "done");
  EXPECT_EQ(s.job(second.id)->at("state"), "done");
}

}  // namespace
}  // namespace semmix
