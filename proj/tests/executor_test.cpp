#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "conductor/executor.hpp"
#include "conductor/stubs.hpp"
#include "support.hpp"

using namespace conductor;
using testing_support::LocalServer;
using testing_support::TempDir;

namespace {

Assignment assign(int id, std::string model) {
  Assignment a;
  a.task_id = id;
  a.model_id = std::move(model);
  return a;
}

Registry remote_registry(const std::string& url, int timeout_ms, bool with_local) {
  nlohmann::json endpoints = nlohmann::json::array();
  if (with_local) endpoints.push_back({{"kind", "local"}});
  endpoints.push_back({{"kind", "remote"}, {"url", url}, {"timeout_ms", timeout_ms}});
  return Registry::from_json(
      {{"models", {{{"model_id", "r/cap"}, {"task_types", {"image-to-text"}}, {"endpoints", endpoints}}}}});
}

}  // namespace

TEST(Stubs, EveryTaskTypeHasAStubProducingItsOutputKind) {
  TempDir dir("stubs");
  Executor ex;
  stubs::register_defaults(ex);
  ExecutionOptions opts;
  opts.artifact_dir = dir.path();
  for (const auto& type : ex.manifest().types()) {
    Task t{type.name, 0, {-1}, {}};
    for (auto m : type.arg_schema) t.args[std::string(to_string(m))] = m == Modality::text ? "hello there" : "in.bin";
    auto r = ex.dispatch(t, assign(0, default_stub_model(type.name)), t.args, opts);
    ASSERT_TRUE(r.ok()) << type.name << ": " << r.message;
    ASSERT_EQ(r.produced_resources.size(), 1u) << type.name;
    EXPECT_EQ(r.produced_resources.begin()->first, type.output) << type.name;
    if (type.output != Modality::text) EXPECT_TRUE(fs::exists(r.produced_resources.begin()->second)) << type.name;
  }
}

TEST(Stubs, DeterministicPayloads) {
  TempDir dir("stubs-det");
  Executor ex;
  stubs::register_defaults(ex);
  ExecutionOptions opts;
  opts.artifact_dir = dir.path();
  Task t{"object-detection", 2, {-1}, {{"image", "zoo.jpg"}}};
  auto a = ex.dispatch(t, assign(2, "stub/object-detection"), t.args, opts);
  auto b = ex.dispatch(t, assign(2, "stub/object-detection"), t.args, opts);
  EXPECT_EQ(a.payload, b.payload);
  EXPECT_EQ(a.payload["predicted"].size(), 3u);
  EXPECT_EQ(a.produced_resources.at(Modality::image), (dir.path() / "2.png").string());
}

TEST(Executor, UpstreamFailurePropagatesWithoutDispatch) {
  Executor ex;
  std::atomic<int> calls{0};
  ex.register_stub("summarization", [&](const StubRequest&) -> StubReply { ++calls; throw Error("model crashed"); });
  ex.register_stub("text-to-speech", [&](const StubRequest&) -> StubReply { ++calls; return {}; });
  TaskGraph g({Task{"summarization", 0, {-1}, {{"text", "x"}}},
               Task{"text-to-speech", 1, {0}, {{"text", "<resource>-0"}}},
               Task{"text-to-speech", 2, {1}, {{"text", "<resource>-1"}}}});
  auto out = ex.execute_graph(g, {{0, assign(0, "stub/summarization")},
                                  {1, assign(1, "stub/text-to-speech")},
                                  {2, assign(2, "stub/text-to-speech")}});
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(out.results.at(0).message, "model crashed");
  EXPECT_EQ(out.results.at(1).message, kUpstreamFailure);
  EXPECT_EQ(out.results.at(2).message, kUpstreamFailure);
}

TEST(Executor, WrongOutputKindFailsTheTask) {
  Executor ex;
  ex.register_stub("summarization", [](const StubRequest&) {
    StubReply r;
    r.resources[Modality::image] = "x.png";
    return r;
  });
  Task t{"summarization", 0, {-1}, {{"text", "x"}}};
  auto r = ex.dispatch(t, assign(0, "stub/summarization"), t.args);
  EXPECT_FALSE(r.ok());
  EXPECT_NE(r.message.find("outputs text"), std::string::npos);
}

TEST(Executor, PlaceholderOfWrongKindFailsAtResolution) {
  Executor ex;
  stubs::register_defaults(ex);
  TempDir dir("kind");
  ExecutionOptions opts;
  opts.artifact_dir = dir.path();
  TaskGraph g({Task{"image-cls", 0, {-1}, {{"image", "cat.jpg"}}},
               Task{"object-detection", 1, {0}, {{"image", "<resource>-0"}}}});
  auto out = ex.execute_graph(g, {{0, assign(0, "stub/image-cls")}, {1, assign(1, "stub/object-detection")}}, opts);
  EXPECT_TRUE(out.results.at(0).ok());
  EXPECT_FALSE(out.results.at(1).ok());
  EXPECT_NE(out.results.at(1).message.find("no image resource"), std::string::npos);
}

TEST(Executor, UnassignedAndUnservedTasks) {
  Registry reg(std::vector<ModelDescriptor>{
      ModelDescriptor{"nowhere", {"summarization"}, 0, "", {Endpoint::local("missing-handler")}}});
  Executor ex(&reg);
  TaskGraph g({Task{"summarization", 0, {-1}, {{"text", "x"}}}, Task{"summarization", 1, {-1}, {{"text", "y"}}}});
  auto out = ex.execute_graph(g, {{0, assign(0, "nowhere")}});
  EXPECT_EQ(out.results.at(0).message, kNoEndpoint);
  EXPECT_EQ(out.results.at(1).message, "no model assigned");
}

TEST(Executor, NamedHandlers) {
  Registry reg(std::vector<ModelDescriptor>{
      ModelDescriptor{"custom/sum", {"summarization"}, 0, "", {Endpoint::local("short")}}});
  Executor ex(&reg);
  ex.register_handler("short", [](const StubRequest& req) { return stubs::text_reply("summary_text", req.model_id); });
  Task t{"summarization", 0, {-1}, {{"text", "x"}}};
  auto r = ex.dispatch(t, assign(0, "custom/sum"), t.args);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.produced_resources.at(Modality::text), "custom/sum");
}

TEST(Executor, InvalidGraphFailsEveryTask) {
  Executor ex;
  TaskGraph g({Task{"summarization", 0, {1}, {{"text", "x"}}}, Task{"summarization", 1, {0}, {{"text", "x"}}}});
  auto out = ex.execute_graph(g, {});
  ASSERT_EQ(out.results.size(), 2u);
  for (const auto& [_, r] : out.results) EXPECT_NE(r.message.find("invalid plan"), std::string::npos);
}

TEST(RemoteEndpoint, PostsArgsAndDownloadsMedia) {
  LocalServer fake;
  nlohmann::json seen;
  fake.server().Post("/infer", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    nlohmann::json reply = {{"payload", {{"generated text", "a cat"}}}, {"resources", {{"text", "a cat"}}}};
    res.set_content(reply.dump(), "application/json");
  });
  fake.start();
  auto reg = remote_registry(fake.url("/infer"), 2000, false);
  Executor ex(&reg);
  Task t{"image-to-text", 0, {-1}, {{"image", "cat.png"}}};
  auto r = ex.dispatch(t, assign(0, "r/cap"), t.args);
  ASSERT_TRUE(r.ok()) << r.message << r.payload.dump();
  EXPECT_EQ(r.produced_resources.at(Modality::text), "a cat");
  EXPECT_EQ(seen["model_id"], "r/cap");
  EXPECT_EQ(seen["task"], "image-to-text");
  EXPECT_EQ(seen["args"]["image"], "cat.png");
}

TEST(RemoteEndpoint, MediaUrlsAreFetchedIntoTheArtifactDir) {
  LocalServer fake;
  fake.server().Post("/infer", [&](const httplib::Request&, httplib::Response& res) {
    nlohmann::json reply = {{"payload", nlohmann::json::object()}, {"resources", {{"image", fake.url("/files/out.png")}}}};
    res.set_content(reply.dump(), "application/json");
  });
  fake.server().Get("/files/out.png", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("PNGDATA", "image/png");
  });
  fake.start();
  auto reg = Registry::from_json({{"models",
                                   {{{"model_id", "r/gen"},
                                     {"task_types", {"text-to-image"}},
                                     {"endpoint", {{"kind", "remote"}, {"url", fake.url("/infer")}}}}}}});
  Executor ex(&reg);
  TempDir dir("remote-media");
  ExecutionOptions opts;
  opts.artifact_dir = dir.path();
  opts.artifact_prefix = "t3-";
  Task t{"text-to-image", 4, {-1}, {{"text", "a cat"}}};
  auto r = ex.dispatch(t, assign(4, "r/gen"), t.args, opts);
  ASSERT_TRUE(r.ok()) << r.message << r.payload.dump();
  auto path = dir.path() / "t3-4.png";
  EXPECT_EQ(r.produced_resources.at(Modality::image), path.string());
  EXPECT_EQ(read_text_file(path), "PNGDATA");
}

TEST(RemoteEndpoint, SlowServerTimesOut) {
  LocalServer fake;
  fake.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("{}", "application/json");
  });
  fake.start();
  auto reg = remote_registry(fake.url("/slow"), 150, false);
  Executor ex(&reg);
  Task t{"image-to-text", 0, {-1}, {{"image", "cat.png"}}};
  auto r = ex.dispatch(t, assign(0, "r/cap"), t.args);
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(r.message, kTimeout);
}

TEST(RemoteEndpoint, LocalEndpointIsPreferred) {
  LocalServer fake;
  int remote_hits = 0;
  fake.server().Post("/infer", [&](const httplib::Request&, httplib::Response& res) {
    ++remote_hits;
    res.set_content(R"({"resources": {"text": "remote"}})", "application/json");
  });
  fake.start();
  auto reg = remote_registry(fake.url("/infer"), 2000, true);
  Executor ex(&reg);
  stubs::register_defaults(ex);
  Task t{"image-to-text", 0, {-1}, {{"image", "cat.png"}}};
  auto r = ex.dispatch(t, assign(0, "r/cap"), t.args);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(remote_hits, 0);
  EXPECT_NE(r.produced_resources.at(Modality::text), "remote");
}

TEST(RemoteEndpoint, ErrorsAndMalformedReplies) {
  LocalServer fake;
  fake.server().Post("/500", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  fake.server().Post("/bad", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"resources": {"smell": "x"}})", "application/json");
  });
  fake.start();
  for (const char* path : {"/500", "/bad"}) {
    auto reg = remote_registry(fake.url(path), 2000, false);
    Executor ex(&reg);
    Task t{"image-to-text", 0, {-1}, {{"image", "cat.png"}}};
    EXPECT_FALSE(ex.dispatch(t, assign(0, "r/cap"), t.args).ok()) << path;
  }
}
