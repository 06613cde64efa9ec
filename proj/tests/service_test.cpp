#include <gtest/gtest.h>

#include "conductor/config.hpp"
#include "conductor/http_api.hpp"
#include "conductor/service.hpp"
#include "conductor/stubs.hpp"
#include "support.hpp"

using namespace conductor;
using testing_support::LocalServer;
using testing_support::TempDir;

namespace {

const char* kCaptionPlan =
    R"([{"task": "image-to-text", "id": 0, "dep": [-1], "args": {"image": "<resource>-9"}}])";

class DownBackend : public ControllerBackend {
 public:
  std::string_view kind() const override { return "down"; }
  std::string complete(const CompletionRequest&) override { throw TransportError("connection refused"); }
};

struct Fixture {
  TempDir dir{"service"};
  Registry registry = Registry::load(testing_support::data_path("registry.json"));
  Executor executor{&registry};
  std::shared_ptr<ScriptedBackend> backend;
  std::unique_ptr<Service> service;

  explicit Fixture(std::shared_ptr<ControllerBackend> b = nullptr) {
    stubs::register_defaults(executor);
    backend = ScriptedBackend::load(testing_support::data_path("controller_script.json"));
    ServiceConfig config;
    config.controller.backend = b ? b : backend;
    config.data_dir = dir.path();
    config.concurrency = 2;
    service = std::make_unique<Service>(config, registry, executor);
  }
};

}  // namespace

TEST(Service, EmptyPlanGoesStraightToResponse) {
  Fixture f;
  auto id = f.service->create_session();
  EXPECT_EQ(id, "s0001");
  auto trace = f.service->handle_request(id, "tell me a joke");
  EXPECT_TRUE(trace.plan.empty());
  EXPECT_TRUE(trace.results.empty());
  EXPECT_NE(trace.response.find("can't make it"), std::string::npos);
  EXPECT_EQ(f.service->trace_count(id), 1u);
}

TEST(Service, UnparseablePlanBecomesEmptyWithWarning) {
  auto b = testing_support::script_from(R"({"rules": [{"contains": "#1 Task Planning", "reply": "no json at all"},
      {"contains": "#4 Response", "reply": "sorry"}]})");
  Fixture f(b);
  auto trace = f.service->handle_request("", "anything");
  EXPECT_TRUE(trace.plan.empty());
  ASSERT_FALSE(trace.warnings.empty());
  EXPECT_NE(trace.warnings[0].find("empty plan"), std::string::npos);
  EXPECT_EQ(trace.response, "sorry");
}

TEST(Service, InvalidPlanSkipsSelectionAndExecution) {
  auto b = testing_support::script_from(std::string(R"({"rules": [{"contains": "#1 Task Planning", "reply": )") +
                                        nlohmann::json(kCaptionPlan).dump() +
                                        R"(}, {"contains": "#4 Response", "reply": "done"}]})");
  Fixture f(b);
  auto trace = f.service->handle_request("", "caption it");
  EXPECT_FALSE(trace.validation.ok());
  EXPECT_TRUE(trace.assignments.empty());
  ASSERT_EQ(trace.results.size(), 1u);
  EXPECT_EQ(trace.results.at(0).message, "invalid plan");
}

TEST(Service, BackendOutagePropagates) {
  Fixture f(std::make_shared<DownBackend>());
  auto id = f.service->create_session();
  EXPECT_THROW(f.service->handle_request(id, "hello"), BackendUnavailable);
  EXPECT_EQ(f.service->trace_count(id), 0u);
}

TEST(Service, UnknownSessions) {
  Fixture f;
  EXPECT_THROW(f.service->handle_request("s9999", "x"), UnknownSession);
  EXPECT_THROW(f.service->get_trace("s9999", 0), UnknownSession);
  auto id = f.service->create_session();
  EXPECT_THROW(f.service->get_trace(id, 0), UnknownSession);
}

TEST(Service, AttachmentsAreSavedAndMentioned) {
  Fixture f;
  auto id = f.service->create_session();
  auto trace = f.service->handle_request(id, "what is this?", {Attachment{"../../cat.png", std::string("PNG"), {}}});
  auto saved = f.dir.path() / id / "cat.png";
  ASSERT_EQ(trace.attachments, (std::vector<std::string>{saved.string()}));
  EXPECT_EQ(read_text_file(saved), "PNG");
  EXPECT_NE(trace.request.find("(attached image: " + saved.string() + ")"), std::string::npos);
  EXPECT_EQ(f.service->store().get(id)->chat.resource_index().at(saved.string()), Modality::image);
}

TEST(Service, SessionsSurviveRestart) {
  TempDir dir("restart");
  auto registry = Registry::load(testing_support::data_path("registry.json"));
  Executor executor(&registry);
  stubs::register_defaults(executor);
  ServiceConfig config;
  config.controller.backend = ScriptedBackend::load(testing_support::data_path("controller_script.json"));
  config.data_dir = dir.path();
  Trace first;
  {
    Service s(config, registry, executor);
    auto id = s.create_session();
    first = to_json(s.handle_request(id, "hello there"));
  }
  Service again(config, registry, executor);
  EXPECT_EQ(again.list_sessions(), (std::vector<std::string>{"s0001"}));
  EXPECT_EQ(again.get_trace("s0001", 0), first);
  ASSERT_EQ(again.store().get("s0001")->chat.chat_log().size(), 2u);
  EXPECT_EQ(again.create_session(), "s0002");
}

TEST(Config, ParsesAndResolvesRelativePaths) {
  auto rc = load_config(testing_support::data_path("config.json"));
  EXPECT_EQ(rc.backend.kind, "scripted");
  EXPECT_EQ(rc.backend.script, testing_support::data_path("controller_script.json"));
  EXPECT_EQ(rc.selection.k, 5u);
  EXPECT_FALSE(rc.demo_variety.has_value());
  EXPECT_EQ(make_registry(rc).size(), Registry::load(testing_support::data_path("registry.json")).size());
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"backend": {"kind": "carrier-pigeon"}})")), SchemaError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"selection": {"k": 0}})")), SchemaError);
  auto http = load_config(testing_support::data_path("config.http.json"));
  EXPECT_EQ(make_backend(http.backend)->kind(), "http");
}

TEST(Config, DefaultRegistryServesEveryTaskWithStubs) {
  auto registry = make_registry(RunConfig{});
  EXPECT_EQ(registry.size(), TaskManifest::builtin().names().size());
  EXPECT_NE(registry.find("stub/image-cls"), nullptr);
}

TEST(Base64, Decodes) {
  EXPECT_EQ(base64_decode("aGVsbG8="), "hello");
  EXPECT_EQ(base64_decode("aGVsbG8"), "hello");
  EXPECT_EQ(base64_decode("aGVs\nbG8h"), "hello!");
  EXPECT_EQ(base64_decode(""), "");
  EXPECT_THROW(base64_decode("a*b"), SchemaError);
}

TEST(HttpApi, RoutesAndErrors) {
  Fixture f;
  LocalServer server;
  mount_api(server.server(), *f.service);
  server.start();
  httplib::Client client("127.0.0.1", std::stoi(server.url().substr(server.url().rfind(':') + 1)));

  auto created = client.Post("/v1/sessions", "", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  auto id = nlohmann::json::parse(created->body)["session_id"].get<std::string>();
  EXPECT_EQ(created->get_header_value("Access-Control-Allow-Origin"), "*");

  nlohmann::json body = {{"text", "How many animals are in savanna.jpg?"},
                         {"resources", {{{"name", "savanna.jpg"}, {"content_base64", "SlBFRw=="}}}}};
  auto posted = client.Post("/v1/sessions/" + id + "/messages", body.dump(), "application/json");
  ASSERT_TRUE(posted);
  ASSERT_EQ(posted->status, 200) << posted->body;
  auto trace = nlohmann::json::parse(posted->body);
  EXPECT_EQ(trace["plan"][0]["task"], "object-detection");
  EXPECT_EQ(trace["results"][0]["status"], "ok");
  auto artifact = fs::path(trace["results"][0]["resources"]["image"].get<std::string>()).filename().string();
  EXPECT_EQ(artifact, "t0-0.png");

  auto fetched = client.Get("/v1/sessions/" + id + "/traces/0");
  ASSERT_TRUE(fetched);
  EXPECT_EQ(fetched->status, 200);
  EXPECT_EQ(nlohmann::json::parse(fetched->body), trace);

  auto file = client.Get("/v1/artifacts/" + id + "/" + artifact);
  ASSERT_TRUE(file);
  EXPECT_EQ(file->status, 200);
  EXPECT_EQ(file->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(file->body, stubs::placeholder_bytes(Modality::image));
  auto upload = client.Get("/v1/artifacts/" + id + "/savanna.jpg");
  ASSERT_TRUE(upload);
  EXPECT_EQ(upload->body, "JPEG");

  auto listed = client.Get("/v1/sessions");
  ASSERT_TRUE(listed);
  EXPECT_EQ(nlohmann::json::parse(listed->body)["sessions"], nlohmann::json::array({id}));

  auto missing = client.Post("/v1/sessions/s4242/messages", R"({"text": "hi"})", "application/json");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(nlohmann::json::parse(missing->body)["error"]["type"], "unknown_session");
  EXPECT_EQ(client.Get("/v1/sessions/" + id + "/traces/5")->status, 404);
  EXPECT_EQ(client.Get("/v1/artifacts/" + id + "/session.jsonl")->status, 404);
  EXPECT_EQ(client.Get("/v1/artifacts/" + id + "/nope.png")->status, 404);

  auto bad = client.Post("/v1/sessions/" + id + "/messages", R"({"txt": "hi"})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST(HttpApi, BackendOutageIs503) {
  Fixture f(std::make_shared<DownBackend>());
  LocalServer server;
  mount_api(server.server(), *f.service);
  server.start();
  httplib::Client client(server.url());
  auto id = nlohmann::json::parse(client.Post("/v1/sessions", "", "application/json")->body)["session_id"]
                .get<std::string>();
  auto res = client.Post("/v1/sessions/" + id + "/messages", R"({"text": "hi"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_EQ(nlohmann::json::parse(res->body)["error"]["type"], "backend_unavailable");
}
