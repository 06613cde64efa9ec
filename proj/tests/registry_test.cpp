#include <gtest/gtest.h>

#include "conductor/registry.hpp"
#include "support.hpp"

using namespace conductor;
using testing_support::script_from;

namespace {

ModelDescriptor model(std::string id, std::set<std::string> types, std::uint64_t downloads) {
  return ModelDescriptor{std::move(id), std::move(types), downloads, "", {Endpoint::local()}};
}

Task detect(int id = 0) { return Task{"object-detection", id, {-1}, {{"image", "a.jpg"}}}; }

ControllerConfig scripted(const std::string& table) {
  ControllerConfig c;
  c.backend = script_from(table);
  return c;
}

}  // namespace

TEST(Registry, LoadsSampleRegistry) {
  auto r = Registry::load(testing_support::data_path("registry.json"));
  ASSERT_NE(r.find("facebook/detr-resnet-101"), nullptr);
  EXPECT_TRUE(r.find("facebook/detr-resnet-101")->task_types.count("object-detection"));
  // every manifest task is served by at least one sample model
  for (const auto& name : TaskManifest::builtin().names()) {
    EXPECT_NO_THROW(candidates(r, name, SelectionConfig{})) << name;
  }
}

TEST(Registry, SchemaErrors) {
  EXPECT_THROW(Registry::from_json(nlohmann::json::parse(R"([{"model_id": "m", "task_types": ["teleport"]}])")),
               SchemaError);
  EXPECT_THROW(Registry::from_json(nlohmann::json::parse(R"([{"model_id": "m", "task_types": []}])")), SchemaError);
  EXPECT_THROW(Registry::from_json(nlohmann::json::parse(
                   R"([{"model_id": "m", "task_types": ["summarization"], "downloads": -3}])")),
               SchemaError);
  EXPECT_THROW(Registry::from_json(nlohmann::json::parse(
                   R"([{"model_id": "m", "task_types": ["summarization"], "endpoint": {"kind": "remote"}}])")),
               SchemaError);
  EXPECT_THROW(Registry::from_json(nlohmann::json::parse(
                   R"([{"model_id": "m", "task_types": ["summarization"]}, {"model_id": "m", "task_types": ["summarization"]}])")),
               DuplicateModelError);
}

TEST(Registry, EndpointsAndAliases) {
  auto r = Registry::from_json(nlohmann::json::parse(R"({"models": [
      {"model_id": "v", "task_types": ["visual-quesrion-answering"],
       "endpoints": [{"kind": "local", "handler": "vqa"}, {"kind": "remote", "url": "http://h/x", "timeout_ms": 250}]}]})"));
  const auto* m = r.find("v");
  ASSERT_NE(m, nullptr);
  EXPECT_TRUE(m->task_types.count("visual-question-answering"));
  EXPECT_EQ(m->endpoint(Endpoint::Kind::local)->handler, "vqa");
  EXPECT_EQ(m->endpoint(Endpoint::Kind::remote)->timeout, std::chrono::milliseconds(250));
}

TEST(Candidates, RankedByDownloadsThenIdAndCappedAtK) {
  Registry r({model("b", {"object-detection"}, 10), model("a", {"object-detection"}, 10),
              model("c", {"object-detection"}, 99), model("d", {"image-cls"}, 1000), model("e", {"object-detection"}, 1)});
  auto c = candidates(r, "object-detection", SelectionConfig{3, true});
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].model_id, "c");
  EXPECT_EQ(c[1].model_id, "a");
  EXPECT_EQ(c[2].model_id, "b");
  EXPECT_THROW(candidates(r, "summarization", SelectionConfig{}), NoModelError);
  EXPECT_THROW(candidates(r, "teleport", SelectionConfig{}), UnknownTaskError);
  EXPECT_THROW(candidates(r, "object-detection", SelectionConfig{0, true}), SchemaError);
}

TEST(Select, ShortCircuitsLoneCandidateWithoutAskingTheController) {
  Registry r({model("only", {"object-detection"}, 5)});
  auto config = scripted(R"({"default": "{\"id\": \"other\"}"})");
  auto a = select(detect(), "req", r, config, SelectionConfig{});
  EXPECT_EQ(a.model_id, "only");
  EXPECT_EQ(a.method, AssignmentMethod::short_circuit);
  EXPECT_EQ(std::static_pointer_cast<ScriptedBackend>(config.backend)->call_count(), 0u);
}

TEST(Select, UsesControllerChoice) {
  Registry r({model("x", {"object-detection"}, 5), model("y", {"object-detection"}, 9)});
  auto config = scripted(R"({"default": "{\"id\": \"x\", \"reason\": \"smaller\"}"})");
  auto a = select(detect(), "req", r, config, SelectionConfig{});
  EXPECT_EQ(a.model_id, "x");
  EXPECT_EQ(a.reason, "smaller");
  EXPECT_EQ(a.method, AssignmentMethod::llm_choice);
  EXPECT_EQ(a.candidates, (std::vector<std::string>{"y", "x"}));
}

TEST(Select, FallsBackOnUnknownIdOrGarbage) {
  Registry r({model("x", {"object-detection"}, 5), model("y", {"object-detection"}, 9), model("z", {"image-cls"}, 50)});
  for (const char* table : {R"({"default": "{\"id\": \"z\"}"})", R"({"default": "pick y"})"}) {
    auto a = select(detect(), "req", r, scripted(table), SelectionConfig{});
    EXPECT_EQ(a.model_id, "y");
    EXPECT_EQ(a.method, AssignmentMethod::fallback);
    EXPECT_FALSE(a.warnings.empty());
  }
}

TEST(Select, SelectionPromptListsCandidates) {
  Registry r({model("x", {"object-detection"}, 5), model("y", {"object-detection"}, 9)});
  auto config = scripted(R"({"default": "{\"id\": \"x\"}"})");
  select(detect(3), "how many giraffes?", r, config, SelectionConfig{});
  auto prompt = std::static_pointer_cast<ScriptedBackend>(config.backend)->calls().at(0).prompt;
  EXPECT_NE(prompt.find(R"({"model_id":"y","metadata":{"downloads":9)"), std::string::npos);
  EXPECT_NE(prompt.find("User Input: how many giraffes?"), std::string::npos);
  EXPECT_NE(prompt.find(R"(Task: {"task":"object-detection","id":3)"), std::string::npos);
}
