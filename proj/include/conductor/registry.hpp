#pragma once

// Expert model registry and task -> model assignment.

#include <algorithm>
#include <chrono>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/backend.hpp"
#include "conductor/controller.hpp"
#include "conductor/error.hpp"
#include "conductor/manifest.hpp"
#include "conductor/model.hpp"
#include "conductor/taskgraph.hpp"

namespace conductor {

// Immutable after load.
class Registry {
 public:
  Registry() = default;

  // Throws DuplicateModelError.
  explicit Registry(std::vector<ModelDescriptor> models) : models_(std::move(models)) {
    for (std::size_t i = 0; i < models_.size(); ++i) {
      if (!index_.emplace(models_[i].model_id, i).second) throw DuplicateModelError(models_[i].model_id);
    }
  }

  // {"models": [{model_id, task_types, downloads, description, endpoint|endpoints}]}
  // Throws SchemaError or DuplicateModelError.
  static Registry from_json(const nlohmann::json& doc, const TaskManifest& manifest = TaskManifest::builtin()) {
    const nlohmann::json* list = &doc;
    if (doc.is_object()) {
      if (!doc.contains("models")) throw SchemaError("registry must hold a \"models\" list");
      list = &doc["models"];
    }
    if (!list->is_array()) throw SchemaError("registry models must be a list");
    std::vector<ModelDescriptor> models;
    for (const auto& entry : *list) models.push_back(parse_descriptor(entry, manifest));
    return Registry(std::move(models));
  }

  static Registry load(const fs::path& path, const TaskManifest& manifest = TaskManifest::builtin()) {
    auto doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("registry file is not valid JSON: " + path.string());
    return from_json(doc, manifest);
  }

  const std::vector<ModelDescriptor>& models() const { return models_; }
  std::size_t size() const { return models_.size(); }

  const ModelDescriptor* find(const std::string& model_id) const {
    auto it = index_.find(model_id);
    return it == index_.end() ? nullptr : &models_[it->second];
  }

 private:
  static Endpoint parse_endpoint(const nlohmann::json& e, const std::string& model_id) {
    auto kind = e.value("kind", std::string("local"));
    if (kind == "local") return Endpoint::local(e.value("handler", std::string()));
    if (kind == "remote") {
      if (!e.contains("url")) throw SchemaError("model " + model_id + ": remote endpoint needs a url");
      auto timeout = std::chrono::milliseconds(e.value("timeout_ms", 30'000));
      return Endpoint::remote(e["url"].get<std::string>(), timeout);
    }
    throw SchemaError("model " + model_id + ": unknown endpoint kind \"" + kind + "\"");
  }

  static ModelDescriptor parse_descriptor(const nlohmann::json& entry, const TaskManifest& manifest) {
    ModelDescriptor m;
    try {
      m.model_id = entry.at("model_id").get<std::string>();
      if (m.model_id.empty()) throw SchemaError("model_id must not be empty");
      for (const auto& t : entry.at("task_types")) {
        auto name = t.get<std::string>();
        const auto* type = manifest.find(name);
        if (!type) throw SchemaError("model " + m.model_id + " lists unknown task type \"" + name + "\"");
        m.task_types.insert(type->name);
      }
      if (m.task_types.empty()) throw SchemaError("model " + m.model_id + " lists no task types");
      const auto& downloads = entry.value("downloads", nlohmann::json(0));
      if (!downloads.is_number_integer() || downloads.get<long long>() < 0) {
        throw SchemaError("model " + m.model_id + ": downloads must be a non-negative integer");
      }
      m.downloads = downloads.get<std::uint64_t>();
      m.description = entry.value("description", std::string());
      if (entry.contains("endpoints")) {
        for (const auto& e : entry["endpoints"]) m.endpoints.push_back(parse_endpoint(e, m.model_id));
      } else if (entry.contains("endpoint")) {
        m.endpoints.push_back(parse_endpoint(entry["endpoint"], m.model_id));
      } else {
        m.endpoints.push_back(Endpoint::local());
      }
      int locals = 0;
      int remotes = 0;
      for (const auto& e : m.endpoints) (e.kind == Endpoint::Kind::local ? locals : remotes)++;
      if (locals > 1 || remotes > 1) throw SchemaError("model " + m.model_id + ": at most one endpoint per kind");
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed registry entry: ") + e.what());
    }
    return m;
  }

  std::vector<ModelDescriptor> models_;
  std::map<std::string, std::size_t> index_;
};

struct SelectionConfig {
  std::size_t k = 5;
  bool short_circuit_single = true;
};

// Models supporting `task_type`, most downloaded first (ties by model_id),
// at most config.k of them. Throws UnknownTaskError or NoModelError.
inline std::vector<ModelDescriptor> candidates(const Registry& registry, const std::string& task_type,
                                               const SelectionConfig& config,
                                               const TaskManifest& manifest = TaskManifest::builtin()) {
  if (config.k < 1) throw SchemaError("candidate cap K must be at least 1");
  const auto& canonical = manifest.at(task_type).name;
  std::vector<const ModelDescriptor*> matching;
  for (const auto& m : registry.models()) {
    if (m.task_types.count(canonical)) matching.push_back(&m);
  }
  if (matching.empty()) throw NoModelError(task_type);
  std::sort(matching.begin(), matching.end(), [](const ModelDescriptor* a, const ModelDescriptor* b) {
    if (a->downloads != b->downloads) return a->downloads > b->downloads;
    return a->model_id < b->model_id;
  });
  if (matching.size() > config.k) matching.resize(config.k);
  std::vector<ModelDescriptor> out;
  out.reserve(matching.size());
  for (const auto* m : matching) out.push_back(*m);
  return out;
}

struct SelectionContext {
  const TaskManifest* manifest = &TaskManifest::builtin();
  const PromptBook* prompts = &PromptBook::builtin();
};

// Assigns a model to `task`: short-circuits a lone candidate, otherwise asks
// the controller to choose. An unparseable reply or an id outside the
// candidate list falls back to the top-ranked candidate.
inline Assignment select(const Task& task, const std::string& request, const Registry& registry,
                         const ControllerConfig& controller, const SelectionConfig& config,
                         const SelectionContext& ctx = {}) {
  auto offered = candidates(registry, task.task, config, *ctx.manifest);
  Assignment a;
  a.task_id = task.id;
  for (const auto& c : offered) a.candidates.push_back(c.model_id);

  if (config.short_circuit_single && offered.size() == 1) {
    a.model_id = offered.front().model_id;
    a.reason = "only one candidate model supports " + task.task;
    a.method = AssignmentMethod::short_circuit;
    return a;
  }

  auto prompt = build_selection_prompt(request, task, offered, *ctx.prompts);
  try {
    auto choice = ask_and_parse(prompt, controller, [](const std::string& reply) { return parse_selection(reply); });
    if (std::find(a.candidates.begin(), a.candidates.end(), choice.model_id) != a.candidates.end()) {
      a.model_id = choice.model_id;
      a.reason = choice.reason;
      a.method = AssignmentMethod::llm_choice;
      return a;
    }
    a.warnings.push_back("controller chose \"" + choice.model_id + "\", which is not a candidate");
  } catch (const ParseError& e) {
    a.warnings.push_back(std::string("model selection reply unusable: ") + e.what());
  }
  a.model_id = offered.front().model_id;
  a.reason = "fallback to the most downloaded candidate";
  a.method = AssignmentMethod::fallback;
  return a;
}

}  // namespace conductor
