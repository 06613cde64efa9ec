#pragma once

// Types shared by selection, execution and response generation.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "conductor/resources.hpp"

namespace conductor {

struct Endpoint {
  enum class Kind { local, remote };

  Kind kind = Kind::local;
  std::string handler;  // local: stub handler name; empty selects the task type's stub
  std::string url;      // remote
  std::chrono::milliseconds timeout{30'000};

  static Endpoint local(std::string handler = {}) { return {Kind::local, std::move(handler), {}, {}}; }
  static Endpoint remote(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
    return {Kind::remote, {}, std::move(url), timeout};
  }

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

inline std::string_view to_string(Endpoint::Kind k) { return k == Endpoint::Kind::local ? "local" : "remote"; }

struct ModelDescriptor {
  std::string model_id;
  std::set<std::string> task_types;  // canonical task names
  std::uint64_t downloads = 0;
  std::string description;
  std::vector<Endpoint> endpoints;  // at most one of each kind

  const Endpoint* endpoint(Endpoint::Kind kind) const {
    for (const auto& e : endpoints) {
      if (e.kind == kind) return &e;
    }
    return nullptr;
  }
};

enum class AssignmentMethod { llm_choice, short_circuit, fallback };

inline std::string_view to_string(AssignmentMethod m) {
  switch (m) {
    case AssignmentMethod::llm_choice:
      return "llm_choice";
    case AssignmentMethod::short_circuit:
      return "short_circuit";
    case AssignmentMethod::fallback:
      return "fallback";
  }
  return "fallback";
}

struct Assignment {
  int task_id = 0;
  std::string model_id;
  std::string reason;
  AssignmentMethod method = AssignmentMethod::llm_choice;
  std::vector<std::string> candidates;  // ids offered, best first
  std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const Assignment& a) {
  return {{"task_id", a.task_id},
          {"model_id", a.model_id},
          {"reason", a.reason},
          {"method", std::string(to_string(a.method))},
          {"candidates", a.candidates},
          {"warnings", a.warnings}};
}

enum class ResultStatus { ok, failed };

struct InferenceResult {
  int task_id = 0;
  std::string task;
  std::string model_id;
  std::map<std::string, std::string> args;  // as dispatched, placeholders resolved
  nlohmann::json payload;  // null unless ok
  ProducedResources produced_resources;
  ResultStatus status = ResultStatus::ok;
  std::string message;  // failure reason
  double duration_ms = 0.0;

  bool ok() const { return status == ResultStatus::ok; }

  static InferenceResult failure(int task_id, std::string task, std::string model_id, std::string message) {
    InferenceResult r;
    r.task_id = task_id;
    r.task = std::move(task);
    r.model_id = std::move(model_id);
    r.status = ResultStatus::failed;
    r.message = std::move(message);
    return r;
  }
};

inline nlohmann::json resources_to_json(const ProducedResources& resources) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [kind, locator] : resources) out[std::string(to_string(kind))] = locator;
  return out;
}

inline nlohmann::json to_json(const InferenceResult& r) {
  nlohmann::json out = {{"task_id", r.task_id},
                        {"task", r.task},
                        {"model_id", r.model_id},
                        {"args", r.args},
                        {"status", r.ok() ? "ok" : "failed"},
                        {"payload", r.payload},
                        {"resources", resources_to_json(r.produced_resources)},
                        {"duration_ms", r.duration_ms}};
  if (!r.ok()) out["message"] = r.message;
  return out;
}

}  // namespace conductor
