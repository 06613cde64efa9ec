#pragma once

// Stage prompts built by slot substitution, demonstration pools, chat
// sessions, and parsing of structured controller replies.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/backend.hpp"
#include "conductor/error.hpp"
#include "conductor/json_scan.hpp"
#include "conductor/manifest.hpp"
#include "conductor/model.hpp"
#include "conductor/prompt_template.hpp"
#include "conductor/taskgraph.hpp"

namespace conductor {

// The four stage templates.
struct PromptBook {
  PromptTemplate planning;
  PromptTemplate selection;
  PromptTemplate response;
  PromptTemplate critic;

  static PromptBook load(const fs::path& dir) {
    return {PromptTemplate::load(Stage::planning, dir / "planning.txt"),
            PromptTemplate::load(Stage::selection, dir / "selection.txt"),
            PromptTemplate::load(Stage::response, dir / "response.txt"),
            PromptTemplate::load(Stage::critic, dir / "critic.txt")};
  }

  static const PromptBook& builtin() {
    static const PromptBook book = load(asset_dir() / "prompts");
    return book;
  }
};

// ---------------------------------------------------------------------------
// Demonstrations

struct Demonstration {
  std::string request;
  std::string plan;  // canonical four-slot JSON text
  std::set<std::string> task_types;
};

// Throws ParseError if the plan does not parse, SchemaError if it does not validate.
inline Demonstration make_demonstration(std::string request, std::string_view raw_plan,
                                        const TaskManifest& manifest = TaskManifest::builtin()) {
  auto graph = parse_plan(raw_plan, manifest);
  auto report = validate(graph, manifest);
  if (!report.ok()) {
    throw SchemaError("demonstration plan is invalid: " + report.violations.front().message);
  }
  Demonstration demo{std::move(request), serialize_plan(graph), {}};
  for (const auto& t : graph.tasks()) demo.task_types.insert(t.task);
  return demo;
}

class DemoPool {
 public:
  DemoPool() = default;
  explicit DemoPool(std::vector<Demonstration> demos) : demos_(std::move(demos)) {}

  static DemoPool load(const fs::path& path, const TaskManifest& manifest = TaskManifest::builtin()) {
    auto doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.contains("demonstrations")) {
      throw SchemaError("demonstration file must hold a \"demonstrations\" list: " + path.string());
    }
    std::vector<Demonstration> demos;
    for (const auto& d : doc["demonstrations"]) {
      demos.push_back(make_demonstration(d.at("request").get<std::string>(),
                                         d.at("plan").get<std::string>(), manifest));
    }
    return DemoPool(std::move(demos));
  }

  static const DemoPool& builtin() {
    static const DemoPool pool = load(asset_dir() / "demos.json");
    return pool;
  }

  const std::vector<Demonstration>& all() const { return demos_; }

  // Takes up to `count` demonstrations in pool order. With `variety`, a
  // demonstration is skipped when it would push the number of distinct task
  // types above that cap.
  std::vector<Demonstration> select(std::size_t count, std::optional<std::size_t> variety = std::nullopt) const {
    std::vector<Demonstration> out;
    std::set<std::string> types;
    for (const auto& demo : demos_) {
      if (out.size() >= count) break;
      if (variety) {
        auto merged = types;
        merged.insert(demo.task_types.begin(), demo.task_types.end());
        if (merged.size() > *variety) continue;
        types = std::move(merged);
      } else {
        types.insert(demo.task_types.begin(), demo.task_types.end());
      }
      out.push_back(demo);
    }
    return out;
  }

 private:
  std::vector<Demonstration> demos_;
};

inline std::size_t distinct_task_types(std::span<const Demonstration> demos) {
  std::set<std::string> types;
  for (const auto& d : demos) types.insert(d.task_types.begin(), d.task_types.end());
  return types.size();
}

// ---------------------------------------------------------------------------
// Chat sessions

struct ChatTurn {
  std::string role;  // "user" or "assistant"
  std::string text;

  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

inline constexpr std::size_t kChatLogWindow = 10;

// Append-only; owned by a single writer.
class ChatSession {
 public:
  ChatSession() = default;
  explicit ChatSession(std::string id) : id_(std::move(id)) {}

  const std::string& id() const { return id_; }
  const std::vector<ChatTurn>& chat_log() const { return log_; }
  const std::map<std::string, Modality>& resource_index() const { return resources_; }

  void append(std::string role, std::string text) { log_.push_back({std::move(role), std::move(text)}); }
  void add_resource(std::string name, Modality kind) { resources_[std::move(name)] = kind; }

 private:
  std::string id_;
  std::vector<ChatTurn> log_;
  std::map<std::string, Modality> resources_;
};

// The most recent `window` turns as "role: text" lines; "[]" when empty.
inline std::string render_chat_log(const ChatSession& session, std::size_t window = kChatLogWindow) {
  const auto& log = session.chat_log();
  if (log.empty() || window == 0) return "[]";
  auto first = log.size() > window ? log.size() - window : 0;
  std::string out;
  for (auto i = first; i < log.size(); ++i) {
    if (!out.empty()) out += '\n';
    out += log[i].role + ": " + log[i].text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompt builders

inline std::string render_task_list(std::span<const std::string> names) {
  if (names.empty()) return "[]";
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

inline std::string render_demonstrations(std::span<const Demonstration> demos) {
  if (demos.empty()) return "[]";
  std::string out;
  for (const auto& d : demos) {
    if (!out.empty()) out += '\n';
    out += "Request: " + d.request + "\nPlan: " + d.plan;
  }
  return out;
}

inline std::string build_planning_prompt(const std::string& request, std::span<const std::string> available_tasks,
                                         std::span<const Demonstration> demos, const ChatSession& session,
                                         const PromptBook& prompts = PromptBook::builtin()) {
  return prompts.planning.render({{"Available Task List", render_task_list(available_tasks)},
                                  {"Demonstrations", render_demonstrations(demos)},
                                  {"Chat Logs", render_chat_log(session)},
                                  {"User Input", request}});
}

inline std::string render_candidate(const ModelDescriptor& m) {
  nlohmann::ordered_json metadata;
  metadata["downloads"] = m.downloads;
  metadata["task_types"] = m.task_types;
  std::vector<std::string> kinds;
  for (const auto& e : m.endpoints) kinds.emplace_back(to_string(e.kind));
  metadata["endpoints"] = kinds;
  nlohmann::ordered_json line;
  line["model_id"] = m.model_id;
  line["metadata"] = std::move(metadata);
  line["description"] = m.description;
  return line.dump();
}

// Throws NoModelError when `candidates` is empty.
inline std::string build_selection_prompt(const std::string& request, const Task& task,
                                          std::span<const ModelDescriptor> candidates,
                                          const PromptBook& prompts = PromptBook::builtin()) {
  if (candidates.empty()) throw NoModelError(task.task);
  std::string lines;
  for (const auto& c : candidates) lines += '\n' + render_candidate(c);
  return prompts.selection.render(
      {{"Candidate Models", lines + '\n'}, {"User Input", request}, {"Task", to_json(task).dump()}});
}

inline std::string render_assignments(const TaskGraph& graph, const std::map<int, Assignment>& assignments) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : graph.tasks()) {
    auto it = assignments.find(t.id);
    if (it == assignments.end()) continue;
    nlohmann::ordered_json item;
    item["task_id"] = t.id;
    item["model_id"] = it->second.model_id;
    item["reason"] = it->second.reason;
    arr.push_back(std::move(item));
  }
  return arr.dump();
}

inline std::string render_prediction(const InferenceResult& r) {
  std::string out = "{\"task_id\": " + std::to_string(r.task_id) + ", \"task\": " + nlohmann::json(r.task).dump() +
                    ", \"model_id\": " + nlohmann::json(r.model_id).dump() +
                    ", \"status\": " + (r.ok() ? "\"ok\"" : "\"failed\"");
  if (r.ok()) {
    out += ", \"inference result\": " + r.payload.dump();
    if (!r.produced_resources.empty()) out += ", \"resources\": " + resources_to_json(r.produced_resources).dump();
  } else {
    out += ", \"error\": " + nlohmann::json(r.message).dump();
  }
  return out + "}";
}

inline std::string render_predictions(const std::map<int, InferenceResult>& predictions) {
  std::string out = "[";
  bool first = true;
  for (const auto& [_, r] : predictions) {
    if (!first) out += ", ";
    out += render_prediction(r);
    first = false;
  }
  return out + "]";
}

inline std::string build_response_prompt(const std::string& user_input, const TaskGraph& tasks,
                                         const std::map<int, Assignment>& assignments,
                                         const std::map<int, InferenceResult>& predictions,
                                         const PromptBook& prompts = PromptBook::builtin()) {
  return prompts.response.render({{"User Input", user_input},
                                  {"Tasks", serialize_plan(tasks)},
                                  {"Model Assignment", render_assignments(tasks, assignments)},
                                  {"Predictions", render_predictions(predictions)}});
}

// ---------------------------------------------------------------------------
// Reply parsing

struct Selection {
  std::string model_id;
  std::string reason;
};

// First JSON object in `raw` with a string "id". Throws ParseError.
inline Selection parse_selection(std::string_view raw) {
  auto obj = json_scan::first_object_where(
      raw, [](const nlohmann::json& o) { return o.contains("id") && o["id"].is_string(); });
  if (!obj) throw ParseError("no JSON object with an \"id\" field in controller output");
  Selection s{(*obj)["id"].get<std::string>(), ""};
  if (auto it = obj->find("reason"); it != obj->end()) s.reason = it->is_string() ? it->get<std::string>() : it->dump();
  return s;
}

inline constexpr std::string_view kFormatReminder =
    "Reminder: reply with the JSON output only, in exactly the format described above.";

// Asks the controller and parses its reply with `parse`; a ParseError triggers
// a re-ask with a one-line format reminder, up to max_retries times.
template <typename Parse>
auto ask_and_parse(const std::string& prompt, const ControllerConfig& config, Parse&& parse,
                   std::vector<std::string>* replies = nullptr) {
  std::string last_error;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    auto text = attempt == 0 ? prompt : prompt + "\n" + std::string(kFormatReminder);
    auto reply = complete(text, config);
    if (replies) replies->push_back(reply);
    try {
      return parse(reply);
    } catch (const ParseError& e) {
      last_error = e.what();
      if (attempt == config.max_retries) throw;
    }
  }
  throw ParseError(last_error);
}

// ---------------------------------------------------------------------------
// Planning

class InvalidPlanError : public Error {
 public:
  InvalidPlanError(TaskGraph graph, ValidationReport report)
      : Error("controller produced an invalid plan: " + report.violations.front().message),
        graph_(std::move(graph)),
        report_(std::move(report)) {}
  const TaskGraph& graph() const { return graph_; }
  const ValidationReport& report() const { return report_; }

 private:
  TaskGraph graph_;
  ValidationReport report_;
};

struct PlanningContext {
  const TaskManifest* manifest = &TaskManifest::builtin();
  const PromptBook* prompts = &PromptBook::builtin();
  std::vector<Demonstration> demos = DemoPool::builtin().select(3);
};

struct PlanOutcome {
  TaskGraph graph;
  ValidationReport report;
  std::string prompt;
  std::vector<std::string> replies;
};

// Planning prompt -> controller -> parse_plan -> validate. Parse failures are
// retried then rethrown; validation problems are returned in the report.
inline PlanOutcome plan_request(const std::string& request, const ChatSession& session,
                                const ControllerConfig& config, const PlanningContext& ctx = {}) {
  PlanOutcome out;
  auto names = ctx.manifest->names();
  out.prompt = build_planning_prompt(request, names, ctx.demos, session, *ctx.prompts);
  out.graph = ask_and_parse(
      out.prompt, config, [&](const std::string& reply) { return parse_plan(reply, *ctx.manifest); }, &out.replies);
  out.report = validate(out.graph, *ctx.manifest);
  return out;
}

// As plan_request, but an invalid plan raises InvalidPlanError.
inline TaskGraph plan(const std::string& request, const ChatSession& session, const ControllerConfig& config,
                      const PlanningContext& ctx = {}) {
  auto outcome = plan_request(request, session, config, ctx);
  if (!outcome.report.ok()) throw InvalidPlanError(std::move(outcome.graph), std::move(outcome.report));
  return std::move(outcome.graph);
}

}  // namespace conductor
