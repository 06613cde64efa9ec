#pragma once

// End-to-end conversational service: plan -> validate -> select -> execute
// -> respond, with per-session chat logs and persisted workflow traces.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/backend.hpp"
#include "conductor/controller.hpp"
#include "conductor/error.hpp"
#include "conductor/executor.hpp"
#include "conductor/manifest.hpp"
#include "conductor/registry.hpp"
#include "conductor/taskgraph.hpp"

namespace conductor {

using Trace = nlohmann::ordered_json;

// A file handed to the service with a request: inline bytes or a local path.
struct Attachment {
  std::string name;
  std::optional<std::string> content;
  std::optional<fs::path> source;
};

struct WorkflowTrace {
  std::string session_id;
  std::size_t turn = 0;
  std::string request;  // as presented to the planner
  std::vector<std::string> attachments;
  TaskGraph plan;
  ValidationReport validation;
  std::map<int, Assignment> assignments;
  std::map<int, InferenceResult> results;
  std::string response;
  std::vector<std::pair<std::string, double>> timings_ms;  // pipeline order
  std::vector<std::string> warnings;
};

// Stages appear in pipeline order.
inline Trace to_json(const WorkflowTrace& t) {
  Trace j;
  j["session_id"] = t.session_id;
  j["turn"] = t.turn;
  j["request"] = t.request;
  j["attachments"] = t.attachments;
  j["plan"] = to_json(t.plan);
  j["validation"] = to_json(t.validation);
  auto assignments = Trace::array();
  for (const auto& [_, a] : t.assignments) assignments.push_back(Trace::parse(to_json(a).dump()));
  j["assignments"] = std::move(assignments);
  auto results = Trace::array();
  for (const auto& [_, r] : t.results) results.push_back(Trace::parse(to_json(r).dump()));
  j["results"] = std::move(results);
  j["response"] = t.response;
  auto timings = Trace::object();
  for (const auto& [stage, ms] : t.timings_ms) timings[stage] = ms;
  j["timings_ms"] = std::move(timings);
  j["warnings"] = t.warnings;
  return j;
}

// Copy of a trace with every timing zeroed, for determinism comparisons.
inline Trace mask_timings(Trace trace) {
  if (trace.contains("timings_ms")) {
    for (auto& [_, v] : trace["timings_ms"].items()) v = 0;
  }
  if (trace.contains("results")) {
    for (auto& r : trace["results"]) r["duration_ms"] = 0;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Sessions

struct SessionRecord {
  ChatSession chat;
  std::vector<Trace> traces;  // append-only
  fs::path artifacts_dir;
  std::mutex turn_mutex;  // serializes requests within the session
};

// Sessions persisted as <root>/<id>/session.jsonl, one event per line.
class SessionStore {
 public:
  explicit SessionStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    reload();
  }

  const fs::path& root() const { return root_; }

  std::string create() {
    std::scoped_lock lock(mutex_);
    std::string id;
    do {
      char buf[32];
      std::snprintf(buf, sizeof buf, "s%04zu", ++counter_);
      id = buf;
    } while (sessions_.count(id));
    auto record = std::make_shared<SessionRecord>();
    record->chat = ChatSession(id);
    record->artifacts_dir = root_ / id;
    fs::create_directories(record->artifacts_dir);
    sessions_[id] = record;
    append_event(id, nlohmann::ordered_json{{"kind", "created"}, {"id", id}});
    return id;
  }

  std::vector<std::string> list() const {
    std::scoped_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
  }

  // Throws UnknownSession.
  std::shared_ptr<SessionRecord> get(const std::string& id) const {
    std::scoped_lock lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw UnknownSession("unknown session: " + id);
    return it->second;
  }

  bool contains(const std::string& id) const {
    std::scoped_lock lock(mutex_);
    return sessions_.count(id) != 0;
  }

  // Caller holds the record's turn_mutex.
  void record_resource(SessionRecord& s, const std::string& name, Modality kind) {
    s.chat.add_resource(name, kind);
    append_event(s.chat.id(), nlohmann::ordered_json{{"kind", "resource"}, {"name", name}, {"modality", std::string(to_string(kind))}});
  }

  void record_turn(SessionRecord& s, const std::string& role, const std::string& text) {
    s.chat.append(role, text);
    append_event(s.chat.id(), nlohmann::ordered_json{{"kind", "turn"}, {"role", role}, {"text", text}});
  }

  void record_trace(SessionRecord& s, Trace trace) {
    nlohmann::ordered_json event;
    event["kind"] = "trace";
    event["trace"] = trace;
    s.traces.push_back(std::move(trace));
    append_event(s.chat.id(), event);
  }

 private:
  template <typename J>
  void append_event(const std::string& id, const J& event) {
    std::scoped_lock lock(file_mutex_);
    std::ofstream out(root_ / id / "session.jsonl", std::ios::app | std::ios::binary);
    out << event.dump() << '\n';
  }

  void reload() {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root_)) {
      if (entry.is_directory() && fs::exists(entry.path() / "session.jsonl")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      auto id = dir.filename().string();
      auto record = std::make_shared<SessionRecord>();
      record->chat = ChatSession(id);
      record->artifacts_dir = dir;
      std::ifstream in(dir / "session.jsonl");
      std::string line;
      while (std::getline(in, line)) {
        auto event = nlohmann::ordered_json::parse(line, nullptr, false);
        if (event.is_discarded()) continue;  // torn final line after a crash
        auto kind = event.value("kind", std::string());
        if (kind == "turn") {
          record->chat.append(event.value("role", ""), event.value("text", ""));
        } else if (kind == "resource") {
          auto m = modality_from_string(event.value("modality", "text"));
          record->chat.add_resource(event.value("name", ""), m.value_or(Modality::text));
        } else if (kind == "trace") {
          record->traces.push_back(event["trace"]);
        }
      }
      sessions_[id] = record;
      if (id.size() > 1 && id[0] == 's') {
        try {
          counter_ = std::max<std::size_t>(counter_, std::stoul(id.substr(1)));
        } catch (const std::exception&) {
        }
      }
    }
  }

  fs::path root_;
  mutable std::mutex mutex_;
  std::mutex file_mutex_;
  std::map<std::string, std::shared_ptr<SessionRecord>> sessions_;
  std::size_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Service

struct ServiceConfig {
  ControllerConfig controller;
  SelectionConfig selection;
  std::vector<Demonstration> demos = DemoPool::builtin().select(3);
  std::size_t concurrency = std::max<std::size_t>(4, std::thread::hardware_concurrency());
  fs::path data_dir = fs::temp_directory_path() / "conductor-data";
};

inline std::string safe_file_name(const std::string& name) {
  auto base = fs::path(name).filename().string();
  if (base.empty() || base == "." || base == "..") throw Error("invalid attachment name: " + name);
  return base;
}

class Service {
 public:
  Service(ServiceConfig config, const Registry& registry, const Executor& executor,
          const TaskManifest& manifest = TaskManifest::builtin(), const PromptBook& prompts = PromptBook::builtin())
      : config_(std::move(config)),
        registry_(&registry),
        executor_(&executor),
        manifest_(&manifest),
        prompts_(&prompts),
        store_(config_.data_dir) {
    config_.controller.check();
  }

  std::string create_session() { return store_.create(); }
  std::vector<std::string> list_sessions() const { return store_.list(); }
  const SessionStore& store() const { return store_; }
  const ServiceConfig& config() const { return config_; }

  // Throws UnknownSession when the session or the turn index does not exist.
  Trace get_trace(const std::string& session_id, std::size_t turn) const {
    auto session = store_.get(session_id);
    std::scoped_lock lock(session->turn_mutex);
    if (turn >= session->traces.size()) {
      throw UnknownSession("session " + session_id + " has no turn " + std::to_string(turn));
    }
    return session->traces[turn];
  }

  std::size_t trace_count(const std::string& session_id) const {
    auto session = store_.get(session_id);
    std::scoped_lock lock(session->turn_mutex);
    return session->traces.size();
  }

  fs::path artifacts_dir(const std::string& session_id) const { return store_.get(session_id)->artifacts_dir; }

  // Runs one conversational turn. An empty session id creates a session.
  // BackendUnavailable / AuthError propagate; every other failure is recorded
  // in the returned trace.
  WorkflowTrace handle_request(std::string session_id, const std::string& text,
                               const std::vector<Attachment>& attachments = {}) {
    if (session_id.empty() || !store_.contains(session_id)) {
      if (!session_id.empty()) throw UnknownSession("unknown session: " + session_id);
      session_id = store_.create();
    }
    auto session = store_.get(session_id);
    std::scoped_lock lock(session->turn_mutex);

    WorkflowTrace trace;
    trace.session_id = session_id;
    trace.turn = session->traces.size();
    trace.request = text;
    for (const auto& a : attachments) {
      auto path = save_attachment(*session, a);
      auto kind = modality_from_path(path);
      store_.record_resource(*session, path, kind);
      trace.attachments.push_back(path);
      trace.request += "\n(attached " + std::string(to_string(kind)) + ": " + path + ")";
    }

    auto clock = std::chrono::steady_clock::now();
    auto lap = [&](const char* stage) {
      auto now = std::chrono::steady_clock::now();
      trace.timings_ms.emplace_back(stage, std::chrono::duration<double, std::milli>(now - clock).count());
      clock = now;
    };

    PlanningContext planning{manifest_, prompts_, config_.demos};
    try {
      auto outcome = plan_request(trace.request, session->chat, config_.controller, planning);
      trace.plan = std::move(outcome.graph);
      trace.warnings.insert(trace.warnings.end(), trace.plan.warnings().begin(), trace.plan.warnings().end());
    } catch (const ParseError& e) {
      trace.warnings.push_back(std::string("planning reply unusable, treated as an empty plan: ") + e.what());
    }
    lap("planning");

    trace.validation = validate(trace.plan, *manifest_);
    lap("validation");

    if (!trace.validation.ok()) {
      for (const auto& t : trace.plan.tasks()) {
        trace.results[t.id] = InferenceResult::failure(t.id, t.task, "", "invalid plan");
      }
    } else if (!trace.plan.empty()) {
      trace.assignments = select_all(trace.plan, trace.request);
      for (const auto& [_, a] : trace.assignments) {
        for (const auto& w : a.warnings) trace.warnings.push_back("task " + std::to_string(a.task_id) + ": " + w);
      }
      lap("selection");

      std::map<int, Assignment> runnable;
      for (const auto& [id, a] : trace.assignments) {
        if (!a.model_id.empty()) runnable.emplace(id, a);
      }
      ExecutionOptions options;
      options.artifact_dir = session->artifacts_dir;
      options.artifact_prefix = "t" + std::to_string(trace.turn) + "-";
      options.concurrency = config_.concurrency;
      trace.results = executor_->execute_graph(trace.plan, runnable, options).results;
      lap("execution");
    }

    auto prompt = build_response_prompt(trace.request, trace.plan, trace.assignments, trace.results, *prompts_);
    trace.response = complete(prompt, config_.controller);
    lap("response");

    store_.record_turn(*session, "user", trace.request);
    store_.record_turn(*session, "assistant", trace.response);
    store_.record_trace(*session, to_json(trace));
    return trace;
  }

 private:
  std::string save_attachment(SessionRecord& session, const Attachment& a) {
    auto target = session.artifacts_dir / safe_file_name(a.name);
    if (a.content) {
      write_text_file(target, *a.content);
    } else if (a.source) {
      fs::copy_file(*a.source, target, fs::copy_options::overwrite_existing);
    } else {
      throw Error("attachment " + a.name + " has neither content nor a source path");
    }
    return target.string();
  }

  // One selection per task, run concurrently. A task no model supports gets
  // an assignment with an empty model id and a warning.
  std::map<int, Assignment> select_all(const TaskGraph& plan, const std::string& request) const {
    const auto& tasks = plan.tasks();
    std::vector<Assignment> out(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    SelectionContext ctx{manifest_, prompts_};
    auto worker = [&] {
      for (auto i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
        try {
          out[i] = select(tasks[i], request, *registry_, config_.controller, config_.selection, ctx);
        } catch (const NoModelError& e) {
          out[i].task_id = tasks[i].id;
          out[i].method = AssignmentMethod::fallback;
          out[i].warnings.push_back(e.what());
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const auto workers = std::min(tasks.size(), std::max<std::size_t>(1, config_.concurrency));
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    std::map<int, Assignment> by_id;
    for (auto& a : out) by_id.emplace(a.task_id, std::move(a));
    return by_id;
  }

  ServiceConfig config_;
  const Registry* registry_;
  const Executor* executor_;
  const TaskManifest* manifest_;
  const PromptBook* prompts_;
  SessionStore store_;
};

}  // namespace conductor
