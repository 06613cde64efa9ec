#pragma once

// Executes assigned plans stage by stage on local stubs or remote endpoints.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/error.hpp"
#include "conductor/manifest.hpp"
#include "conductor/model.hpp"
#include "conductor/registry.hpp"
#include "conductor/resources.hpp"
#include "conductor/taskgraph.hpp"

namespace conductor {

// What a stub sees when invoked.
struct StubRequest {
  const TaskType* type = nullptr;
  int task_id = 0;
  std::string model_id;
  std::map<std::string, std::string> args;  // resolved
  fs::path artifact_dir;
  std::string artifact_prefix;

  // Where a produced file of kind `m` should be written.
  fs::path artifact_path(Modality m) const {
    return artifact_dir / (artifact_prefix + std::to_string(task_id) + "." + std::string(default_extension(m)));
  }
};

struct StubReply {
  nlohmann::json payload;
  ProducedResources resources;
};

// Must be safe to call concurrently. Throwing marks the task failed.
using StubBehavior = std::function<StubReply(const StubRequest&)>;

inline std::string default_stub_model(const std::string& canonical_task) { return "stub/" + canonical_task; }

struct ExecutionOptions {
  fs::path artifact_dir = fs::temp_directory_path() / "conductor-artifacts";
  std::string artifact_prefix;  // prepended to "<task_id>.<ext>"
  std::size_t concurrency = std::max<std::size_t>(4, std::thread::hardware_concurrency());
};

struct ExecutionOutcome {
  std::map<int, InferenceResult> results;
  ResourceStore store;
};

inline constexpr std::string_view kUpstreamFailure = "upstream";
inline constexpr std::string_view kNoEndpoint = "no endpoint";
inline constexpr std::string_view kTimeout = "timeout";

class Executor {
 public:
  explicit Executor(const Registry* registry = nullptr, const TaskManifest& manifest = TaskManifest::builtin())
      : registry_(registry), manifest_(&manifest) {}

  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  // Registers (or replaces) the local stub serving `task_type`, which also
  // becomes reachable as model "stub/<task_type>". Throws UnknownTaskError.
  void register_stub(const std::string& task_type, StubBehavior behavior) {
    const auto& type = manifest_->at(task_type);
    std::unique_lock lock(mutex_);
    stubs_[type.name] = std::move(behavior);
  }

  // Named local handler, referenced from a registry endpoint's "handler".
  void register_handler(const std::string& name, StubBehavior behavior) {
    std::unique_lock lock(mutex_);
    handlers_[name] = std::move(behavior);
  }

  bool has_stub(const std::string& task_type) const {
    const auto* type = manifest_->find(task_type);
    std::shared_lock lock(mutex_);
    return type && stubs_.count(type->name);
  }

  const TaskManifest& manifest() const { return *manifest_; }
  const Registry* registry() const { return registry_; }

  // Runs one task whose args are already resolved. Local endpoints win over
  // remote ones. Never throws: failures are reported in the result status.
  InferenceResult dispatch(const Task& task, const Assignment& assignment,
                           const std::map<std::string, std::string>& resolved_args,
                           const ExecutionOptions& options = {}) const {
    const auto started = std::chrono::steady_clock::now();
    auto result = dispatch_untimed(task, assignment, resolved_args, options);
    result.args = resolved_args;
    result.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
  }

  // Stage by stage; tasks inside a stage run concurrently. A task whose
  // prerequisite failed is marked failed("upstream") and never dispatched.
  ExecutionOutcome execute_graph(const TaskGraph& graph, const std::map<int, Assignment>& assignments,
                                 const ExecutionOptions& options = {}) const {
    ExecutionOutcome out;
    std::vector<std::vector<int>> plan_stages;
    try {
      plan_stages = stages(graph);
    } catch (const GraphError& e) {
      for (const auto& t : graph.tasks()) {
        out.results[t.id] = InferenceResult::failure(t.id, t.task, "", std::string("invalid plan: ") + e.what());
      }
      return out;
    }

    for (const auto& stage : plan_stages) {
      struct Job {
        const Task* task;
        const Assignment* assignment;
        std::map<std::string, std::string> args;
      };
      std::vector<Job> jobs;
      for (int id : stage) {
        const Task& task = *graph.find(id);
        auto prereqs = task.prerequisites();
        bool upstream_ok = std::all_of(prereqs.begin(), prereqs.end(), [&](int p) {
          auto it = out.results.find(p);
          return it != out.results.end() && it->second.ok();
        });
        auto assigned = assignments.find(id);
        const std::string model = assigned == assignments.end() ? "" : assigned->second.model_id;
        if (!upstream_ok) {
          out.results[id] = InferenceResult::failure(id, task.task, model, std::string(kUpstreamFailure));
          continue;
        }
        if (assigned == assignments.end()) {
          out.results[id] = InferenceResult::failure(id, task.task, "", "no model assigned");
          continue;
        }
        try {
          jobs.push_back({&task, &assigned->second, resolve_args(task, out.store)});
        } catch (const Error& e) {
          out.results[id] = InferenceResult::failure(id, task.task, model, e.what());
        }
      }

      std::vector<InferenceResult> finished(jobs.size());
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (auto i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
          finished[i] = dispatch(*jobs[i].task, *jobs[i].assignment, jobs[i].args, options);
        }
      };
      const auto workers = std::min(jobs.size(), std::max<std::size_t>(1, options.concurrency));
      if (workers <= 1) {
        worker();
      } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
      }

      // Stage barrier: the coordinator alone writes results and the store.
      for (auto& r : finished) {
        if (r.ok()) out.store.put(r.task_id, r.produced_resources);
        out.results[r.task_id] = std::move(r);
      }
    }
    return out;
  }

 private:
  std::optional<StubBehavior> local_behavior(const TaskType& type, const std::string& model_id) const {
    std::shared_lock lock(mutex_);
    if (model_id == default_stub_model(type.name)) {
      if (auto it = stubs_.find(type.name); it != stubs_.end()) return it->second;
      return std::nullopt;
    }
    const ModelDescriptor* model = registry_ ? registry_->find(model_id) : nullptr;
    const Endpoint* local = model ? model->endpoint(Endpoint::Kind::local) : nullptr;
    if (!local) return std::nullopt;
    if (!local->handler.empty()) {
      if (auto it = handlers_.find(local->handler); it != handlers_.end()) return it->second;
      return std::nullopt;
    }
    if (auto it = stubs_.find(type.name); it != stubs_.end()) return it->second;
    return std::nullopt;
  }

  InferenceResult dispatch_untimed(const Task& task, const Assignment& assignment,
                                   const std::map<std::string, std::string>& args,
                                   const ExecutionOptions& options) const {
    const TaskType* type = manifest_->find(task.task);
    if (!type) return InferenceResult::failure(task.id, task.task, assignment.model_id, "unknown task type");

    if (auto behavior = local_behavior(*type, assignment.model_id)) {
      StubRequest request{type, task.id, assignment.model_id, args, options.artifact_dir, options.artifact_prefix};
      try {
        auto reply = (*behavior)(request);
        return finish(task, *type, assignment.model_id, std::move(reply));
      } catch (const std::exception& e) {
        return InferenceResult::failure(task.id, task.task, assignment.model_id, e.what());
      }
    }

    const ModelDescriptor* model = registry_ ? registry_->find(assignment.model_id) : nullptr;
    if (const Endpoint* remote = model ? model->endpoint(Endpoint::Kind::remote) : nullptr) {
      return call_remote(task, *type, assignment.model_id, *remote, args, options);
    }
    return InferenceResult::failure(task.id, task.task, assignment.model_id, std::string(kNoEndpoint));
  }

  static InferenceResult finish(const Task& task, const TaskType& type, const std::string& model_id,
                                StubReply reply) {
    for (const auto& [kind, _] : reply.resources) {
      if (kind != type.output) {
        return InferenceResult::failure(task.id, task.task, model_id,
                                        "expert produced a " + std::string(to_string(kind)) + " resource but " +
                                            type.name + " outputs " + std::string(to_string(type.output)));
      }
    }
    InferenceResult r;
    r.task_id = task.id;
    r.task = task.task;
    r.model_id = model_id;
    r.payload = reply.payload.is_null() ? nlohmann::json::object() : std::move(reply.payload);
    r.produced_resources = std::move(reply.resources);
    return r;
  }

  // Remote protocol: POST {model_id, task, args} -> {payload, resources}.
  // Resource values that are http(s) URLs are downloaded into the artifact dir.
  InferenceResult call_remote(const Task& task, const TaskType& type, const std::string& model_id,
                              const Endpoint& endpoint, const std::map<std::string, std::string>& args,
                              const ExecutionOptions& options) const {
    auto fail = [&](std::string message) {
      return InferenceResult::failure(task.id, task.task, model_id, std::move(message));
    };
    auto [origin, path] = split_url(endpoint.url);
    httplib::Client client(origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    nlohmann::json body = {{"model_id", model_id}, {"task", type.name}, {"args", args}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
      auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) return fail(std::string(kTimeout));
      return fail("remote endpoint error: " + httplib::to_string(err));
    }
    if (res->status != 200) return fail("remote endpoint returned HTTP " + std::to_string(res->status));
    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return fail("remote endpoint reply is not a JSON object");

    StubReply reply;
    reply.payload = doc.value("payload", nlohmann::json::object());
    const auto resources = doc.value("resources", nlohmann::json::object());
    for (const auto& [key, value] : resources.items()) {
      auto kind = modality_from_string(key);
      if (!kind || !value.is_string()) return fail("remote endpoint returned a malformed resource \"" + key + "\"");
      auto locator = value.get<std::string>();
      if (*kind != Modality::text && (locator.starts_with("http://") || locator.starts_with("https://"))) {
        StubRequest where{&type, task.id, model_id, args, options.artifact_dir, options.artifact_prefix};
        auto target = where.artifact_path(*kind);
        auto [res_origin, res_path] = split_url(locator);
        httplib::Client downloader(res_origin);
        downloader.set_read_timeout(timeout);
        auto file = downloader.Get(res_path);
        if (!file || file->status != 200) return fail("could not download remote resource " + locator);
        write_text_file(target, file->body);
        locator = target.string();
      }
      reply.resources[*kind] = locator;
    }
    return finish(task, type, model_id, std::move(reply));
  }

  const Registry* registry_;
  const TaskManifest* manifest_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, StubBehavior> stubs_;
  std::map<std::string, StubBehavior> handlers_;
};

}  // namespace conductor
