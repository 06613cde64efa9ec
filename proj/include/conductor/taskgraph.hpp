#pragma once

// Task plans: the four-slot task schema, plan parsing, validation,
// execution stages, and resource placeholder resolution.

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "conductor/error.hpp"
#include "conductor/json_scan.hpp"
#include "conductor/manifest.hpp"
#include "conductor/resources.hpp"

namespace conductor {

// dep value meaning "no prerequisite".
inline constexpr int kNoDependency = -1;

inline constexpr std::string_view kPlaceholderPrefix = "<resource>-";

struct Task {
  std::string task;  // task type name exactly as planned
  int id = 0;
  std::vector<int> dep;  // as planned, including the -1 sentinel
  std::map<std::string, std::string> args;

  // dep without the sentinel.
  std::set<int> prerequisites() const {
    std::set<int> out;
    for (int d : dep) {
      if (d != kNoDependency) out.insert(d);
    }
    return out;
  }

  friend bool operator==(const Task&, const Task&) = default;
};

// Task id named by an exact `<resource>-N` value.
inline std::optional<int> parse_placeholder(std::string_view value) {
  if (!value.starts_with(kPlaceholderPrefix)) return std::nullopt;
  auto digits = value.substr(kPlaceholderPrefix.size());
  if (digits.empty() || digits.size() > 9) return std::nullopt;
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  int n = 0;
  std::from_chars(digits.data(), digits.data() + digits.size(), n);
  return n;
}

inline std::string make_placeholder(int task_id) {
  return std::string(kPlaceholderPrefix) + std::to_string(task_id);
}

class TaskGraph {
 public:
  TaskGraph() = default;
  explicit TaskGraph(std::vector<Task> tasks, std::vector<std::string> warnings = {})
      : tasks_(std::move(tasks)), warnings_(std::move(warnings)) {
    for (const auto& t : tasks_) {
      auto& prereqs = edges_[t.id];
      auto deps = t.prerequisites();
      prereqs.insert(deps.begin(), deps.end());
    }
  }

  const std::vector<Task>& tasks() const { return tasks_; }
  // id -> prerequisite ids. Never contains the -1 sentinel.
  const std::map<int, std::set<int>>& edges() const { return edges_; }
  // Non-fatal findings from parsing (duplicate keys, ignored fields).
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool empty() const { return tasks_.empty(); }
  std::size_t size() const { return tasks_.size(); }

  const Task* find(int id) const {
    for (const auto& t : tasks_) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }

  std::vector<std::string> task_names() const {
    std::vector<std::string> out;
    out.reserve(tasks_.size());
    for (const auto& t : tasks_) out.push_back(t.task);
    return out;
  }

  friend bool operator==(const TaskGraph& a, const TaskGraph& b) { return a.tasks_ == b.tasks_; }

 private:
  std::vector<Task> tasks_;
  std::map<int, std::set<int>> edges_;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Wire format

inline nlohmann::ordered_json to_json(const Task& t) {
  nlohmann::ordered_json args = nlohmann::ordered_json::object();
  for (const auto& [k, v] : t.args) args[k] = v;
  return {{"task", t.task}, {"id", t.id}, {"dep", t.dep}, {"args", args}};
}

inline nlohmann::ordered_json to_json(const TaskGraph& g) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& t : g.tasks()) arr.push_back(to_json(t));
  return arr;
}

// Compact four-slot JSON text of a plan.
inline std::string serialize_plan(const TaskGraph& g) { return to_json(g).dump(); }

namespace detail {

inline int require_int(const nlohmann::json& v, std::string_view what, std::size_t index) {
  if (!v.is_number_integer()) {
    throw ParseError("task " + std::to_string(index) + ": \"" + std::string(what) +
                     "\" must be an integer, got " + v.dump());
  }
  return v.get<int>();
}

inline Task decode_task(const nlohmann::json& element, std::size_t index, const TaskManifest& manifest,
                        std::vector<std::string>& warnings) {
  if (!element.is_object()) {
    throw ParseError("plan element " + std::to_string(index) + " is not an object");
  }
  for (const char* slot : {"task", "id", "dep", "args"}) {
    if (!element.contains(slot)) {
      throw ParseError("plan element " + std::to_string(index) + " lacks the \"" + slot + "\" slot");
    }
  }
  for (const auto& [key, _] : element.items()) {
    if (key != "task" && key != "id" && key != "dep" && key != "args") {
      warnings.push_back("task " + std::to_string(index) + ": ignored unexpected field \"" + key + "\"");
    }
  }

  Task task;
  const auto& name = element["task"];
  if (!name.is_string()) throw ParseError("task " + std::to_string(index) + ": \"task\" must be a string");
  task.task = name.get<std::string>();
  if (!manifest.contains(task.task)) throw UnknownTaskError(task.task);

  task.id = require_int(element["id"], "id", index);
  if (task.id < 0) throw ParseError("task " + std::to_string(index) + ": \"id\" must be non-negative");

  const auto& dep = element["dep"];
  if (!dep.is_array()) throw ParseError("task " + std::to_string(index) + ": \"dep\" must be a list");
  for (const auto& d : dep) {
    int v = require_int(d, "dep", index);
    if (v < kNoDependency) throw ParseError("task " + std::to_string(index) + ": negative dep " + d.dump());
    task.dep.push_back(v);
  }

  const auto& args = element["args"];
  if (!args.is_object()) throw ParseError("task " + std::to_string(index) + ": \"args\" must be an object");
  for (const auto& [key, value] : args.items()) {
    if (!value.is_string()) {
      throw ParseError("task " + std::to_string(index) + ": argument \"" + key + "\" must be a string");
    }
    task.args.emplace(key, value.get<std::string>());
  }
  return task;
}

}  // namespace detail

// Extracts the first JSON array in `raw` (surrounding prose is ignored) and
// decodes it into a plan. Throws ParseError or UnknownTaskError.
inline TaskGraph parse_plan(std::string_view raw, const TaskManifest& manifest = TaskManifest::builtin()) {
  auto region = json_scan::first_array(raw);
  if (!region) throw ParseError("no JSON array found in controller output");

  std::vector<std::string> warnings;
  std::vector<std::set<std::string>> open_objects;
  auto on_event = [&](int /*depth*/, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    using E = nlohmann::json::parse_event_t;
    switch (event) {
      case E::object_start:
        open_objects.emplace_back();
        break;
      case E::object_end:
        if (!open_objects.empty()) open_objects.pop_back();
        break;
      case E::key: {
        auto key = parsed.get<std::string>();
        if (!open_objects.empty() && !open_objects.back().insert(key).second) {
          warnings.push_back("duplicate key \"" + key + "\"; last value wins");
        }
        break;
      }
      default:
        break;
    }
    return true;
  };
  auto doc = nlohmann::json::parse(*region, on_event);

  std::vector<Task> tasks;
  tasks.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    tasks.push_back(detail::decode_task(doc[i], i, manifest, warnings));
  }
  return TaskGraph(std::move(tasks), std::move(warnings));
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::optional<int> task_id;  // nullopt: the plan as a whole
  std::string rule;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  bool has(std::string_view rule) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.rule == rule; });
  }
};

inline nlohmann::ordered_json to_json(const ValidationReport& report) {
  auto list = nlohmann::ordered_json::array();
  for (const auto& v : report.violations) {
    nlohmann::ordered_json item;
    item["task"] = v.task_id ? nlohmann::ordered_json(*v.task_id) : nlohmann::ordered_json("plan");
    item["rule"] = v.rule;
    item["message"] = v.message;
    list.push_back(std::move(item));
  }
  return {{"ok", report.ok()}, {"violations", std::move(list)}};
}

namespace rules {
inline constexpr std::string_view duplicate_id = "duplicate-id";
inline constexpr std::string_view dangling_dep = "dangling-dep";
inline constexpr std::string_view cycle = "cycle";
inline constexpr std::string_view unknown_task = "unknown-task";
inline constexpr std::string_view arg_schema = "arg-schema";
inline constexpr std::string_view placeholder_syntax = "placeholder-syntax";
inline constexpr std::string_view placeholder_dep = "placeholder-dep";
}  // namespace rules

namespace detail {

// Ids left over after repeatedly removing tasks with no remaining
// prerequisites; empty iff the relation (restricted to known ids) is acyclic.
inline std::set<int> cyclic_remainder(const std::map<int, std::set<int>>& edges) {
  std::map<int, std::set<int>> pending;
  for (const auto& [id, prereqs] : edges) {
    auto& p = pending[id];
    for (int d : prereqs) {
      if (edges.count(d)) p.insert(d);
    }
  }
  bool progressed = true;
  while (progressed && !pending.empty()) {
    progressed = false;
    std::vector<int> ready;
    for (const auto& [id, p] : pending) {
      if (p.empty()) ready.push_back(id);
    }
    for (int id : ready) {
      pending.erase(id);
      for (auto& [_, p] : pending) p.erase(id);
      progressed = true;
    }
  }
  std::set<int> out;
  for (const auto& [id, _] : pending) out.insert(id);
  return out;
}

}  // namespace detail

// Reports every violation found, not only the first.
inline ValidationReport validate(const TaskGraph& graph, const TaskManifest& manifest = TaskManifest::builtin()) {
  ValidationReport report;
  auto add = [&](std::optional<int> id, std::string_view rule, std::string message) {
    report.violations.push_back({id, std::string(rule), std::move(message)});
  };

  std::map<int, int> id_counts;
  for (const auto& t : graph.tasks()) ++id_counts[t.id];
  for (const auto& [id, count] : id_counts) {
    if (count > 1) add(id, rules::duplicate_id, "id " + std::to_string(id) + " is used by " +
                                                    std::to_string(count) + " tasks");
  }

  for (const auto& t : graph.tasks()) {
    const auto prereqs = t.prerequisites();
    for (int d : prereqs) {
      if (!id_counts.count(d)) {
        add(t.id, rules::dangling_dep, "dep " + std::to_string(d) + " names no task in the plan");
      }
    }

    const TaskType* type = manifest.find(t.task);
    if (!type) {
      add(t.id, rules::unknown_task, "task type \"" + t.task + "\" is not supported");
    } else {
      std::set<std::string> expected;
      for (auto m : type->arg_schema) expected.insert(std::string(to_string(m)));
      for (const auto& key : expected) {
        if (!t.args.count(key)) add(t.id, rules::arg_schema, "missing argument \"" + key + "\"");
      }
      for (const auto& [key, _] : t.args) {
        if (!expected.count(key)) add(t.id, rules::arg_schema, "unexpected argument \"" + key + "\"");
      }
    }

    for (const auto& [key, value] : t.args) {
      auto ref = parse_placeholder(value);
      if (!ref) {
        if (value.find("<resource>") != std::string::npos) {
          add(t.id, rules::placeholder_syntax,
              "argument \"" + key + "\" has malformed resource placeholder \"" + value + "\"");
        }
        continue;
      }
      if (!prereqs.count(*ref)) {
        add(t.id, rules::placeholder_dep,
            "argument \"" + key + "\" refers to task " + std::to_string(*ref) + " which is not in dep");
      }
    }
  }

  auto remainder = detail::cyclic_remainder(graph.edges());
  if (!remainder.empty()) {
    std::string ids;
    for (int id : remainder) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
    add(std::nullopt, rules::cycle, "dependency cycle among tasks {" + ids + "}");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Scheduling

// Kahn layering: stage k holds the tasks whose prerequisites all lie in
// stages before k. Ids within a stage are ascending.
inline std::vector<std::vector<int>> stages(const TaskGraph& graph) {
  const auto& edges = graph.edges();
  std::map<int, std::size_t> remaining;
  std::map<int, std::vector<int>> dependents;
  for (const auto& [id, prereqs] : edges) {
    remaining[id] = prereqs.size();
    for (int d : prereqs) {
      if (!edges.count(d)) {
        throw GraphError("task " + std::to_string(id) + " depends on unknown task " + std::to_string(d));
      }
      dependents[d].push_back(id);
    }
  }

  std::vector<std::vector<int>> out;
  std::vector<int> frontier;
  for (const auto& [id, n] : remaining) {
    if (n == 0) frontier.push_back(id);
  }
  std::size_t placed = 0;
  while (!frontier.empty()) {
    std::sort(frontier.begin(), frontier.end());
    placed += frontier.size();
    std::vector<int> next;
    for (int id : frontier) {
      for (int child : dependents[id]) {
        if (--remaining[child] == 0) next.push_back(child);
      }
    }
    out.push_back(std::move(frontier));
    frontier = std::move(next);
  }
  if (placed != edges.size()) throw CycleError("task plan contains a dependency cycle");
  return out;
}

// ---------------------------------------------------------------------------
// Resource substitution

// Replaces every `<resource>-N` value with the resource of the slot's kind
// produced by task N. Throws MissingResourceError or KindMismatchError.
inline std::map<std::string, std::string> resolve_args(const Task& task, const ResourceStore& store) {
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : task.args) {
    auto ref = parse_placeholder(value);
    if (!ref) {
      out.emplace(key, value);
      continue;
    }
    auto kind = modality_from_string(key);
    if (!kind) {
      if (!store.contains(*ref)) throw MissingResourceError(*ref);
      throw KindMismatchError(*ref, key);
    }
    out.emplace(key, store.lookup(*ref, *kind));
  }
  return out;
}

inline Task with_args(Task task, std::map<std::string, std::string> args) {
  task.args = std::move(args);
  return task;
}

}  // namespace conductor
