#pragma once

// The closed list of supported task types, loaded from a declarative file.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/error.hpp"
#include "conductor/resources.hpp"

namespace conductor {

struct TaskType {
  std::string name;
  std::string family;  // row of the supported-task table; several names may share one
  std::set<Modality> arg_schema;
  Modality output = Modality::text;
  std::vector<std::string> aliases;
};

class TaskManifest {
 public:
  TaskManifest() = default;

  static TaskManifest from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array()) {
      throw SchemaError("task manifest must be an object with a \"tasks\" array");
    }
    TaskManifest manifest;
    for (const auto& entry : doc["tasks"]) {
      TaskType type;
      try {
        type.name = entry.at("name").get<std::string>();
        type.family = entry.value("family", type.name);
        for (const auto& arg : entry.at("args")) {
          auto kind = modality_from_string(arg.get<std::string>());
          if (!kind) throw SchemaError("task " + type.name + ": unknown argument kind " + arg.dump());
          type.arg_schema.insert(*kind);
        }
        auto output = modality_from_string(entry.at("output").get<std::string>());
        if (!output) throw SchemaError("task " + type.name + ": unknown output kind");
        type.output = *output;
        if (entry.contains("aliases")) type.aliases = entry["aliases"].get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed task manifest entry: ") + e.what());
      }
      if (type.arg_schema.empty()) throw SchemaError("task " + type.name + " declares no arguments");
      manifest.add(std::move(type));
    }
    return manifest;
  }

  static TaskManifest load(const fs::path& path) {
    auto doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("task manifest is not valid JSON: " + path.string());
    return from_json(doc);
  }

  // The manifest shipped in the asset directory.
  static const TaskManifest& builtin() {
    static const TaskManifest instance = load(asset_dir() / "tasks.json");
    return instance;
  }

  void add(TaskType type) {
    auto index = types_.size();
    auto claim = [&](const std::string& key) {
      if (!lookup_.emplace(key, index).second) throw SchemaError("task name declared twice: " + key);
    };
    claim(type.name);
    for (const auto& alias : type.aliases) claim(alias);
    types_.push_back(std::move(type));
  }

  // Accepts canonical names and aliases.
  const TaskType* find(std::string_view name) const {
    auto it = lookup_.find(std::string(name));
    return it == lookup_.end() ? nullptr : &types_[it->second];
  }

  const TaskType& at(std::string_view name) const {
    if (auto* t = find(name)) return *t;
    throw UnknownTaskError(std::string(name));
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }

  // Canonical name for `name`, or `name` itself when unknown.
  std::string canonical(std::string_view name) const {
    auto* t = find(name);
    return t ? t->name : std::string(name);
  }

  const std::vector<TaskType>& types() const { return types_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(types_.size());
    for (const auto& t : types_) out.push_back(t.name);
    return out;
  }

  std::set<std::string> families() const {
    std::set<std::string> out;
    for (const auto& t : types_) out.insert(t.family);
    return out;
  }

 private:
  std::vector<TaskType> types_;
  std::map<std::string, std::size_t> lookup_;
};

}  // namespace conductor
