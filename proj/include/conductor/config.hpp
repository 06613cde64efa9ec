#pragma once

// JSON run configuration shared by the CLI and the server. Relative paths
// resolve against the directory of the config file.

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/backend.hpp"
#include "conductor/controller.hpp"
#include "conductor/error.hpp"
#include "conductor/registry.hpp"
#include "conductor/service.hpp"

namespace conductor {

struct BackendSettings {
  std::string kind = "scripted";  // scripted | http
  fs::path script;                // scripted: rules file; empty means "always []"
  HttpBackendOptions http;
};

struct RunConfig {
  BackendSettings backend;
  ControllerConfig controller;  // backend left unset until make_backend()
  SelectionConfig selection;
  std::size_t demo_count = 3;
  std::optional<std::size_t> demo_variety;
  std::size_t concurrency = std::max<std::size_t>(4, std::thread::hardware_concurrency());
  fs::path data_dir = fs::temp_directory_path() / "conductor-data";
  fs::path registry;  // empty: every manifest task served by its stub model
};

inline fs::path resolve_against(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Throws SchemaError on malformed fields.
inline RunConfig parse_config(const nlohmann::json& doc, const fs::path& base = fs::current_path()) {
  if (!doc.is_object()) throw SchemaError("config must be a JSON object");
  RunConfig c;
  try {
    if (doc.contains("backend")) {
      const auto& b = doc["backend"];
      c.backend.kind = b.value("kind", c.backend.kind);
      c.backend.script = resolve_against(base, b.value("script", std::string()));
      c.backend.http.url = b.value("url", c.backend.http.url);
      c.backend.http.model = b.value("model", c.backend.http.model);
      c.backend.http.api_key_env = b.value("api_key_env", c.backend.http.api_key_env);
      c.backend.http.timeout_seconds = b.value("timeout_seconds", c.backend.http.timeout_seconds);
      if (c.backend.kind != "scripted" && c.backend.kind != "http") {
        throw SchemaError("backend.kind must be \"scripted\" or \"http\"");
      }
    }
    if (doc.contains("controller")) {
      const auto& k = doc["controller"];
      c.controller.temperature = k.value("temperature", c.controller.temperature);
      c.controller.format_bias = k.value("format_bias", c.controller.format_bias);
      c.controller.max_retries = k.value("max_retries", c.controller.max_retries);
      if (k.contains("format_tokens")) c.controller.format_tokens = k["format_tokens"].get<std::vector<std::string>>();
    }
    if (doc.contains("selection")) {
      const auto& s = doc["selection"];
      c.selection.k = s.value("k", c.selection.k);
      c.selection.short_circuit_single = s.value("short_circuit_single", c.selection.short_circuit_single);
      if (c.selection.k < 1) throw SchemaError("selection.k must be at least 1");
    }
    if (doc.contains("demos")) {
      const auto& d = doc["demos"];
      c.demo_count = d.value("count", c.demo_count);
      if (d.contains("variety") && !d["variety"].is_null()) c.demo_variety = d["variety"].get<std::size_t>();
    }
    c.concurrency = doc.value("concurrency", c.concurrency);
    if (doc.contains("data_dir")) c.data_dir = resolve_against(base, doc["data_dir"].get<std::string>());
    if (doc.contains("registry")) c.registry = resolve_against(base, doc["registry"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  auto doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) throw SchemaError("config is not valid JSON: " + path.string());
  return parse_config(doc, path.parent_path());
}

inline std::shared_ptr<ControllerBackend> make_backend(const BackendSettings& settings) {
  if (settings.kind == "http") return std::make_shared<HttpBackend>(settings.http);
  if (settings.script.empty()) return std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Rule>{});
  return ScriptedBackend::load(settings.script);
}

// Registry from the configured file, or one "stub/<task>" model per task.
inline Registry make_registry(const RunConfig& c, const TaskManifest& manifest = TaskManifest::builtin()) {
  if (!c.registry.empty()) return Registry::load(c.registry, manifest);
  std::vector<ModelDescriptor> models;
  for (const auto& t : manifest.types()) {
    ModelDescriptor m;
    m.model_id = default_stub_model(t.name);
    m.task_types = {t.name};
    m.description = "local stub for " + t.name;
    m.endpoints = {Endpoint::local()};
    models.push_back(std::move(m));
  }
  return Registry(std::move(models));
}

inline ServiceConfig make_service_config(const RunConfig& c) {
  ServiceConfig s;
  s.controller = c.controller;
  if (!s.controller.backend) s.controller.backend = make_backend(c.backend);
  s.selection = c.selection;
  s.demos = DemoPool::builtin().select(c.demo_count, c.demo_variety);
  s.concurrency = c.concurrency;
  s.data_dir = c.data_dir;
  return s;
}

}  // namespace conductor
