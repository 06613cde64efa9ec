#pragma once

// LLM backends reachable by a prompt -> text exchange.

#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "conductor/assets.hpp"
#include "conductor/error.hpp"

namespace conductor {

// Retriable failure of a single backend call.
class TransportError : public Error {
 public:
  using Error::Error;
};

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;
  std::map<std::string, double> logit_bias;  // empty when the backend protocol has no bias field
};

class ControllerBackend {
 public:
  virtual ~ControllerBackend() = default;
  virtual std::string_view kind() const = 0;
  virtual bool supports_logit_bias() const { return false; }
  // Throws TransportError (retriable), AuthError or BackendUnavailable.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

// Deterministic request -> reply table. Rules are tried in order; a rule
// matches when the prompt equals `exact`, or contains every string in
// `contains`. A rule with several replies hands them out in call order and
// then repeats the last one.
class ScriptedBackend final : public ControllerBackend {
 public:
  struct Rule {
    std::string exact;
    std::vector<std::string> contains;
    std::vector<std::string> replies;
  };

  struct Call {
    std::string prompt;
    std::string reply;
  };

  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<Rule> rules, std::string default_reply = "[]")
      : rules_(std::move(rules)), default_reply_(std::move(default_reply)), hits_(rules_.size(), 0) {}

  // {"default": "...", "rules": [{"exact"|"contains": ..., "reply"|"replies": ...}]}
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& doc) {
    std::vector<Rule> rules;
    try {
      for (const auto& r : doc.value("rules", nlohmann::json::array())) {
        Rule rule;
        rule.exact = r.value("exact", "");
        if (r.contains("contains")) {
          const auto& c = r["contains"];
          if (c.is_string()) {
            rule.contains.push_back(c.get<std::string>());
          } else {
            rule.contains = c.get<std::vector<std::string>>();
          }
        }
        if (rule.exact.empty() && rule.contains.empty()) throw SchemaError("scripted rule matches nothing");
        if (r.contains("replies")) {
          rule.replies = r["replies"].get<std::vector<std::string>>();
        } else {
          rule.replies.push_back(r.at("reply").get<std::string>());
        }
        if (rule.replies.empty()) throw SchemaError("scripted rule has no reply");
        rules.push_back(std::move(rule));
      }
      return std::make_shared<ScriptedBackend>(std::move(rules), doc.value("default", std::string("[]")));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed scripted backend table: ") + e.what());
    }
  }

  static std::shared_ptr<ScriptedBackend> load(const fs::path& path) {
    auto doc = nlohmann::json::parse(read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("scripted backend table is not valid JSON: " + path.string());
    return from_json(doc);
  }

  std::string_view kind() const override { return "scripted"; }

  std::string complete(const CompletionRequest& request) override {
    std::string reply = default_reply_;
    std::scoped_lock lock(mutex_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (!matches(rules_[i], request.prompt)) continue;
      const auto& replies = rules_[i].replies;
      reply = replies[std::min(hits_[i], replies.size() - 1)];
      ++hits_[i];
      break;
    }
    calls_.push_back({request.prompt, reply});
    return reply;
  }

  std::vector<Call> calls() const {
    std::scoped_lock lock(mutex_);
    return calls_;
  }

  std::size_t call_count() const {
    std::scoped_lock lock(mutex_);
    return calls_.size();
  }

 private:
  static bool matches(const Rule& rule, std::string_view prompt) {
    if (!rule.exact.empty()) return prompt == rule.exact;
    for (const auto& needle : rule.contains) {
      if (prompt.find(needle) == std::string_view::npos) return false;
    }
    return true;
  }

  std::vector<Rule> rules_;
  std::string default_reply_ = "[]";
  mutable std::mutex mutex_;
  std::vector<std::size_t> hits_;
  std::vector<Call> calls_;
};

// ---------------------------------------------------------------------------
// HTTP chat-completion backend

struct HttpBackendOptions {
  std::string url = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "OPENAI_API_KEY";  // name of the variable, not the key
  double timeout_seconds = 60.0;
};

// Splits "scheme://host:port/path" into the origin and the request path.
inline std::pair<std::string, std::string> split_url(std::string_view url) {
  auto scheme_end = url.find("://");
  auto host_begin = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
  auto path_begin = url.find('/', host_begin);
  if (path_begin == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_begin)), std::string(url.substr(path_begin))};
}

class HttpBackend final : public ControllerBackend {
 public:
  explicit HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {}

  std::string_view kind() const override { return "http"; }
  bool supports_logit_bias() const override { return true; }

  std::string complete(const CompletionRequest& request) override {
    nlohmann::json body = {
        {"model", options_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
    };
    if (!request.logit_bias.empty()) body["logit_bias"] = request.logit_bias;

    auto [origin, path] = split_url(options_.url);
    httplib::Client client(origin);
    if (!client.is_valid()) throw BackendUnavailable("cannot use controller url " + options_.url + " (https needs a TLS build)");
    auto seconds = static_cast<time_t>(options_.timeout_seconds);
    auto micros = static_cast<time_t>((options_.timeout_seconds - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    httplib::Headers headers;
    if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("controller request failed: " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403) {
      throw AuthError("controller rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status != 200) throw TransportError("controller returned HTTP " + std::to_string(res->status));

    auto doc = nlohmann::json::parse(res->body, nullptr, false);
    if (doc.is_discarded()) throw TransportError("controller reply is not JSON");
    try {
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw TransportError("controller reply lacks choices[0].message.content");
    }
  }

  const HttpBackendOptions& options() const { return options_; }

 private:
  HttpBackendOptions options_;
};

// ---------------------------------------------------------------------------

struct ControllerConfig {
  double temperature = 0.0;
  double format_bias = 0.2;
  // Keys of the logit_bias map. Literal characters by default; set to a
  // tokenizer's ids (e.g. {"90", "92"}) for APIs that key bias by token id.
  std::vector<std::string> format_tokens{"{", "}"};
  int max_retries = 2;
  std::shared_ptr<ControllerBackend> backend;

  void check() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw SchemaError("temperature must be >= 0");
    if (!std::isfinite(format_bias)) throw SchemaError("format_bias must be finite");
    if (max_retries < 0) throw SchemaError("max_retries must be >= 0");
    if (!backend) throw SchemaError("controller config has no backend");
  }
};

// Sends `prompt` to the configured backend, retrying transport failures up to
// max_retries times. Throws BackendUnavailable once retries are exhausted.
inline std::string complete(const std::string& prompt, const ControllerConfig& config) {
  config.check();
  CompletionRequest request{prompt, config.temperature, {}};
  if (config.backend->supports_logit_bias()) {
    for (const auto& token : config.format_tokens) request.logit_bias[token] = config.format_bias;
  }
  std::string last_error;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    try {
      return config.backend->complete(request);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw BackendUnavailable("controller unavailable after " + std::to_string(config.max_retries + 1) +
                           " attempts: " + last_error);
}

}  // namespace conductor
