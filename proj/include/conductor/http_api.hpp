#pragma once

// JSON-over-HTTP front end for Service, as consumed by the web chat.
//
//   POST /v1/sessions                          -> {"session_id"}
//   GET  /v1/sessions                          -> {"sessions":[...]}
//   POST /v1/sessions/{id}/messages            -> workflow trace
//        {"text", "resources":[{"name","content_base64"} | {"name","path"}]}
//   GET  /v1/sessions/{id}/traces/{n}          -> workflow trace
//   GET  /v1/artifacts/{session}/{file}        -> raw bytes
//
// Errors are {"error":{"type","message"}}.

#include <array>
#include <string>
#include <string_view>

#include <httplib.h>
#include <json.hpp>

#include "conductor/error.hpp"
#include "conductor/service.hpp"

namespace conductor {

// RFC 4648 base64, padding optional, whitespace ignored. Throws SchemaError.
inline std::string base64_decode(std::string_view in) {
  static const auto table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(alphabet[i])] = i;
    return t;
  }();
  std::string out;
  unsigned buffer = 0;
  int bits = 0;
  bool padding = false;
  for (char ch : in) {
    if (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t') continue;
    if (ch == '=') {
      padding = true;
      continue;
    }
    int v = table[static_cast<unsigned char>(ch)];
    if (v < 0 || padding) throw SchemaError("invalid base64 content");
    buffer = (buffer << 6) | static_cast<unsigned>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buffer >> bits) & 0xFF));
    }
  }
  return out;
}

inline std::string error_body(std::string_view type, std::string_view message) {
  return nlohmann::json{{"error", {{"type", type}, {"message", message}}}}.dump();
}

inline std::string content_type_for(const fs::path& p) {
  auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".wav") return "audio/wav";
  if (ext == ".mp3") return "audio/mpeg";
  if (ext == ".mp4") return "video/mp4";
  if (ext == ".txt") return "text/plain";
  if (ext == ".json" || ext == ".jsonl") return "application/json";
  return "application/octet-stream";
}

namespace detail {

inline void reply_error(httplib::Response& res, int status, std::string_view type, std::string_view message) {
  res.status = status;
  res.set_content(error_body(type, message), "application/json");
}

// Maps service exceptions onto status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const UnknownSession& e) {
    reply_error(res, 404, "unknown_session", e.what());
  } catch (const BackendUnavailable& e) {
    reply_error(res, 503, "backend_unavailable", e.what());
  } catch (const AuthError& e) {
    reply_error(res, 502, "backend_auth", e.what());
  } catch (const SchemaError& e) {
    reply_error(res, 400, "bad_request", e.what());
  } catch (const nlohmann::json::exception& e) {
    reply_error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, "internal", e.what());
  }
}

inline std::vector<Attachment> parse_attachments(const nlohmann::json& body) {
  std::vector<Attachment> out;
  if (!body.contains("resources")) return out;
  if (!body["resources"].is_array()) throw SchemaError("\"resources\" must be an array");
  for (const auto& r : body["resources"]) {
    Attachment a;
    a.name = r.at("name").get<std::string>();
    if (r.contains("content_base64")) {
      a.content = base64_decode(r["content_base64"].get<std::string>());
    } else if (r.contains("path")) {
      a.source = fs::path(r["path"].get<std::string>());
      if (!fs::exists(*a.source)) throw SchemaError("resource path does not exist: " + a.source->string());
    } else {
      throw SchemaError("resource " + a.name + " needs content_base64 or path");
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace detail

// Registers the routes on `server`. `service` must outlive it.
inline void mount_api(httplib::Server& server, Service& service) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Post("/v1/sessions", [&service](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] {
      res.status = 201;
      res.set_content(nlohmann::json{{"session_id", service.create_session()}}.dump(), "application/json");
    });
  });

  server.Get("/v1/sessions", [&service](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] {
      res.set_content(nlohmann::json{{"sessions", service.list_sessions()}}.dump(), "application/json");
    });
  });

  server.Post(R"(/v1/sessions/([^/]+)/messages)", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string id = req.matches[1];
      auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) throw SchemaError("body must be a JSON object");
      if (!body.contains("text") || !body["text"].is_string()) throw SchemaError("\"text\" must be a string");
      auto attachments = detail::parse_attachments(body);
      service.store().get(id);  // 404 before any work
      auto trace = service.handle_request(id, body["text"].get<std::string>(), attachments);
      res.set_content(to_json(trace).dump(), "application/json");
    });
  });

  server.Get(R"(/v1/sessions/([^/]+)/traces/(\d+))", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      auto trace = service.get_trace(req.matches[1], std::stoul(req.matches[2]));
      res.set_content(trace.dump(), "application/json");
    });
  });

  server.Get(R"(/v1/artifacts/([^/]+)/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::string file = req.matches[2];
      if (file == "." || file == ".." || file == "session.jsonl") {
        detail::reply_error(res, 404, "not_found", "no such artifact");
        return;
      }
      auto path = service.artifacts_dir(req.matches[1]) / file;
      if (!fs::is_regular_file(path)) {
        detail::reply_error(res, 404, "not_found", "no such artifact: " + file);
        return;
      }
      res.set_content(read_text_file(path), content_type_for(path));
    });
  });
}

}  // namespace conductor
