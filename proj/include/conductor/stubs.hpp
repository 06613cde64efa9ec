#pragma once

// Deterministic stand-ins for expert models. Every payload is a pure
// function of the task type and resolved arguments, so runs replay exactly.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "conductor/executor.hpp"

namespace conductor::stubs {

// FNV-1a; stable across platforms and runs.
inline std::uint64_t fingerprint(std::string_view text, std::uint64_t seed = 1469598103934665603ull) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fingerprint(const StubRequest& req) {
  std::string key = req.type ? req.type->name : "";
  for (const auto& [k, v] : req.args) key += '\x1f' + k + '=' + v;
  return fingerprint(key);
}

inline double score(std::uint64_t h, int slot) {
  // Two decimal places in [0.50, 0.99].
  return 0.5 + static_cast<double>((h >> (slot * 5)) % 50) / 100.0;
}

inline std::string arg(const StubRequest& req, const std::string& key) {
  auto it = req.args.find(key);
  return it == req.args.end() ? std::string() : it->second;
}

// Minimal valid files so downstream consumers can open what they are given.
inline std::string placeholder_bytes(Modality m) {
  switch (m) {
    case Modality::image: {
      static const unsigned char png[] = {
          0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x48, 0x44, 0x52,
          0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x06, 0x00, 0x00, 0x00, 0x1F, 0x15, 0xC4,
          0x89, 0x00, 0x00, 0x00, 0x0D, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9C, 0x63, 0xF8, 0xCF, 0xC0, 0xF0,
          0x1F, 0x00, 0x05, 0x00, 0x01, 0xFF, 0x89, 0x99, 0x3D, 0x1D, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45,
          0x4E, 0x44, 0xAE, 0x42, 0x60, 0x82};
      return std::string(reinterpret_cast<const char*>(png), sizeof(png));
    }
    case Modality::audio: {
      // 44-byte PCM WAV header, zero samples.
      static const unsigned char wav[] = {
          'R', 'I', 'F', 'F', 36, 0, 0, 0, 'W', 'A', 'V', 'E', 'f', 'm', 't', ' ', 16, 0,   0,   0,    1, 0,
          1,   0,   0x40, 0x1F, 0, 0, 0x80, 0x3E, 0, 0, 2, 0, 16, 0, 'd', 'a', 't', 'a', 0, 0, 0, 0};
      return std::string(reinterpret_cast<const char*>(wav), sizeof(wav));
    }
    case Modality::video:
      return "stub video\n";
    case Modality::text:
      return "";
  }
  return "";
}

// Writes the placeholder file for `kind` and returns its path.
inline std::string write_artifact(const StubRequest& req, Modality kind) {
  auto path = req.artifact_path(kind);
  write_text_file(path, placeholder_bytes(kind));
  return path.string();
}

inline StubReply text_reply(std::string key, std::string text) {
  StubReply r;
  r.payload = {{std::move(key), text}};
  r.resources[Modality::text] = std::move(text);
  return r;
}

inline StubReply media_reply(const StubRequest& req, Modality kind) {
  StubReply r;
  auto path = write_artifact(req, kind);
  r.payload = {{"generated " + std::string(to_string(kind)), path}};
  r.resources[kind] = path;
  return r;
}

inline nlohmann::json labels(std::uint64_t h, std::initializer_list<const char*> names) {
  auto out = nlohmann::json::array();
  int slot = 0;
  for (const char* n : names) {
    out.push_back({{"label", n}, {"score", score(h, slot++)}});
  }
  return out;
}

inline std::string first_words(const std::string& text, std::size_t n) {
  std::string out;
  std::size_t words = 0;
  for (std::size_t i = 0; i < text.size() && words < n; ++i) {
    if (text[i] == ' ' && !out.empty() && out.back() != ' ') ++words;
    if (words < n) out += text[i];
  }
  return out;
}

// The stub behavior for one manifest entry.
inline StubBehavior behavior_for(const TaskType& type) {
  const std::string name = type.name;
  const std::string family = type.family;

  if (name == "object-detection") {
    return [](const StubRequest& req) {
      auto h = fingerprint(req);
      StubReply r = media_reply(req, Modality::image);
      r.payload = {{"generated image", r.resources[Modality::image]},
                   {"predicted",
                    {{{"label", "giraffe"}, {"score", score(h, 0)}, {"box", {{"xmin", 12}, {"ymin", 8}, {"xmax", 210}, {"ymax", 300}}}},
                     {{"label", "giraffe"}, {"score", score(h, 1)}, {"box", {{"xmin", 220}, {"ymin", 20}, {"xmax", 400}, {"ymax", 310}}}},
                     {{"label", "zebra"}, {"score", score(h, 2)}, {"box", {{"xmin", 405}, {"ymin", 150}, {"xmax", 520}, {"ymax", 290}}}}}}};
      return r;
    };
  }
  if (name == "image-cls" || name == "audio-cls" || name == "video-cls" || name == "text-cls" ||
      name == "tabular-cls") {
    return [name](const StubRequest& req) {
      auto h = fingerprint(req);
      nlohmann::json predicted;
      if (name == "image-cls") predicted = labels(h, {"giraffe", "zebra", "savanna"});
      else if (name == "audio-cls") predicted = labels(h, {"english", "german"});
      else if (name == "video-cls") predicted = labels(h, {"surfing", "swimming"});
      else if (name == "text-cls") predicted = labels(h, {"NEGATIVE", "POSITIVE"});
      else predicted = labels(h, {"class-0", "class-1"});
      StubReply r;
      r.payload = {{"predicted", predicted}};
      r.resources[Modality::text] = predicted[0]["label"].get<std::string>();
      return r;
    };
  }
  if (name == "image-to-text") {
    return [](const StubRequest&) { return text_reply("generated text", "two giraffes and a zebra standing in a grassy field"); };
  }
  if (name == "visual-question-answering" || name == "document-question-answering" || name == "question-answering") {
    return [](const StubRequest& req) {
      auto h = fingerprint(req);
      StubReply r;
      r.payload = {{"predicted", {{{"answer", "yes"}, {"score", score(h, 0)}}, {{"answer", "no"}, {"score", 1.0 - score(h, 0)}}}}};
      r.resources[Modality::text] = "yes";
      return r;
    };
  }
  if (name == "token-cls") {
    return [](const StubRequest& req) {
      StubReply r;
      auto words = first_words(arg(req, "text"), 1);
      r.payload = {{"predicted", {{{"word", words}, {"entity_group", "PER"}, {"score", score(fingerprint(req), 0)}}}}};
      r.resources[Modality::text] = words;
      return r;
    };
  }
  if (name == "summarization") {
    return [](const StubRequest& req) { return text_reply("summary_text", first_words(arg(req, "text"), 12)); };
  }
  if (name == "translation") {
    return [](const StubRequest& req) { return text_reply("translation_text", "[translated] " + arg(req, "text")); };
  }
  if (name == "automatic-speech-recognition") {
    return [](const StubRequest&) { return text_reply("text", "hello this is a recorded message"); };
  }
  if (type.output == Modality::text) {
    // Remaining text generators.
    return [](const StubRequest& req) { return text_reply("generated text", arg(req, "text") + " ..."); };
  }
  if (family == "Segmentation") {
    return [](const StubRequest& req) {
      auto h = fingerprint(req);
      StubReply r = media_reply(req, Modality::image);
      r.payload["predicted"] = labels(h, {"sky", "grass", "animal"});
      return r;
    };
  }
  const auto output = type.output;
  return [output](const StubRequest& req) { return media_reply(req, output); };
}

// Registers a stub for every task in the executor's manifest.
inline void register_defaults(Executor& executor) {
  for (const auto& type : executor.manifest().types()) executor.register_stub(type.name, behavior_for(type));
}

}  // namespace conductor::stubs
