#pragma once

// `{{ Slot Name }}` substitution over prompt text.

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "conductor/assets.hpp"
#include "conductor/error.hpp"

namespace conductor {

enum class Stage { planning, selection, response, critic };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::planning:
      return "planning";
    case Stage::selection:
      return "selection";
    case Stage::response:
      return "response";
    case Stage::critic:
      return "critic";
  }
  return "planning";
}

using SlotBindings = std::map<std::string, std::string, std::less<>>;

class PromptTemplate {
 public:
  PromptTemplate(Stage stage, std::string body) : stage_(stage), body_(std::move(body)) { scan(); }

  static PromptTemplate load(Stage stage, const fs::path& path) {
    return PromptTemplate(stage, read_text_file(path));
  }

  // Templates shipped under <assets>/prompts/<stage>.txt.
  static PromptTemplate builtin(Stage stage) {
    return load(stage, asset_dir() / "prompts" / (std::string(to_string(stage)) + ".txt"));
  }

  Stage stage() const { return stage_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& slots() const { return slot_names_; }

  // Single pass: bound values are never re-scanned for slots. A `{{` inside a
  // value is split to `{ {` so the output never carries a slot marker.
  // Throws UnboundSlotError naming the first slot without a binding.
  std::string render(const SlotBindings& bindings) const {
    for (const auto& name : slot_names_) {
      if (bindings.find(name) == bindings.end()) throw UnboundSlotError(name);
    }
    std::string out;
    out.reserve(body_.size() * 2);
    std::size_t cursor = 0;
    for (const auto& seg : segments_) {
      out.append(body_, cursor, seg.begin - cursor);
      out += neutralize(bindings.find(seg.name)->second);
      cursor = seg.end;
    }
    out.append(body_, cursor, std::string::npos);
    return out;
  }

 private:
  struct Segment {
    std::size_t begin;
    std::size_t end;
    std::string name;
  };

  static std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  static std::string neutralize(const std::string& value) {
    std::string out;
    out.reserve(value.size());
    for (std::size_t i = 0; i < value.size(); ++i) {
      out += value[i];
      if (value[i] == '{' && i + 1 < value.size() && value[i + 1] == '{') out += ' ';
    }
    return out;
  }

  void scan() {
    std::size_t pos = 0;
    while ((pos = body_.find("{{", pos)) != std::string::npos) {
      auto close = body_.find("}}", pos + 2);
      if (close == std::string::npos) throw ParseError("unterminated slot in " + std::string(to_string(stage_)) + " template");
      auto name = trim(std::string_view(body_).substr(pos + 2, close - pos - 2));
      if (name.empty()) throw ParseError("empty slot name in " + std::string(to_string(stage_)) + " template");
      segments_.push_back({pos, close + 2, name});
      slot_names_.insert(name);
      pos = close + 2;
    }
  }

  Stage stage_;
  std::string body_;
  std::vector<Segment> segments_;
  std::set<std::string> slot_names_;
};

}  // namespace conductor
