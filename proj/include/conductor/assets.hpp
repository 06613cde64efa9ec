#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "conductor/error.hpp"

#ifndef CONDUCTOR_ASSET_DIR
#define CONDUCTOR_ASSET_DIR "assets"
#endif

namespace conductor {

namespace fs = std::filesystem;

// CONDUCTOR_ASSETS overrides the directory baked in at build time.
inline fs::path asset_dir() {
  if (const char* env = std::getenv("CONDUCTOR_ASSETS"); env && *env) return fs::path(env);
  return fs::path(CONDUCTOR_ASSET_DIR);
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_asset(const fs::path& relative) { return read_text_file(asset_dir() / relative); }

}  // namespace conductor
