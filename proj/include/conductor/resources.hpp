#pragma once

#include <array>
#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "conductor/error.hpp"

namespace conductor {

enum class Modality { text, image, audio, video };

inline constexpr std::array<Modality, 4> kAllModalities{Modality::text, Modality::image,
                                                        Modality::audio, Modality::video};

inline std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::text:
      return "text";
    case Modality::image:
      return "image";
    case Modality::audio:
      return "audio";
    case Modality::video:
      return "video";
  }
  return "text";
}

inline std::optional<Modality> modality_from_string(std::string_view s) {
  for (auto m : kAllModalities) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

// Guess a modality from a file name extension; unknown extensions are text.
inline Modality modality_from_path(std::string_view path) {
  auto dot = path.rfind('.');
  if (dot == std::string_view::npos) return Modality::text;
  std::string ext(path.substr(dot + 1));
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "jpg" || ext == "jpeg" || ext == "png" || ext == "gif" || ext == "bmp" || ext == "webp") {
    return Modality::image;
  }
  if (ext == "wav" || ext == "mp3" || ext == "flac" || ext == "ogg") return Modality::audio;
  if (ext == "mp4" || ext == "avi" || ext == "mov" || ext == "webm") return Modality::video;
  return Modality::text;
}

inline std::string_view default_extension(Modality m) {
  switch (m) {
    case Modality::image:
      return "png";
    case Modality::audio:
      return "wav";
    case Modality::video:
      return "mp4";
    case Modality::text:
      return "txt";
  }
  return "txt";
}

// Resources a finished task made available to its dependents. Text
// resources hold the text itself; media resources hold a file path.
using ProducedResources = std::map<Modality, std::string>;

// Outputs of finished tasks keyed by task id. Each id is written at most once.
class ResourceStore {
 public:
  ResourceStore() = default;
  ResourceStore(const ResourceStore& other) {
    std::scoped_lock lock(other.mutex_);
    entries_ = other.entries_;
  }
  ResourceStore& operator=(const ResourceStore& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    entries_ = other.entries_;
    return *this;
  }

  // Returns false (and leaves the store untouched) if `task_id` already has an entry.
  bool put(int task_id, ProducedResources resources) {
    std::scoped_lock lock(mutex_);
    return entries_.emplace(task_id, std::move(resources)).second;
  }

  bool contains(int task_id) const {
    std::scoped_lock lock(mutex_);
    return entries_.count(task_id) != 0;
  }

  // Throws MissingResourceError or KindMismatchError.
  std::string lookup(int task_id, Modality kind) const {
    std::scoped_lock lock(mutex_);
    auto it = entries_.find(task_id);
    if (it == entries_.end()) throw MissingResourceError(task_id);
    auto res = it->second.find(kind);
    if (res == it->second.end()) throw KindMismatchError(task_id, std::string(to_string(kind)));
    return res->second;
  }

  std::map<int, ProducedResources> snapshot() const {
    std::scoped_lock lock(mutex_);
    return entries_;
  }

  std::size_t size() const {
    std::scoped_lock lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<int, ProducedResources> entries_;
};

}  // namespace conductor
