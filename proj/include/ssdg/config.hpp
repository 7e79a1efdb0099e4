#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssdg/core.hpp"

namespace ssdg {

/// Flat `key = value` text. '#' starts a comment; later keys override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "<text>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const { return entries_.contains(key); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

double parse_double(const std::string& field, const std::string& value);
long long parse_int(const std::string& field, const std::string& value);
bool parse_bool(const std::string& field, const std::string& value);
std::vector<std::string> split_list(const std::string& value, char sep = ',');

/// Sets one TrainConfig field by key. Returns false for keys it does not own;
/// throws ConfigError (message starts with the key) on a malformed value.
bool apply_train_key(TrainConfig& config, const std::string& key, const std::string& value);

/// Canonical text form: every field, fixed order, round-trip precision.
std::string to_text(const TrainConfig& config);
TrainConfig train_config_from_text(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);
/// Hash of the canonical text; a resumed run must reproduce it.
std::string config_hash(const TrainConfig& config);

}  // namespace ssdg
