#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssdg/core.hpp"

namespace ssdg {

/// Named-array container used for checkpoints.
///
/// Byte layout (little-endian):
///   "SSDGARCH" | u32 version | u64 manifest bytes | manifest JSON
///   | u64 payload bytes | payload (float64, column-major per array)
///   | u64 FNV-1a of manifest + payload
///
/// The manifest holds caller metadata plus an "arrays" list of
/// {name, rows, cols, offset} (offset in doubles) and a "components" map from
/// component name to the array names it owns.
struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;
  std::map<std::string, std::vector<std::string>> components;

  void add(const std::string& component, const std::string& name, Matrix value);
  /// Throws CheckpointError when missing.
  const Matrix& array(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
/// Throws CheckpointError describing what is wrong with the file.
Archive read_archive(const std::filesystem::path& path);

/// FNV-1a over the file bytes, hex encoded.
std::string file_hash(const std::filesystem::path& path);

}  // namespace ssdg
