#include "ssdg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "ssdg/config.hpp"

namespace ssdg {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'D', 'G', 'A', 'R', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const char* what) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError(std::string("truncated archive while reading ") + what);
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void Archive::add(const std::string& component, const std::string& name, Matrix value) {
  arrays.emplace_back(name, std::move(value));
  components[component].push_back(name);
}

const Matrix& Archive::array(const std::string& name) const {
  for (const auto& [n, m] : arrays) {
    if (n == name) return m;
  }
  throw CheckpointError("archive has no array '" + name + "'");
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::json manifest = archive.metadata;
  manifest["arrays"] = nlohmann::json::array();
  std::string payload;
  std::size_t offset = 0;
  for (const auto& [name, m] : archive.arrays) {
    manifest["arrays"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    payload.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
    offset += static_cast<std::size_t>(m.size());
  }
  manifest["components"] = archive.components;
  const std::string manifest_text = manifest.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put<std::uint32_t>(bytes, kVersion);
  put<std::uint64_t>(bytes, manifest_text.size());
  bytes += manifest_text;
  put<std::uint64_t>(bytes, payload.size());
  bytes += payload;
  put<std::uint64_t>(bytes, fnv1a64(payload, fnv1a64(manifest_text)));

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + ": not an archive (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(bytes, pos, "version");
  if (version != kVersion) throw CheckpointError(path.string() + ": unsupported version " + std::to_string(version));
  const auto manifest_size = take<std::uint64_t>(bytes, pos, "manifest size");
  if (manifest_size > bytes.size() - pos) throw CheckpointError(path.string() + ": truncated manifest");
  const std::string manifest_text = bytes.substr(pos, manifest_size);
  pos += manifest_size;
  const auto payload_size = take<std::uint64_t>(bytes, pos, "payload size");
  if (payload_size > bytes.size() - pos || payload_size % sizeof(double) != 0) {
    throw CheckpointError(path.string() + ": truncated payload");
  }
  const std::string payload = bytes.substr(pos, payload_size);
  pos += payload_size;
  const auto checksum = take<std::uint64_t>(bytes, pos, "checksum");
  if (pos != bytes.size()) throw CheckpointError(path.string() + ": trailing bytes after checksum");
  if (checksum != fnv1a64(payload, fnv1a64(manifest_text))) {
    throw CheckpointError(path.string() + ": checksum mismatch, archive is corrupt");
  }

  Archive archive;
  try {
    nlohmann::json manifest = nlohmann::json::parse(manifest_text);
    const std::size_t total = payload.size() / sizeof(double);
    for (const auto& entry : manifest.at("arrays")) {
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > total) {
        throw CheckpointError(path.string() + ": array '" + entry.at("name").get<std::string>() + "' out of bounds");
      }
      Matrix m(rows, cols);
      std::memcpy(m.data(), payload.data() + offset * sizeof(double), sizeof(double) * static_cast<std::size_t>(m.size()));
      archive.arrays.emplace_back(entry.at("name").get<std::string>(), std::move(m));
    }
    archive.components = manifest.at("components").get<std::map<std::string, std::vector<std::string>>>();
    manifest.erase("arrays");
    manifest.erase("components");
    archive.metadata = std::move(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed manifest (" + e.what() + ")");
  }
  return archive;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes));
}

}  // namespace ssdg
