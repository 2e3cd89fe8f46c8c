#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace geoflow {

inline constexpr const char* kToolVersion = "0.1.0";

// 64-bit FNV-1a of the compact dump of `config`. nlohmann keeps object keys
// sorted, so the dump is already canonical.
std::string config_hash(const nlohmann::json& config);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double duration_s = 0.0;
  nlohmann::json extra = nlohmann::json::object();  // command-specific fields
};

nlohmann::json to_json(const RunManifest& m);

// Exclusive writer lock: creates `path` with O_EXCL and removes it on
// destruction. Throws InputError if it already exists.
class FileLock {
 public:
  explicit FileLock(std::filesystem::path path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace geoflow
