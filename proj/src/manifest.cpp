#include "geoflow/manifest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>

#include "geoflow/errors.hpp"

namespace geoflow {

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j = {{"command", m.command},
                      {"config", m.config},
                      {"config_hash", config_hash(m.config)},
                      {"seed", m.seed},
                      {"tool_version", kToolVersion},
                      {"inputs", m.inputs},
                      {"outputs", m.outputs},
                      {"duration_s", m.duration_s}};
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  return j;
}

FileLock::FileLock(std::filesystem::path path) : path_(std::move(path)) {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw InputError("output is locked by another run: " + path_.string());
  ::close(fd);
}

FileLock::~FileLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace geoflow
