#include "manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "evovit/error.hpp"

#ifndef EVOVIT_SOURCE_REVISION
#define EVOVIT_SOURCE_REVISION "unknown"
#endif

namespace evovit::cli {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const char* source_revision() { return EVOVIT_SOURCE_REVISION; }

RunManifest make_manifest(const RunConfig& cfg, const std::string& command_line) {
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seed = cfg.train.seed;
  m.source_revision = source_revision();
  m.command_line = command_line;
  m.started_at = utc_timestamp();
  return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["config_hash"] = manifest.config_hash;
  j["seed"] = manifest.seed;
  j["source_revision"] = manifest.source_revision;
  j["command_line"] = manifest.command_line;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at.empty() ? nlohmann::ordered_json(nullptr)
                                                  : nlohmann::ordered_json(manifest.finished_at);
  j["outputs"] = manifest.outputs;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace evovit::cli
