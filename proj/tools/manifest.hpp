#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "run_config.hpp"

namespace evovit::cli {

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string source_revision;
  std::string command_line;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> outputs;
};

RunManifest make_manifest(const RunConfig& cfg, const std::string& command_line);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
std::string utc_timestamp();
const char* source_revision();

}  // namespace evovit::cli
