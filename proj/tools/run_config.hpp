#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "evovit/dataset.hpp"
#include "evovit/encoder.hpp"
#include "evovit/evolution.hpp"
#include "evovit/model.hpp"
#include "evovit/training.hpp"

namespace evovit::cli {

using DatasetSpec = std::variant<SyntheticSpec, IdxSpec>;

// One JSON document with exactly the top-level keys encoder, evo, train,
// dataset and output_dir. Every key is optional; unknown keys are rejected
// at any depth.
struct RunConfig {
  EncoderConfig encoder;
  EvoConfig evo;
  TrainConfig train;
  ModelKind model = ModelKind::Evo;  // train.model
  DatasetSpec dataset = SyntheticSpec{};
  std::string output_dir = "runs/default";
};

RunConfig parse_run_config(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const RunConfig& cfg);

// Sets a dot-path ("evo.keep_ratio=0.7") in the raw document. The value is
// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Reads, applies overrides, validates. JSON syntax errors carry line and
// column; all failures throw ConfigError or IoError.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

DatasetSplit load_dataset(const DatasetSpec& spec);

// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace evovit::cli
