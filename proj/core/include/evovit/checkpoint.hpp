#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evovit/encoder.hpp"

namespace evovit {

// Binary checkpoint layout, all integers little-endian:
//   "EVOT"                     4 bytes
//   version                    u32 (kCheckpointVersion)
//   image_side, patch_side, channels_in, embed_dim, heads, depth,
//   ffn_hidden, num_classes    8 x u32
//   then until end of file, one blob per parameter:
//     name length u16, name bytes, rows u32, cols u32,
//     rows * cols IEEE-754 binary64 values, row-major
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderConfig config;
  ModelParams params;
};

std::vector<std::uint8_t> encode_checkpoint(const EncoderConfig& cfg, const ModelParams& params);
// Throws FormatError on a bad magic, version, truncation, or a parameter set
// that does not match the header config (names and shapes both reported).
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& cfg,
                     const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace evovit
