#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "evovit/encoder.hpp"

namespace evovit {

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const { return images.size(); }
};

struct DatasetSplit {
  Dataset train;
  Dataset eval;
};

// Class-dependent oriented stripes inside a randomly placed window, plus a
// class-dependent blob, on a noisy background.
struct SyntheticSpec {
  std::uint32_t classes = 10;
  std::uint32_t samples = 2000;       // training samples
  std::uint32_t eval_samples = 500;
  std::uint32_t side = 16;
  std::uint32_t channels = 1;
  std::uint64_t seed = 1;
  double noise = 0.35;
};

struct IdxSpec {
  std::filesystem::path images;
  std::filesystem::path labels;
  // Held-out tail of the file used for evaluation.
  double eval_fraction = 0.2;
};

// Samples cycle through the classes, so every class appears once there are at
// least `classes` samples. Train and eval draw from distinct seeds.
DatasetSplit make_synthetic(const SyntheticSpec& spec);
Dataset synthetic_samples(const SyntheticSpec& spec, std::uint64_t seed, std::uint32_t count);
// The eval stream's seed, derived from the train seed.
std::uint64_t eval_seed(std::uint64_t train_seed);

// IDX files (big-endian): magic 0x00000803 for u8 images (count, rows, cols),
// 0x00000801 for u8 labels (count). Pixels are scaled to [0, 1].
Dataset parse_idx(const std::vector<std::uint8_t>& image_bytes,
                  const std::vector<std::uint8_t>& label_bytes);
DatasetSplit load_idx(const IdxSpec& spec);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace evovit
