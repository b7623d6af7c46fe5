#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evovit/encoder.hpp"

namespace evovit {

// Binary PGM (P5) of a width x height grid, maxval 255.
std::vector<std::uint8_t> encode_pgm(std::size_t width, std::size_t height,
                                     std::span<const std::uint8_t> pixels);
// Binary PPM (P6), interleaved RGB.
std::vector<std::uint8_t> encode_ppm(std::size_t width, std::size_t height,
                                     std::span<const std::uint8_t> rgb);

// Reads P5 or P6 (maxval <= 255) into an Image with values in [0, 1].
Image decode_pnm(const std::vector<std::uint8_t>& bytes);
Image load_pnm(const std::filesystem::path& path);

// Patch-grid mask: 255 for informative patches, 0 for placeholders.
std::vector<std::uint8_t> selection_mask(std::span<const std::size_t> informative,
                                         std::size_t n_patches);
// Image-resolution RGB overlay: informative patches keep their intensity,
// placeholders are dimmed and tinted blue.
std::vector<std::uint8_t> selection_overlay(const Image& image, std::span<const std::uint8_t> mask,
                                            std::size_t patch_side);

}  // namespace evovit
