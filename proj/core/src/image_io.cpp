#include "evovit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "evovit/dataset.hpp"

namespace evovit {

namespace {

std::vector<std::uint8_t> pnm(const char* magic, std::size_t width, std::size_t height,
                              std::span<const std::uint8_t> payload) {
  const std::string header = std::string(magic) + "\n" + std::to_string(width) + " " +
                             std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

class HeaderScanner {
 public:
  explicit HeaderScanner(const std::vector<std::uint8_t>& b) : b_(b) {}

  std::string token() {
    skip();
    std::string t;
    while (pos_ < b_.size() && !std::isspace(b_[pos_])) t.push_back(static_cast<char>(b_[pos_++]));
    if (t.empty()) throw FormatError("PNM header truncated at offset " + std::to_string(pos_));
    return t;
  }
  std::size_t number() {
    const std::size_t at = pos_;
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      throw FormatError("PNM header: expected a number at offset " + std::to_string(at));
    }
    return std::stoul(t);
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() const { return pos_ + 1; }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_pgm(std::size_t width, std::size_t height,
                                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != width * height) throw DimensionError("PGM payload does not match its size");
  return pnm("P5", width, height, pixels);
}

std::vector<std::uint8_t> encode_ppm(std::size_t width, std::size_t height,
                                     std::span<const std::uint8_t> rgb) {
  if (rgb.size() != 3 * width * height) throw DimensionError("PPM payload does not match its size");
  return pnm("P6", width, height, rgb);
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  HeaderScanner scan(bytes);
  const std::string magic = scan.token();
  std::size_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw FormatError("PNM: unsupported magic '" + magic + "' at offset 0");
  }
  const std::size_t width = scan.number(), height = scan.number(), maxval = scan.number();
  if (maxval == 0 || maxval > 255) throw FormatError("PNM: maxval must be in [1, 255]");
  const std::size_t start = scan.raster_start();
  const std::size_t expected = start + width * height * channels;
  if (bytes.size() < expected) {
    throw FormatError("PNM truncated: expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  Image img(height, width, channels);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<double>(bytes[start + i]) / static_cast<double>(maxval);
  }
  return img;
}

Image load_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

std::vector<std::uint8_t> selection_mask(std::span<const std::size_t> informative,
                                         std::size_t n_patches) {
  std::vector<std::uint8_t> mask(n_patches, 0);
  for (std::size_t i : informative) {
    if (i >= n_patches) throw IndexError("informative index " + std::to_string(i) + " out of range");
    mask[i] = 255;
  }
  return mask;
}

std::vector<std::uint8_t> selection_overlay(const Image& image, std::span<const std::uint8_t> mask,
                                            std::size_t patch_side) {
  const std::size_t grid = image.width / patch_side;
  if (grid * grid != mask.size() || image.width != image.height) {
    throw DimensionError("overlay: mask does not tile the image");
  }
  std::vector<double> gray(image.height * image.width, 0.0);
  for (std::size_t p = 0; p < gray.size(); ++p) {
    for (std::size_t c = 0; c < image.channels; ++c) gray[p] += image.pixels[p * image.channels + c];
    gray[p] /= static_cast<double>(image.channels);
  }
  const auto [lo_it, hi_it] = std::minmax_element(gray.begin(), gray.end());
  const double lo = *lo_it, range = std::max(*hi_it - lo, 1e-12);

  std::vector<std::uint8_t> rgb(3 * gray.size());
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::size_t p = y * image.width + x;
      const double v = 255.0 * (gray[p] - lo) / range;
      const bool informative = mask[(y / patch_side) * grid + x / patch_side] != 0;
      const double r = informative ? v : 0.35 * v;
      const double b = informative ? v : std::min(255.0, 0.35 * v + 90.0);
      rgb[3 * p] = static_cast<std::uint8_t>(r + 0.5);
      rgb[3 * p + 1] = static_cast<std::uint8_t>(r + 0.5);
      rgb[3 * p + 2] = static_cast<std::uint8_t>(b + 0.5);
    }
  }
  return rgb;
}

}  // namespace evovit
