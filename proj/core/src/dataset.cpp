#include "evovit/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "evovit/rng.hpp"

namespace evovit {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

std::uint64_t eval_seed(std::uint64_t train_seed) {
  std::uint64_t s = train_seed ^ 0x5EEDE7A1C0FFEE00ULL;
  return splitmix64(s);
}

namespace {

constexpr std::size_t kOrientations = 5;
constexpr double kStripePeriod = 4.0;
constexpr double kBlobSigma = 1.5;
constexpr double kBlobAmplitude = 1.5;

Image draw_sample(std::uint32_t label, std::uint32_t side, std::uint32_t channels, double noise,
                  Rng& rng) {
  Image img(side, side, channels);
  const double theta = std::numbers::pi * static_cast<double>(label % kOrientations) /
                       static_cast<double>(kOrientations);
  const bool blob = (label / kOrientations) % 2 == 1;
  const std::size_t window = std::max<std::size_t>(4, (side * 5) / 8);
  const std::size_t span = side - window + 1;
  const auto x0 = static_cast<std::size_t>(rng.below(span));
  const auto y0 = static_cast<std::size_t>(rng.below(span));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double bx = static_cast<double>(x0) + rng.uniform(1.0, static_cast<double>(window) - 1.0);
  const double by = static_cast<double>(y0) + rng.uniform(1.0, static_cast<double>(window) - 1.0);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);

  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      double v = 0.0;
      const bool inside = x >= x0 && x < x0 + window && y >= y0 && y < y0 + window;
      if (inside) {
        const double u = static_cast<double>(x) * cos_t + static_cast<double>(y) * sin_t;
        v = std::sin(2.0 * std::numbers::pi * u / kStripePeriod + phase);
        if (blob) {
          const double dx = static_cast<double>(x) - bx, dy = static_cast<double>(y) - by;
          v += kBlobAmplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * kBlobSigma * kBlobSigma));
        }
      }
      for (std::size_t c = 0; c < channels; ++c) img.at(y, x, c) = v + noise * rng.normal();
    }
  }
  return img;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void need_bytes(const std::vector<std::uint8_t>& b, std::size_t expected, const char* what) {
  if (b.size() < expected) {
    throw FormatError(std::string("IDX ") + what + " truncated: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(b.size()));
  }
}

}  // namespace

Dataset synthetic_samples(const SyntheticSpec& spec, std::uint64_t seed, std::uint32_t count) {
  if (spec.classes == 0 || spec.side < 4 || spec.channels == 0) {
    throw ConfigError("synthetic dataset needs classes >= 1, side >= 4, channels >= 1");
  }
  Rng rng(seed);
  Dataset ds;
  ds.num_classes = spec.classes;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t label = i % spec.classes;
    ds.images.push_back(draw_sample(label, spec.side, spec.channels, spec.noise, rng));
    ds.labels.push_back(static_cast<int>(label));
  }
  return ds;
}

DatasetSplit make_synthetic(const SyntheticSpec& spec) {
  return {synthetic_samples(spec, spec.seed, spec.samples),
          synthetic_samples(spec, eval_seed(spec.seed), spec.eval_samples)};
}

Dataset parse_idx(const std::vector<std::uint8_t>& image_bytes,
                  const std::vector<std::uint8_t>& label_bytes) {
  need_bytes(image_bytes, 4, "image header");
  if (be32(image_bytes, 0) != 0x00000803) {
    throw FormatError("IDX images: bad magic " + hex32(be32(image_bytes, 0)) +
                      " at offset 0, expected 0x00000803");
  }
  need_bytes(image_bytes, 16, "image header");
  const std::size_t count = be32(image_bytes, 4), rows = be32(image_bytes, 8),
                    cols = be32(image_bytes, 12);
  const std::size_t image_total = 16 + count * rows * cols;
  if (image_bytes.size() != image_total) {
    throw FormatError("IDX images truncated: expected " + std::to_string(image_total) +
                      " bytes, got " + std::to_string(image_bytes.size()));
  }

  need_bytes(label_bytes, 4, "label header");
  if (be32(label_bytes, 0) != 0x00000801) {
    throw FormatError("IDX labels: bad magic " + hex32(be32(label_bytes, 0)) +
                      " at offset 0, expected 0x00000801");
  }
  need_bytes(label_bytes, 8, "label header");
  const std::size_t label_count = be32(label_bytes, 4);
  if (label_bytes.size() != 8 + label_count) {
    throw FormatError("IDX labels truncated: expected " + std::to_string(8 + label_count) +
                      " bytes, got " + std::to_string(label_bytes.size()));
  }
  if (label_count != count) {
    throw FormatError("IDX image count " + std::to_string(count) + " != label count " +
                      std::to_string(label_count));
  }

  Dataset ds;
  ds.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Image img(rows, cols, 1);
    const std::size_t base = 16 + i * rows * cols;
    for (std::size_t p = 0; p < rows * cols; ++p) img.pixels[p] = image_bytes[base + p] / 255.0;
    ds.images.push_back(std::move(img));
    const int label = label_bytes[8 + i];
    ds.labels.push_back(label);
    ds.num_classes = std::max<std::uint32_t>(ds.num_classes, static_cast<std::uint32_t>(label) + 1);
  }
  return ds;
}

DatasetSplit load_idx(const IdxSpec& spec) {
  if (!(spec.eval_fraction >= 0.0 && spec.eval_fraction < 1.0)) {
    throw ConfigError("idx eval_fraction must lie in [0, 1)");
  }
  Dataset all = parse_idx(read_file(spec.images), read_file(spec.labels));
  const auto n_eval = static_cast<std::size_t>(std::floor(static_cast<double>(all.size()) * spec.eval_fraction));
  const std::size_t n_train = all.size() - n_eval;
  DatasetSplit split;
  split.train.num_classes = split.eval.num_classes = all.num_classes;
  for (std::size_t i = 0; i < all.size(); ++i) {
    Dataset& dst = i < n_train ? split.train : split.eval;
    dst.images.push_back(std::move(all.images[i]));
    dst.labels.push_back(all.labels[i]);
  }
  return split;
}

}  // namespace evovit
