#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "evovit/dataset.hpp"
#include "evovit/error.hpp"
#include "evovit/image_io.hpp"

namespace evovit {
namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

void append(std::vector<std::uint8_t>& dst, const std::vector<std::uint8_t>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

// count images of rows x cols, pixel value = 10 * image + position.
std::vector<std::uint8_t> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> b;
  append(b, be32(0x00000803));
  append(b, be32(count));
  append(b, be32(rows));
  append(b, be32(cols));
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t p = 0; p < rows * cols; ++p) b.push_back(static_cast<std::uint8_t>(10 * i + p));
  }
  return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> b;
  append(b, be32(0x00000801));
  append(b, be32(static_cast<std::uint32_t>(labels.size())));
  append(b, labels);
  return b;
}

std::string format_message(const std::vector<std::uint8_t>& images,
                           const std::vector<std::uint8_t>& labels) {
  try {
    parse_idx(images, labels);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(Synthetic, EveryClassAppears) {
  SyntheticSpec spec;
  spec.samples = 100;
  spec.eval_samples = 20;
  const DatasetSplit split = make_synthetic(spec);
  ASSERT_EQ(split.train.size(), 100u);
  ASSERT_EQ(split.eval.size(), 20u);
  EXPECT_EQ(split.train.num_classes, 10u);
  const std::set<int> seen(split.train.labels.begin(), split.train.labels.end());
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 9);
  for (const Image& img : split.train.images) {
    EXPECT_EQ(img.height, 16u);
    EXPECT_EQ(img.width, 16u);
    EXPECT_EQ(img.channels, 1u);
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec spec;
  spec.samples = 30;
  spec.eval_samples = 10;
  const DatasetSplit a = make_synthetic(spec), b = make_synthetic(spec);
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.images[i].pixels, b.train.images[i].pixels);
  spec.seed = 2;
  const DatasetSplit c = make_synthetic(spec);
  EXPECT_NE(a.train.images[0].pixels, c.train.images[0].pixels);
}

TEST(Synthetic, TrainAndEvalStreamsDiffer) {
  SyntheticSpec spec;
  spec.samples = 10;
  spec.eval_samples = 10;
  const DatasetSplit split = make_synthetic(spec);
  EXPECT_NE(eval_seed(spec.seed), spec.seed);
  EXPECT_EQ(split.train.labels, split.eval.labels);
  EXPECT_NE(split.train.images[0].pixels, split.eval.images[0].pixels);
}

TEST(Synthetic, RejectsDegenerateSpec) {
  SyntheticSpec spec;
  spec.side = 2;
  EXPECT_THROW(make_synthetic(spec), ConfigError);
  spec = {};
  spec.classes = 0;
  EXPECT_THROW(make_synthetic(spec), ConfigError);
}

TEST(Idx, ParsesTwoFourByFour) {
  const Dataset ds = parse_idx(idx_images(2, 4, 4), idx_labels({3, 1}));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 1}));
  EXPECT_EQ(ds.num_classes, 4u);
  EXPECT_EQ(ds.images[1].height, 4u);
  EXPECT_EQ(ds.images[1].width, 4u);
  EXPECT_DOUBLE_EQ(ds.images[0].at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(ds.images[0].at(1, 2), 6.0 / 255.0);
  EXPECT_DOUBLE_EQ(ds.images[1].at(3, 3), 25.0 / 255.0);
}

TEST(Idx, BadMagicNamesOffset) {
  auto images = idx_images(1, 2, 2);
  images[3] = 0x01;
  const std::string msg = format_message(images, idx_labels({0}));
  EXPECT_NE(msg.find("0x00000801"), std::string::npos) << msg;
  EXPECT_NE(msg.find("offset 0"), std::string::npos) << msg;
}

TEST(Idx, TruncatedNamesExpectedAndActual) {
  auto images = idx_images(2, 4, 4);
  images.resize(images.size() - 5);
  const std::string msg = format_message(images, idx_labels({0, 1}));
  EXPECT_NE(msg.find("expected 48"), std::string::npos) << msg;
  EXPECT_NE(msg.find("got 43"), std::string::npos) << msg;
}

TEST(Idx, CountMismatch) {
  EXPECT_THROW(parse_idx(idx_images(2, 2, 2), idx_labels({0})), FormatError);
}

TEST(Idx, LoadSplitsTail) {
  const auto dir = std::filesystem::temp_directory_path() / "evovit_idx_test";
  std::filesystem::create_directories(dir);
  write_file(dir / "img.idx", idx_images(5, 2, 2));
  write_file(dir / "lbl.idx", idx_labels({0, 1, 2, 3, 4}));
  IdxSpec spec{dir / "img.idx", dir / "lbl.idx", 0.4};
  const DatasetSplit split = load_idx(spec);
  EXPECT_EQ(split.train.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(split.eval.labels, (std::vector<int>{3, 4}));
  EXPECT_EQ(split.eval.num_classes, 5u);
  spec.eval_fraction = 1.0;
  EXPECT_THROW(load_idx(spec), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(ReadFile, MissingFileIsIoError) {
  EXPECT_THROW(read_file("/nonexistent/evovit/file.bin"), IoError);
}

TEST(Pnm, PgmRoundTrip) {
  const std::vector<std::uint8_t> px{0, 51, 102, 153, 204, 255};
  const Image img = decode_pnm(encode_pgm(3, 2, px));
  ASSERT_EQ(img.width, 3u);
  ASSERT_EQ(img.height, 2u);
  ASSERT_EQ(img.channels, 1u);
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_DOUBLE_EQ(img.pixels[i], px[i] / 255.0);
}

TEST(Pnm, PpmRoundTrip) {
  const std::vector<std::uint8_t> rgb{255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30};
  const Image img = decode_pnm(encode_ppm(2, 2, rgb));
  ASSERT_EQ(img.channels, 3u);
  EXPECT_DOUBLE_EQ(img.at(0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(img.at(1, 1, 2), 30.0 / 255.0);
}

TEST(Pnm, HeaderErrors) {
  const std::vector<std::uint8_t> bad_magic{'P', '3', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 0};
  EXPECT_THROW(decode_pnm(bad_magic), FormatError);
  auto short_payload = encode_pgm(2, 2, std::vector<std::uint8_t>{1, 2, 3, 4});
  short_payload.pop_back();
  EXPECT_THROW(decode_pnm(short_payload), FormatError);
  EXPECT_THROW(encode_pgm(2, 2, std::vector<std::uint8_t>{1, 2, 3}), DimensionError);
}

TEST(Mask, MarksInformativePatches) {
  const std::vector<std::size_t> informative{0, 3, 5};
  const auto mask = selection_mask(informative, 6);
  EXPECT_EQ(mask, (std::vector<std::uint8_t>{255, 0, 0, 255, 0, 255}));
  const std::vector<std::size_t> out_of_range{6};
  EXPECT_THROW(selection_mask(out_of_range, 6), IndexError);
}

TEST(Mask, OverlayKeepsInformativeAndDimsPlaceholders) {
  Image img(4, 4, 1, 0.0);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = i % 2 ? 1.0 : 0.5;
  const std::vector<std::uint8_t> mask{255, 0, 0, 0};
  const auto rgb = selection_overlay(img, mask, 2);
  ASSERT_EQ(rgb.size(), 48u);
  // Bright pixel (0, 1) in the informative patch against (0, 3) in a placeholder.
  const std::size_t kept = 3 * 1, dimmed = 3 * 3;
  EXPECT_GT(rgb[kept], rgb[dimmed]);
  EXPECT_EQ(rgb[kept], rgb[kept + 2]);
  EXPECT_GT(rgb[dimmed + 2], rgb[dimmed]);
  EXPECT_THROW(selection_overlay(img, std::vector<std::uint8_t>(3, 0), 2), DimensionError);
}

}  // namespace
}  // namespace evovit
