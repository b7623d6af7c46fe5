#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evovit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct CommonArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::vector<std::string> overrides;
  std::string command_line;
};

struct BenchArgs {
  std::size_t batch = 8;
  std::size_t repeats = 10;
  std::size_t warmup = 2;
  bool flops_only = false;
};

struct AnalyzeArgs {
  std::filesystem::path checkpoint;
  bool cka = false;
  bool pcc = false;
  bool strategies = false;
  // Eval samples used by the analyses; 0 means all.
  std::size_t samples = 0;
};

struct VisualizeArgs {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> images;
  // Eval-split samples rendered in addition to `images`.
  std::size_t dataset_samples = 0;
};

// Each returns an exit code; errors are reported on stderr.
int cmd_train(const CommonArgs& common);
int cmd_bench(const CommonArgs& common, const BenchArgs& args);
int cmd_analyze(const CommonArgs& common, const AnalyzeArgs& args);
int cmd_visualize(const CommonArgs& common, const VisualizeArgs& args);

int run_cli(int argc, char** argv);

}  // namespace evovit::cli
