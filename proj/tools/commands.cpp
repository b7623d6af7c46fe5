#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "evovit/bench.hpp"
#include "evovit/checkpoint.hpp"
#include "evovit/error.hpp"
#include "evovit/flops.hpp"
#include "evovit/image_io.hpp"
#include "evovit/profiles.hpp"
#include "evovit/strategies.hpp"
#include "manifest.hpp"
#include "run_config.hpp"

namespace evovit::cli {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

RunConfig resolve(const CommonArgs& common) {
  if (common.config.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_run_config(common.config, common.overrides);
  if (common.seed) cfg.train.seed = *common.seed;
  if (common.out) cfg.output_dir = common.out->string();
  return cfg;
}

std::size_t worker_threads() {
  const char* env = std::getenv("EVO_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0) throw ConfigError(std::string("EVO_THREADS must be a positive integer, got '") + env + "'");
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

Checkpoint load_matching_checkpoint(const fs::path& path, const EncoderConfig& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.config == expected)) {
    throw ConfigError("checkpoint " + path.string() + " has shape " + ckpt.config.describe() +
                      " but the config expects " + expected.describe());
  }
  return ckpt;
}

// Shortest round-trip representation.
std::string fixed(double v) { return nlohmann::json(v).dump(); }

}  // namespace

int cmd_train(const CommonArgs& common) {
  return guarded([&] {
    const RunConfig cfg = resolve(common);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir / "reports");

    RunManifest manifest = make_manifest(cfg, common.command_line);
    manifest.outputs = {{"config", (dir / "config.json").string()},
                        {"metrics", (dir / "metrics.jsonl").string()},
                        {"checkpoint", (dir / "checkpoint.bin").string()},
                        {"reports", (dir / "reports").string()}};
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    write_manifest(dir / "manifest.json", manifest);

    const DatasetSplit data = load_dataset(cfg.dataset);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + (dir / "metrics.jsonl").string());

    TrainHooks hooks;
    hooks.threads = worker_threads();
    hooks.on_epoch = [&](const EpochMetrics& m) {
      const std::string line = metrics_json_line(m);
      metrics << line << '\n';
      metrics.flush();
      std::cout << line << '\n';
    };
    const TrainResult result = train(cfg.model, data, cfg.encoder, cfg.train, cfg.evo, hooks);
    save_checkpoint(dir / "checkpoint.bin", cfg.encoder, result.params);

    manifest.finished_at = utc_timestamp();
    write_manifest(dir / "manifest.json", manifest);
    return kExitOk;
  });
}

int cmd_bench(const CommonArgs& common, const BenchArgs& args) {
  return guarded([&] {
    const RunConfig cfg = resolve(common);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir / "reports");
    RunManifest manifest = make_manifest(cfg, common.command_line);
    manifest.outputs = {{"bench", (dir / "reports" / "bench.json").string()}};
    write_manifest(dir / "manifest_bench.json", manifest);

    nlohmann::ordered_json doc;
    doc["config_hash"] = manifest.config_hash;
    doc["flops"] = nlohmann::ordered_json::parse(analysis::to_json(analysis::flop_report(cfg.encoder, cfg.evo)));
    if (!args.flops_only) {
      Rng rng(cfg.train.seed);
      const ModelParams params = init_params(cfg.encoder, rng);
      analysis::BenchOptions options;
      options.batch = args.batch;
      options.repeats = args.repeats;
      options.warmup = args.warmup;
      options.seed = cfg.train.seed;
      const auto paired = analysis::paired_throughput_bench(cfg.encoder, cfg.evo, params, options);
      doc["vanilla"] = nlohmann::ordered_json::parse(analysis::to_json(paired.vanilla));
      doc["evo"] = nlohmann::ordered_json::parse(analysis::to_json(paired.evo));
      doc["speedup"] = paired.speedup;
    }
    const std::string text = doc.dump(2) + "\n";
    write_text(dir / "reports" / "bench.json", text);
    std::cout << text;

    manifest.finished_at = utc_timestamp();
    write_manifest(dir / "manifest_bench.json", manifest);
    return kExitOk;
  });
}

int cmd_analyze(const CommonArgs& common, const AnalyzeArgs& args) {
  return guarded([&] {
    const RunConfig cfg = resolve(common);
    const Checkpoint ckpt = load_matching_checkpoint(args.checkpoint, cfg.encoder);
    const fs::path dir = cfg.output_dir, reports = dir / "reports";
    fs::create_directories(reports);

    const bool all = !args.cka && !args.pcc && !args.strategies;
    RunManifest manifest = make_manifest(cfg, common.command_line);
    if (all || args.cka) manifest.outputs["cka"] = (reports / "cka.csv").string();
    if (all || args.pcc) manifest.outputs["pcc"] = (reports / "pcc.csv").string();
    if (all || args.strategies) {
      manifest.outputs["strategies_json"] = (reports / "strategies.json").string();
      manifest.outputs["strategies_csv"] = (reports / "strategies.csv").string();
    }
    write_manifest(dir / "manifest_analyze.json", manifest);

    Dataset data = load_dataset(cfg.dataset).eval;
    if (args.samples > 0 && args.samples < data.size()) {
      data.images.resize(args.samples);
      data.labels.resize(args.samples);
    }

    if (all || args.cka) {
      std::string csv = "layer,value\n";
      const auto values = analysis::cka_profile(ckpt.params, data, cfg.encoder, cfg.evo);
      for (std::size_t l = 0; l < values.size(); ++l) csv += std::to_string(l + 1) + "," + fixed(values[l]) + "\n";
      write_text(reports / "cka.csv", csv);
    }
    if (all || args.pcc) {
      std::string csv = "layer,value\n";
      const auto stats = analysis::pcc_profile(ckpt.params, data, cfg.encoder, cfg.evo);
      for (std::size_t l = 0; l < stats.size(); ++l) csv += std::to_string(l + 1) + "," + fixed(stats[l].mean) + "\n";
      write_text(reports / "pcc.csv", csv);
    }
    if (all || args.strategies) {
      const auto rows = analysis::compare_strategies(ckpt.params, data, cfg.encoder, cfg.evo, cfg.train.seed);
      nlohmann::ordered_json doc;
      doc["keep_ratio"] = cfg.evo.keep_ratio;
      doc["start_layer"] = cfg.evo.start_layer;
      doc["samples"] = data.size();
      doc["strategies"] = nlohmann::ordered_json::array();
      std::string csv = "strategy,accuracy\n";
      for (const auto& row : rows) {
        doc["strategies"].push_back({{"strategy", analysis::to_string(row.kind)}, {"accuracy", row.accuracy}});
        csv += std::string(analysis::to_string(row.kind)) + "," + fixed(row.accuracy) + "\n";
      }
      write_text(reports / "strategies.json", doc.dump(2) + "\n");
      write_text(reports / "strategies.csv", csv);
      std::cout << csv;
    }

    manifest.finished_at = utc_timestamp();
    write_manifest(dir / "manifest_analyze.json", manifest);
    return kExitOk;
  });
}

int cmd_visualize(const CommonArgs& common, const VisualizeArgs& args) {
  return guarded([&] {
    const RunConfig cfg = resolve(common);
    const Checkpoint ckpt = load_matching_checkpoint(args.checkpoint, cfg.encoder);
    const EncoderConfig& enc = cfg.encoder;

    std::vector<std::pair<std::string, Image>> inputs;
    for (const fs::path& path : args.images) {
      Image image = load_pnm(path);
      if (image.height != enc.image_side || image.width != enc.image_side || image.channels != enc.channels_in) {
        throw ConfigError("resolution mismatch: " + path.string() + " is " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + "x" + std::to_string(image.channels) +
                          ", checkpoint expects " + std::to_string(enc.image_side) + "x" +
                          std::to_string(enc.image_side) + "x" + std::to_string(enc.channels_in));
      }
      inputs.emplace_back(path.stem().string(), std::move(image));
    }
    if (args.dataset_samples > 0) {
      const Dataset eval = load_dataset(cfg.dataset).eval;
      for (std::size_t i = 0; i < std::min(args.dataset_samples, eval.size()); ++i) {
        inputs.emplace_back("sample" + std::to_string(i), eval.images[i]);
      }
    }
    if (inputs.empty()) throw ConfigError("visualize needs --images or --samples");

    const fs::path dir = cfg.output_dir, vis = dir / "reports" / "visualize";
    fs::create_directories(vis);
    RunManifest manifest = make_manifest(cfg, common.command_line);
    manifest.outputs["visualize"] = vis.string();
    write_manifest(dir / "manifest_visualize.json", manifest);

    const std::size_t grid = enc.grid();
    for (const auto& [name, image] : inputs) {
      const auto out = model_forward_evo(image, ckpt.params, enc, cfg.evo);
      for (const SelectionResult& sel : out.selections) {
        const auto mask = selection_mask(sel.informative, enc.num_patches());
        const std::string stem = name + "_layer" + std::to_string(sel.layer + 1);
        write_file(vis / (stem + "_mask.pgm"), encode_pgm(grid, grid, mask));
        write_file(vis / (stem + "_overlay.ppm"),
                   encode_ppm(enc.image_side, enc.image_side, selection_overlay(image, mask, enc.patch_side)));
      }
    }

    manifest.finished_at = utc_timestamp();
    write_manifest(dir / "manifest_visualize.json", manifest);
    return kExitOk;
  });
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Slow-fast token evolution for vision transformers"};
  app.require_subcommand(1);

  CommonArgs common;
  for (int i = 0; i < argc; ++i) common.command_line += (i ? " " : "") + std::string(argv[i]);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Run config (JSON)")->required();
    sub->add_option("--seed", common.seed, "Overrides train.seed");
    sub->add_option("--out", common.out, "Overrides output_dir");
    sub->add_option("--override", common.overrides, "KEY=VALUE dot-path override (repeatable)");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train_cmd);

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "FLOP report and forward throughput");
  add_common(bench_cmd);
  bench_cmd->add_option("--batch", bench.batch, "Images per timed batch");
  bench_cmd->add_option("--repeats", bench.repeats, "Timed repeats (>= 5)");
  bench_cmd->add_option("--warmup", bench.warmup, "Untimed warmup batches (>= 2)");
  bench_cmd->add_flag("--flops-only", bench.flops_only, "Skip timing");

  AnalyzeArgs analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "CKA, PCC and selection-strategy reports");
  add_common(analyze_cmd);
  analyze_cmd->add_option("--checkpoint", analyze.checkpoint, "Checkpoint file")->required();
  analyze_cmd->add_flag("--cka", analyze.cka, "Per-layer CKA to the final CLS token");
  analyze_cmd->add_flag("--pcc", analyze.pcc, "Per-layer query PCC");
  analyze_cmd->add_flag("--strategies", analyze.strategies, "Selection strategy accuracy table");
  analyze_cmd->add_option("--samples", analyze.samples, "Eval samples to use (0 = all)");

  VisualizeArgs visualize;
  auto* vis_cmd = app.add_subcommand("visualize", "Selection masks and overlays");
  add_common(vis_cmd);
  vis_cmd->add_option("--checkpoint", visualize.checkpoint, "Checkpoint file")->required();
  vis_cmd->add_option("--images", visualize.images, "PGM/PPM images");
  vis_cmd->add_option("--samples", visualize.dataset_samples, "Eval-split samples to render");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (train_cmd->parsed()) return cmd_train(common);
  if (bench_cmd->parsed()) return cmd_bench(common, bench);
  if (analyze_cmd->parsed()) return cmd_analyze(common, analyze);
  return cmd_visualize(common, visualize);
}

}  // namespace evovit::cli
