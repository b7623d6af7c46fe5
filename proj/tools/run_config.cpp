#include "run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace evovit::cli {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("key '" + where + "." + key + "': " + e.what());
  }
}

void read_u32(const json& obj, const std::string& where, const char* key, std::uint32_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
      v.get<std::int64_t>() > std::int64_t{0xFFFFFFFF}) {
    throw ConfigError("key '" + where + "." + key + "' must be a non-negative integer");
  }
  out = v.get<std::uint32_t>();
}

EncoderConfig parse_encoder(const json& j) {
  reject_unknown(j, "encoder",
                 {"image_side", "patch_side", "channels_in", "embed_dim", "heads", "depth",
                  "ffn_hidden", "num_classes"});
  EncoderConfig c;
  read_u32(j, "encoder", "image_side", c.image_side);
  read_u32(j, "encoder", "patch_side", c.patch_side);
  read_u32(j, "encoder", "channels_in", c.channels_in);
  read_u32(j, "encoder", "embed_dim", c.embed_dim);
  read_u32(j, "encoder", "heads", c.heads);
  read_u32(j, "encoder", "depth", c.depth);
  c.ffn_hidden = 4 * c.embed_dim;
  read_u32(j, "encoder", "ffn_hidden", c.ffn_hidden);
  read_u32(j, "encoder", "num_classes", c.num_classes);
  return c;
}

EvoConfig parse_evo(const json& j) {
  reject_unknown(j, "evo",
                 {"keep_ratio", "layer_keep_ratios", "start_layer", "alpha", "aggregation",
                  "expansion"});
  EvoConfig e;
  read(j, "evo", "keep_ratio", e.keep_ratio);
  read(j, "evo", "layer_keep_ratios", e.layer_keep_ratios);
  read_u32(j, "evo", "start_layer", e.start_layer);
  read(j, "evo", "alpha", e.alpha);
  std::string aggregation = "weighted-sum", expansion = "copy";
  read(j, "evo", "aggregation", aggregation);
  read(j, "evo", "expansion", expansion);
  if (aggregation != "weighted-sum") {
    throw ConfigError("key 'evo.aggregation': only \"weighted-sum\" is supported");
  }
  if (expansion != "copy") throw ConfigError("key 'evo.expansion': only \"copy\" is supported");
  return e;
}

void parse_train(const json& j, TrainConfig& t, ModelKind& model) {
  reject_unknown(j, "train",
                 {"epochs", "batch_size", "learning_rate", "weight_decay", "beta1", "beta2",
                  "adam_eps", "seed", "stage_size", "layer_to_stage_switch", "model"});
  read_u32(j, "train", "epochs", t.epochs);
  read_u32(j, "train", "batch_size", t.batch_size);
  read(j, "train", "learning_rate", t.learning_rate);
  read(j, "train", "weight_decay", t.weight_decay);
  read(j, "train", "beta1", t.beta1);
  read(j, "train", "beta2", t.beta2);
  read(j, "train", "adam_eps", t.adam_eps);
  read(j, "train", "seed", t.seed);
  read_u32(j, "train", "stage_size", t.stage_size);
  read(j, "train", "layer_to_stage_switch", t.layer_to_stage_switch);
  std::string kind = "evo";
  read(j, "train", "model", kind);
  if (kind == "evo") {
    model = ModelKind::Evo;
  } else if (kind == "vanilla") {
    model = ModelKind::Vanilla;
  } else {
    throw ConfigError("key 'train.model' must be \"evo\" or \"vanilla\", got \"" + kind + "\"");
  }
}

DatasetSpec parse_dataset(const json& j) {
  reject_unknown(j, "dataset", {"synthetic", "idx"});
  if (j.contains("synthetic") == j.contains("idx")) {
    throw ConfigError("'dataset' needs exactly one of 'synthetic' or 'idx'");
  }
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    reject_unknown(s, "dataset.synthetic",
                   {"classes", "samples", "eval_samples", "side", "channels", "seed", "noise"});
    SyntheticSpec spec;
    read_u32(s, "dataset.synthetic", "classes", spec.classes);
    read_u32(s, "dataset.synthetic", "samples", spec.samples);
    spec.eval_samples = std::max<std::uint32_t>(1, spec.samples / 4);
    read_u32(s, "dataset.synthetic", "eval_samples", spec.eval_samples);
    read_u32(s, "dataset.synthetic", "side", spec.side);
    read_u32(s, "dataset.synthetic", "channels", spec.channels);
    read(s, "dataset.synthetic", "seed", spec.seed);
    read(s, "dataset.synthetic", "noise", spec.noise);
    return spec;
  }
  const json& s = j.at("idx");
  reject_unknown(s, "dataset.idx", {"images", "labels", "eval_fraction"});
  if (!s.contains("images") || !s.contains("labels")) {
    throw ConfigError("'dataset.idx' needs both 'images' and 'labels'");
  }
  IdxSpec spec;
  std::string images, labels;
  read(s, "dataset.idx", "images", images);
  read(s, "dataset.idx", "labels", labels);
  spec.images = images;
  spec.labels = labels;
  read(s, "dataset.idx", "eval_fraction", spec.eval_fraction);
  return spec;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  reject_unknown(doc, "", {"encoder", "evo", "train", "dataset", "output_dir"});
  RunConfig cfg;
  if (doc.contains("encoder")) cfg.encoder = parse_encoder(doc.at("encoder"));
  if (doc.contains("evo")) cfg.evo = parse_evo(doc.at("evo"));
  if (doc.contains("train")) parse_train(doc.at("train"), cfg.train, cfg.model);
  if (doc.contains("dataset")) cfg.dataset = parse_dataset(doc.at("dataset"));
  read(doc, "", "output_dir", cfg.output_dir);

  cfg.encoder.validate();
  cfg.evo.validate(cfg.encoder.depth);
  cfg.train.validate();
  if (const auto* syn = std::get_if<SyntheticSpec>(&cfg.dataset)) {
    if (syn->side != cfg.encoder.image_side || syn->channels != cfg.encoder.channels_in) {
      throw ConfigError("dataset.synthetic side/channels (" + std::to_string(syn->side) + "/" +
                        std::to_string(syn->channels) + ") do not match encoder image_side/channels_in (" +
                        std::to_string(cfg.encoder.image_side) + "/" +
                        std::to_string(cfg.encoder.channels_in) + ")");
    }
    if (syn->classes != cfg.encoder.num_classes) {
      throw ConfigError("dataset.synthetic.classes does not match encoder.num_classes");
    }
  }
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  const auto& e = cfg.encoder;
  j["encoder"] = {{"image_side", e.image_side}, {"patch_side", e.patch_side},
                  {"channels_in", e.channels_in}, {"embed_dim", e.embed_dim},
                  {"heads", e.heads},             {"depth", e.depth},
                  {"ffn_hidden", e.ffn_hidden},   {"num_classes", e.num_classes}};
  j["evo"] = {{"keep_ratio", cfg.evo.keep_ratio},
              {"layer_keep_ratios", cfg.evo.layer_keep_ratios},
              {"start_layer", cfg.evo.start_layer},
              {"alpha", cfg.evo.alpha},
              {"aggregation", "weighted-sum"},
              {"expansion", "copy"}};
  const auto& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"weight_decay", t.weight_decay},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"seed", t.seed},
                {"stage_size", t.stage_size},
                {"layer_to_stage_switch", t.layer_to_stage_switch},
                {"model", to_string(cfg.model)}};
  if (const auto* syn = std::get_if<SyntheticSpec>(&cfg.dataset)) {
    j["dataset"]["synthetic"] = {{"classes", syn->classes},     {"samples", syn->samples},
                                 {"eval_samples", syn->eval_samples}, {"side", syn->side},
                                 {"channels", syn->channels},   {"seed", syn->seed},
                                 {"noise", syn->noise}};
  } else {
    const auto& idx = std::get<IdxSpec>(cfg.dataset);
    j["dataset"]["idx"] = {{"images", idx.images.string()},
                           {"labels", idx.labels.string()},
                           {"eval_fraction", idx.eval_fraction}};
  }
  j["output_dir"] = cfg.output_dir;
  return j;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  }
  const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override '" + path + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  try {
    return parse_run_config(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

DatasetSplit load_dataset(const DatasetSpec& spec) {
  if (const auto* syn = std::get_if<SyntheticSpec>(&spec)) return make_synthetic(*syn);
  return load_idx(std::get<IdxSpec>(spec));
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace evovit::cli
