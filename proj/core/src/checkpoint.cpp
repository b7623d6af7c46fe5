#include "evovit/checkpoint.hpp"

#include <bit>
#include <map>

#include "evovit/dataset.hpp"

namespace evovit {

namespace {

class Writer {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

  std::uint64_t uint(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(uint(8, what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated reading " + std::string(what) + " at offset " +
                        std::to_string(pos_) + ": need " + std::to_string(n) + " bytes, have " +
                        std::to_string(bytes_.size() - pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const EncoderConfig& cfg, const ModelParams& params) {
  Writer w;
  w.raw("EVOT");
  w.u32(kCheckpointVersion);
  for (std::uint32_t field : {cfg.image_side, cfg.patch_side, cfg.channels_in, cfg.embed_dim,
                              cfg.heads, cfg.depth, cfg.ffn_hidden, cfg.num_classes}) {
    w.u32(field);
  }
  for (const Parameter* p : params.refs()) {
    w.u16(static_cast<std::uint16_t>(p->name.size()));
    w.raw(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rows()));
    w.u32(static_cast<std::uint32_t>(p->value.cols()));
    for (double v : p->value.flat()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != "EVOT") throw FormatError("checkpoint: bad magic at offset 0");
  const auto version = r.uint(4, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at offset 4");
  }
  Checkpoint ck;
  for (std::uint32_t* field : {&ck.config.image_side, &ck.config.patch_side, &ck.config.channels_in,
                               &ck.config.embed_dim, &ck.config.heads, &ck.config.depth,
                               &ck.config.ffn_hidden, &ck.config.num_classes}) {
    *field = static_cast<std::uint32_t>(r.uint(4, "config header"));
  }
  try {
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }

  ck.params = zero_params(ck.config);
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : ck.params.refs()) by_name[p->name] = p;
  std::map<std::string, bool> seen;

  while (!r.done()) {
    const std::size_t at = r.offset();
    const auto name_len = static_cast<std::size_t>(r.uint(2, "name length"));
    const std::string name = r.str(name_len, "name");
    const auto rows = static_cast<std::size_t>(r.uint(4, "rows"));
    const auto cols = static_cast<std::size_t>(r.uint(4, "cols"));
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint: unexpected parameter '" + name + "' at offset " +
                        std::to_string(at) + " for config " + ck.config.describe());
    }
    Parameter& p = *it->second;
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw FormatError("checkpoint: parameter '" + name + "' has shape " +
                        Matrix::shape_string(rows, cols) + ", config " + ck.config.describe() +
                        " expects " + p.value.shape());
    }
    if (seen[name]) throw FormatError("checkpoint: duplicate parameter '" + name + "'");
    seen[name] = true;
    for (double& v : p.value.flat()) v = r.f64("values");
  }
  for (const auto& [name, p] : by_name) {
    if (!seen[name]) throw FormatError("checkpoint: missing parameter '" + name + "'");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderConfig& cfg,
                     const ModelParams& params) {
  write_file(path, encode_checkpoint(cfg, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace evovit
