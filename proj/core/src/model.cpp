#include "ont/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "ont/rng.hpp"

namespace ont {

namespace {

// Initialization tags carried alongside the registry while it is being
// built: biases start at zero, normalization gains at one, everything else
// uniform in ±sqrt(1/fan_in).
constexpr std::size_t kInitZero = 0;
constexpr std::size_t kInitOne = std::numeric_limits<std::size_t>::max();

std::string layer_name(const char* stem, std::size_t i) {
  return std::string(stem) + std::to_string(i);
}

}  // namespace

std::string to_string(MaskMode m) {
  return m == MaskMode::bounded ? "bounded" : "unbounded";
}

std::string to_string(TstmKind k) {
  return k == TstmKind::complex_pair ? "complex" : "real";
}

MaskMode mask_mode_from_string(std::string_view s) {
  if (s == "bounded") return MaskMode::bounded;
  if (s == "unbounded") return MaskMode::unbounded;
  throw ConfigError("model: unknown mask mode '" + std::string(s) + "'");
}

TstmKind tstm_kind_from_string(std::string_view s) {
  if (s == "complex") return TstmKind::complex_pair;
  if (s == "real") return TstmKind::shared_real;
  throw ConfigError("model: unknown tstm kind '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (channels.empty() || channels.size() % 2 != 0)
    throw ConfigError("model: channel list must be non-empty with even length");
  for (std::size_t c : channels)
    if (c == 0) throw ConfigError("model: channel counts must be positive");
  if (strides.size() != channels.size())
    throw ConfigError("model: stride list length must match channel list");
  for (auto [sf, st] : strides)
    if (sf == 0 || st == 0) throw ConfigError("model: strides must be positive");
  const std::size_t n_enc = n_encoder_layers();
  for (std::size_t j = 0; j < n_enc; ++j)
    if (strides[n_enc + j] != strides[n_enc - 1 - j])
      throw ConfigError("model: decoder strides must mirror encoder strides");
  if (kernel_freq % 2 == 0 || kernel_time % 2 == 0)
    throw ConfigError("model: kernels must be odd so padding can centre them");
  if (model_dim == 0 || head_count == 0 || model_dim % head_count != 0)
    throw ConfigError("model: model_dim must be a positive multiple of head_count");
  if (channels[n_enc - 1] != model_dim)
    throw ConfigError("model: bottleneck channel count must equal model_dim");
  if (ff_dim == 0) throw ConfigError("model: ff_dim must be positive");
}

std::string ModelConfig::canonical_text() const {
  std::ostringstream os;
  os << "preset=" << preset << '\n';
  os << "channels=";
  for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
  os << '\n';
  os << "strides=";
  for (std::size_t i = 0; i < strides.size(); ++i)
    os << (i ? "," : "") << strides[i].first << 'x' << strides[i].second;
  os << '\n';
  os << "kernel=" << kernel_freq << 'x' << kernel_time << '\n';
  os << "n_tstb=" << n_tstb << '\n';
  os << "model_dim=" << model_dim << '\n';
  os << "head_count=" << head_count << '\n';
  os << "ff_dim=" << ff_dim << '\n';
  os << "mask_mode=" << to_string(mask_mode) << '\n';
  os << "tstm_kind=" << to_string(tstm_kind) << '\n';
  return os.str();
}

namespace {

std::size_t parse_size(std::string_view v, const char* what) {
  std::size_t out = 0;
  if (v.empty()) throw ConfigError(std::string("model config: empty ") + what);
  for (char c : v) {
    if (c < '0' || c > '9')
      throw ConfigError(std::string("model config: bad integer in ") + what);
    out = out * 10 + static_cast<std::size_t>(c - '0');
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::pair<std::size_t, std::size_t> parse_pair(std::string_view v, const char* what) {
  const auto parts = split(v, 'x');
  if (parts.size() != 2) throw ConfigError(std::string("model config: expected AxB in ") + what);
  return {parse_size(parts[0], what), parse_size(parts[1], what)};
}

}  // namespace

ModelConfig ModelConfig::parse(std::string_view text) {
  ModelConfig cfg;
  cfg.channels.clear();
  cfg.strides.clear();
  bool seen[10] = {};
  for (std::string_view line : split(text, '\n')) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("model config: line without '=': " + std::string(line));
    const std::string_view key = line.substr(0, eq);
    const std::string_view val = line.substr(eq + 1);
    if (key == "preset") {
      cfg.preset = std::string(val);
      seen[0] = true;
    } else if (key == "channels") {
      for (auto p : split(val, ',')) cfg.channels.push_back(parse_size(p, "channels"));
      seen[1] = true;
    } else if (key == "strides") {
      for (auto p : split(val, ',')) cfg.strides.push_back(parse_pair(p, "strides"));
      seen[2] = true;
    } else if (key == "kernel") {
      auto [kf, kt] = parse_pair(val, "kernel");
      cfg.kernel_freq = kf;
      cfg.kernel_time = kt;
      seen[3] = true;
    } else if (key == "n_tstb") {
      cfg.n_tstb = parse_size(val, "n_tstb");
      seen[4] = true;
    } else if (key == "model_dim") {
      cfg.model_dim = parse_size(val, "model_dim");
      seen[5] = true;
    } else if (key == "head_count") {
      cfg.head_count = parse_size(val, "head_count");
      seen[6] = true;
    } else if (key == "ff_dim") {
      cfg.ff_dim = parse_size(val, "ff_dim");
      seen[7] = true;
    } else if (key == "mask_mode") {
      cfg.mask_mode = mask_mode_from_string(val);
      seen[8] = true;
    } else if (key == "tstm_kind") {
      cfg.tstm_kind = tstm_kind_from_string(val);
      seen[9] = true;
    } else {
      throw ConfigError("model config: unknown key '" + std::string(key) + "'");
    }
  }
  for (bool s : seen)
    if (!s) throw ConfigError("model config: missing required key");
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.preset = "tiny";
  cfg.channels = {8, 16, 16, 8};
  cfg.strides = {{2, 2}, {2, 2}, {2, 2}, {2, 2}};
  cfg.n_tstb = 1;
  cfg.model_dim = 16;
  cfg.head_count = 2;
  cfg.ff_dim = 64;
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::paper_scale() {
  ModelConfig cfg;
  cfg.preset = "paper";
  cfg.channels = {45, 90, 90, 90, 90, 90, 90, 90, 45, 1};
  cfg.strides = {{2, 2}, {2, 2}, {2, 2}, {2, 2}, {2, 1},
                 {2, 1}, {2, 2}, {2, 2}, {2, 2}, {2, 2}};
  cfg.n_tstb = 6;
  cfg.model_dim = 90;
  cfg.head_count = 6;
  cfg.ff_dim = 360;
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::preset_by_name(std::string_view name) {
  if (name == "tiny") return tiny();
  if (name == "paper") return paper_scale();
  throw ConfigError("model: unknown preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Registry

std::size_t DenoiserModel::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

ParamTensor& DenoiserModel::find(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw Error("model: no parameter named '" + std::string(name) + "'");
}

const ParamTensor& DenoiserModel::find(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw Error("model: no parameter named '" + std::string(name) + "'");
}

void DenoiserModel::build_registry() {
  config_.validate();
  params_.clear();
  fan_in_.clear();

  const std::size_t kh = config_.kernel_freq;
  const std::size_t kt = config_.kernel_time;
  const std::size_t n_enc = config_.n_encoder_layers();
  const std::size_t d = config_.model_dim;
  const std::size_t ff = config_.ff_dim;

  auto add = [&](std::string name, std::vector<std::size_t> shape, std::size_t fan) {
    ParamTensor p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.data.assign(p.numel(), 0.0f);
    params_.push_back(std::move(p));
    fan_in_.push_back(fan);
  };

  auto add_norm = [&](const std::string& stem, std::size_t c) {
    add(stem + ".norm.re.g", {c}, kInitOne);
    add(stem + ".norm.re.b", {c}, kInitZero);
    add(stem + ".norm.im.g", {c}, kInitOne);
    add(stem + ".norm.im.b", {c}, kInitZero);
  };

  // Encoder: complex conv + per-part channel norm.
  for (std::size_t i = 0; i < n_enc; ++i) {
    const std::size_t ci = i == 0 ? 1 : config_.channels[i - 1];
    const std::size_t co = config_.channels[i];
    const std::string stem = layer_name("enc", i);
    const std::size_t fan = 2 * ci * kh * kt;  // both weight parts feed each output
    add(stem + ".wr", {co, ci, kh, kt}, fan);
    add(stem + ".wi", {co, ci, kh, kt}, fan);
    add(stem + ".br", {co}, kInitZero);
    add(stem + ".bi", {co}, kInitZero);
    add_norm(stem, co);
  }

  // Bottleneck TSTM stacks: a pair of independent real stacks in the complex
  // configuration, a single shared stack in the real configuration.
  std::vector<const char*> stacks;
  if (config_.tstm_kind == TstmKind::complex_pair)
    stacks = {"r", "i"};
  else
    stacks = {"s"};
  for (const char* stack : stacks)
    for (std::size_t b = 0; b < config_.n_tstb; ++b)
      for (const char* stage : {"f", "t"}) {
        std::ostringstream stem;
        stem << "tstm." << stack << ".blk" << b << '.' << stage;
        const std::string s = stem.str();
        add(s + ".wq", {d, d}, d);
        add(s + ".bq", {d}, kInitZero);
        add(s + ".wk", {d, d}, d);
        add(s + ".bk", {d}, kInitZero);
        add(s + ".wv", {d, d}, d);
        add(s + ".bv", {d}, kInitZero);
        add(s + ".wo", {d, d}, d);
        add(s + ".bo", {d}, kInitZero);
        add(s + ".ln1.g", {d}, kInitOne);
        add(s + ".ln1.b", {d}, kInitZero);
        add(s + ".ff.w1", {d, ff}, d);
        add(s + ".ff.b1", {ff}, kInitZero);
        add(s + ".ff.w2", {ff, d}, ff);
        add(s + ".ff.b2", {d}, kInitZero);
        add(s + ".ln2.g", {d}, kInitOne);
        add(s + ".ln2.b", {d}, kInitZero);
      }

  // Decoder: complex transposed conv; the layer that emits the mask stays raw
  // (no norm, no activation).
  for (std::size_t j = 0; j < n_enc; ++j) {
    const std::size_t prev = j == 0 ? config_.channels[n_enc - 1] : config_.channels[n_enc + j - 1];
    const std::size_t skip = config_.channels[n_enc - 1 - j];
    const std::size_t ci = prev + skip;
    const std::size_t co = config_.channels[n_enc + j];
    const std::string stem = layer_name("dec", j);
    const std::size_t fan = 2 * ci * kh * kt;
    add(stem + ".wr", {ci, co, kh, kt}, fan);
    add(stem + ".wi", {ci, co, kh, kt}, fan);
    add(stem + ".br", {co}, kInitZero);
    add(stem + ".bi", {co}, kInitZero);
    const bool is_mask_layer = (j == n_enc - 1) && !config_.needs_mask_projection();
    if (!is_mask_layer) add_norm(stem, co);
  }

  if (config_.needs_mask_projection()) {
    const std::size_t ci = config_.channels.back();
    const std::size_t fan = 2 * ci;
    add("mask.wr", {1, ci, 1, 1}, fan);
    add("mask.wi", {1, ci, 1, 1}, fan);
    add("mask.br", {1}, kInitZero);
    add("mask.bi", {1}, kInitZero);
  }
}

void DenoiserModel::init_params(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const std::size_t fan = fan_in_[i];
    if (fan == kInitZero) {
      std::fill(p.data.begin(), p.data.end(), 0.0f);
    } else if (fan == kInitOne) {
      std::fill(p.data.begin(), p.data.end(), 1.0f);
    } else {
      const double bound = std::sqrt(1.0 / static_cast<double>(fan));
      for (auto& v : p.data) v = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
}

void DenoiserModel::zero_params() {
  for (auto& p : params_) std::fill(p.data.begin(), p.data.end(), 0.0f);
}

void DenoiserModel::check_finite() const {
  for (const auto& p : params_)
    for (float v : p.data)
      if (!std::isfinite(v)) throw DataError("model: non-finite values in '" + p.name + "'");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'O', 'N', 'T', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError(std::string("model file: truncated reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_block(std::ostream& os, const std::vector<float>& data) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts write the raw buffer; this is the only supported
  // byte order for model files.
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * 4));
}

void read_f32_block(std::istream& is, std::vector<float>& data, const std::string& name) {
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
  if (!is) throw DataError("model file: truncated payload for tensor '" + name + "'");
}

}  // namespace

void save_model(const DenoiserModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("model file: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const std::string cfg = model.config().canonical_text();
  write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  write_u32(os, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<std::uint32_t>(p.shape.size()));
    for (std::size_t e : p.shape) write_u32(os, static_cast<std::uint32_t>(e));
    write_f32_block(os, p.data);
  }
  if (!os) throw DataError("model file: write failed for '" + path + "'");
}

DenoiserModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("model file: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("model file: bad magic in '" + path + "'");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw DataError("model file: unsupported format version " + std::to_string(version));
  const std::uint32_t cfg_len = read_u32(is, "config length");
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw DataError("model file: truncated config block");
  DenoiserModel model(ModelConfig::parse(cfg_text));

  const std::uint32_t count = read_u32(is, "tensor count");
  if (count != model.params().size())
    throw DataError("model file: tensor count mismatch (" + std::to_string(count) + " stored, " +
                    std::to_string(model.params().size()) + " expected)");
  for (auto& p : model.params()) {
    const std::uint32_t name_len = read_u32(is, "tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("model file: truncated tensor name");
    if (name != p.name)
      throw DataError("model file: expected tensor '" + p.name + "', found '" + name + "'");
    const std::uint32_t rank = read_u32(is, "tensor rank");
    if (rank != p.shape.size())
      throw DataError("model file: rank mismatch for tensor '" + p.name + "'");
    for (std::size_t d = 0; d < rank; ++d) {
      const std::uint32_t e = read_u32(is, "tensor extent");
      if (e != p.shape[d])
        throw DataError("model file: shape mismatch for tensor '" + p.name + "'");
    }
    read_f32_block(is, p.data, p.name);
  }
  is.peek();
  if (!is.eof()) throw DataError("model file: trailing bytes after last tensor");
  model.check_finite();
  return model;
}

}  // namespace ont
