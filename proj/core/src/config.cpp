#include "ont/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ont/error.hpp"
#include "ont/synth.hpp"

namespace ont {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' needs true/false, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(parse_double(key, part));
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' needs at least one number");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::resolve_model() {
  ModelConfig m = ModelConfig::preset_by_name(model_preset);
  if (model_n_tstb != 0) m.n_tstb = model_n_tstb;
  if (!model_tstm.empty()) m.tstm_kind = tstm_kind_from_string(model_tstm);
  if (!model_mask.empty()) m.mask_mode = mask_mode_from_string(model_mask);
  train.model = std::move(m);
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream stream(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(stream, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    try {
      if (key == "data.manifest") cfg.data.manifest = value;
      else if (key == "data.sample_rate") cfg.data.sample_rate_hz = static_cast<int>(parse_u64(key, value));
      else if (key == "data.clips") cfg.data.clips = parse_size(key, value);
      else if (key == "data.duration_ms") cfg.data.duration_ms = parse_double(key, value);
      else if (key == "data.snr_db") cfg.data.snr_db = parse_double_list(key, value);
      else if (key == "data.train_fraction") cfg.data.train_fraction = parse_double(key, value);
      else if (key == "data.kind") { synth_kind_from_string(value); cfg.data.kind = value; }
      else if (key == "data.noisy2") cfg.data.noisy2 = parse_bool(key, value);
      else if (key == "data.extra_noise") cfg.data.extra_noise = parse_bool(key, value);
      else if (key == "data.seed") cfg.data.seed = parse_u64(key, value);
      else if (key == "train.strategy") cfg.train.strategy = strategy_from_string(value);
      else if (key == "train.epochs") cfg.train.epochs = parse_size(key, value);
      else if (key == "train.batch_size") cfg.train.batch_size = parse_size(key, value);
      else if (key == "train.lr") cfg.train.learning_rate = parse_double(key, value);
      else if (key == "train.lr_decay_factor") cfg.train.lr_decay_factor = parse_double(key, value);
      else if (key == "train.lr_decay_interval") cfg.train.lr_decay_interval_epochs = parse_size(key, value);
      else if (key == "train.loss_alpha") cfg.train.loss.alpha = parse_double(key, value);
      else if (key == "train.loss_beta") cfg.train.loss.beta = parse_double(key, value);
      else if (key == "train.gamma") cfg.train.loss.gamma = parse_double(key, value);
      else if (key == "train.nernt_snr_lo") cfg.train.nernt_snr_lo_db = parse_double(key, value);
      else if (key == "train.nernt_snr_hi") cfg.train.nernt_snr_hi_db = parse_double(key, value);
      else if (key == "train.seed") cfg.train.seed = parse_u64(key, value);
      else if (key == "train.resume") cfg.train.resume = value;
      else if (key == "stft.sample_rate") cfg.train.stft.sample_rate_hz = static_cast<int>(parse_u64(key, value));
      else if (key == "stft.window_ms") cfg.train.stft.window_ms = parse_double(key, value);
      else if (key == "stft.hop_ms") cfg.train.stft.hop_ms = parse_double(key, value);
      else if (key == "stft.fft_len") cfg.train.stft.fft_len = parse_size(key, value);
      else if (key == "subsample.k") cfg.train.subsample.k = static_cast<int>(parse_u64(key, value));
      else if (key == "subsample.mode") cfg.train.subsample.mode = subsample_mode_from_string(value);
      else if (key == "model.preset") { ModelConfig::preset_by_name(value); cfg.model_preset = value; }
      else if (key == "model.n_tstb") cfg.model_n_tstb = parse_size(key, value);
      else if (key == "model.tstm") { if (!value.empty()) tstm_kind_from_string(value); cfg.model_tstm = value; }
      else if (key == "model.mask") { if (!value.empty()) mask_mode_from_string(value); cfg.model_mask = value; }
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("config: key '" + key + "': " + e.what());
    }
  }
  cfg.resolve_model();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

std::string run_config_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# Dataset\n";
  out << "data.manifest = " << cfg.data.manifest << '\n';
  out << "data.sample_rate = " << cfg.data.sample_rate_hz << '\n';
  out << "data.clips = " << cfg.data.clips << '\n';
  out << "data.duration_ms = " << fmt(cfg.data.duration_ms) << '\n';
  out << "data.snr_db = ";
  for (std::size_t i = 0; i < cfg.data.snr_db.size(); ++i)
    out << (i ? "," : "") << fmt(cfg.data.snr_db[i]);
  out << '\n';
  out << "data.train_fraction = " << fmt(cfg.data.train_fraction) << '\n';
  out << "data.kind = " << cfg.data.kind << '\n';
  out << "data.noisy2 = " << (cfg.data.noisy2 ? "true" : "false") << '\n';
  out << "data.extra_noise = " << (cfg.data.extra_noise ? "true" : "false") << '\n';
  out << "data.seed = " << cfg.data.seed << '\n';
  out << "\n# Training\n";
  out << "train.strategy = " << to_string(cfg.train.strategy) << '\n';
  out << "train.epochs = " << cfg.train.epochs << '\n';
  out << "train.batch_size = " << cfg.train.batch_size << '\n';
  out << "train.lr = " << fmt(cfg.train.learning_rate) << '\n';
  out << "train.lr_decay_factor = " << fmt(cfg.train.lr_decay_factor) << '\n';
  out << "train.lr_decay_interval = " << cfg.train.lr_decay_interval_epochs << '\n';
  out << "train.loss_alpha = " << fmt(cfg.train.loss.alpha) << '\n';
  out << "train.loss_beta = " << fmt(cfg.train.loss.beta) << '\n';
  out << "train.gamma = " << fmt(cfg.train.loss.gamma) << '\n';
  out << "train.nernt_snr_lo = " << fmt(cfg.train.nernt_snr_lo_db) << '\n';
  out << "train.nernt_snr_hi = " << fmt(cfg.train.nernt_snr_hi_db) << '\n';
  out << "train.seed = " << cfg.train.seed << '\n';
  out << "train.resume = " << cfg.train.resume << '\n';
  out << "\n# Analysis/synthesis geometry\n";
  out << "stft.sample_rate = " << cfg.train.stft.sample_rate_hz << "  # 0 adopts the corpus rate\n";
  out << "stft.window_ms = " << fmt(cfg.train.stft.window_ms) << '\n';
  out << "stft.hop_ms = " << fmt(cfg.train.stft.hop_ms) << '\n';
  out << "stft.fft_len = " << cfg.train.stft.fft_len << "  # 0 picks the next power of two\n";
  out << "\n# Pair sub-sampling\n";
  out << "subsample.k = " << cfg.train.subsample.k << '\n';
  out << "subsample.mode = " << to_string(cfg.train.subsample.mode) << '\n';
  out << "\n# Model\n";
  out << "model.preset = " << cfg.model_preset << '\n';
  out << "model.n_tstb = " << cfg.model_n_tstb << "  # 0 keeps the preset default\n";
  out << "model.tstm = " << cfg.model_tstm << "  # empty keeps the preset default\n";
  out << "model.mask = " << cfg.model_mask << "  # empty keeps the preset default\n";
  return out.str();
}

}  // namespace ont
