#include "ont/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "ont/error.hpp"
#include "ont/network.hpp"
#include "ont/rng.hpp"
#include "ont/signal_ops.hpp"
#include "ont/stft.hpp"
#include "ont/subsample.hpp"
#include "ont/synth.hpp"
#include "ont/wav_io.hpp"

namespace ont {

namespace fs = std::filesystem;

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void echo_config(const RunConfig& cfg, const fs::path& out_dir) {
  write_text_file(out_dir / "config.txt", run_config_text(cfg));
}

std::string clip_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%03zu", i);
  return buf;
}

StftConfig resolved_stft(const RunConfig& cfg, int fallback_rate) {
  StftConfig stft = cfg.train.stft;
  if (stft.sample_rate_hz == 0) stft.sample_rate_hz = fallback_rate;
  stft.validate();
  return stft;
}

}  // namespace

DatasetManifest cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  const DataConfig& d = cfg.data;
  if (d.clips == 0) throw ConfigError("synth: data.clips must be positive");
  if (d.duration_ms <= 0.0) throw ConfigError("synth: data.duration_ms must be positive");
  if (d.sample_rate_hz <= 0) throw ConfigError("synth: data.sample_rate must be positive");
  if (d.train_fraction < 0.0 || d.train_fraction > 1.0)
    throw ConfigError("synth: data.train_fraction must lie in [0, 1]");
  const SynthKind kind = synth_kind_from_string(d.kind);

  const fs::path root(out_dir);
  fs::create_directories(root / "clean");
  fs::create_directories(root / "noisy");
  if (d.noisy2) fs::create_directories(root / "noisy2");
  if (d.extra_noise) fs::create_directories(root / "extra_noise");

  const std::size_t n_train =
      std::min<std::size_t>(d.clips, static_cast<std::size_t>(std::llround(
                                         d.train_fraction * static_cast<double>(d.clips))));

  DatasetManifest manifest;
  manifest.sample_rate_hz = d.sample_rate_hz;
  for (std::size_t i = 0; i < d.clips; ++i) {
    const std::string id = clip_name(i);
    Rng pick(mix_seed(d.seed, i, 0xA1));
    SynthSpec spec;
    spec.kind = kind;
    spec.duration_s = d.duration_ms / 1000.0;
    spec.fundamental_hz = pick.uniform(110.0, 320.0);
    spec.seed = mix_seed(d.seed, i, 1);
    const Waveform clean = synth_clean(spec, d.sample_rate_hz);
    const double snr = d.snr_db[i % d.snr_db.size()];
    const Waveform noise =
        synth_white_noise(clean.size(), mix_seed(d.seed, i, 2), d.sample_rate_hz);
    const Waveform noisy = overlay_noise(clean, noise, snr);
    write_wav(clean, root / "clean" / (id + ".wav"));
    write_wav(noisy, root / "noisy" / (id + ".wav"));

    ManifestItem item;
    item.id = id;
    item.split = i < n_train ? "train" : "test";
    item.noisy = "noisy/" + id + ".wav";
    item.clean = "clean/" + id + ".wav";
    if (d.noisy2) {
      const Waveform noise2 =
          synth_white_noise(clean.size(), mix_seed(d.seed, i, 3), d.sample_rate_hz);
      write_wav(overlay_noise(clean, noise2, snr), root / "noisy2" / (id + ".wav"));
      item.noisy2 = "noisy2/" + id + ".wav";
    }
    if (d.extra_noise) {
      const Waveform extra =
          synth_white_noise(clean.size(), mix_seed(d.seed, i, 4), d.sample_rate_hz);
      write_wav(extra, root / "extra_noise" / (id + ".wav"));
      item.extra_noise = "extra_noise/" + id + ".wav";
    }
    manifest.items.push_back(std::move(item));
  }
  const fs::path mpath = root / "manifest.json";
  save_manifest(manifest, mpath.string());
  echo_config(cfg, root);
  return load_manifest(mpath.string());
}

TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.data.manifest.empty())
    throw ConfigError("train: data.manifest must name a dataset manifest");
  const DatasetManifest manifest = load_manifest(cfg.data.manifest);
  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);
  return train(manifest, cfg.train, out_dir);
}

void cmd_denoise(const std::string& model_path, const std::string& in_wav,
                 const std::string& out_wav, const RunConfig& cfg) {
  const DenoiserModel model = load_model(model_path);
  const Waveform input = read_wav(in_wav);
  const StftConfig stft_cfg = resolved_stft(cfg, input.sample_rate_hz);
  const Waveform output = cfg.train.verify_mode
                              ? denoise_waveform_t<double>(model, input, stft_cfg)
                              : denoise_waveform(model, input, stft_cfg);
  write_wav(output, out_wav);
}

MetricsReport cmd_eval(const std::string& model_path, const RunConfig& cfg,
                       const std::string& out_dir, const std::string& split) {
  if (cfg.data.manifest.empty())
    throw ConfigError("eval: data.manifest must name a dataset manifest");
  const DenoiserModel model = load_model(model_path);
  const DatasetManifest manifest = load_manifest(cfg.data.manifest);

  EvalConfig ec;
  ec.stft = cfg.train.stft;
  ec.strategy_label = to_string(cfg.train.strategy);
  ec.split = split;
  ec.include_baseline = true;
  ec.verify_mode = cfg.train.verify_mode;
  const MetricsReport report = evaluate(model, manifest, ec);

  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);
  report.write_csv((fs::path(out_dir) / "metrics.csv").string());
  report.write_json((fs::path(out_dir) / "metrics.json").string());
  return report;
}

// ---------------------------------------------------------------------------
// Ablation sweeps

namespace {

struct SweepCell {
  std::string label;
  RunConfig cfg;  // base config with the cell's value applied
};

std::vector<SweepCell> sweep_cells(const RunConfig& base, const std::string& sweep) {
  std::vector<SweepCell> cells;
  if (sweep == "k") {
    for (int k : {2, 4, 6}) {
      SweepCell c{"k" + std::to_string(k), base};
      c.cfg.train.subsample.k = k;
      cells.push_back(std::move(c));
    }
  } else if (sweep == "gamma") {
    for (int g : {0, 1, 2, 4, 10, 20, 40}) {
      SweepCell c{"gamma" + std::to_string(g), base};
      c.cfg.train.loss.gamma = static_cast<double>(g);
      cells.push_back(std::move(c));
    }
  } else if (sweep == "tstb") {
    // Counts {4,6,8} are the paper-scale sweep; other presets scale them by
    // preset_default/6 (so the relative sizes match), deduplicated.
    const double base_count = static_cast<double>(base.train.model.n_tstb);
    std::vector<std::size_t> counts;
    for (int c : {4, 6, 8}) {
      const auto scaled = static_cast<std::size_t>(
          std::max<long long>(1, std::llround(base_count * c / 6.0)));
      if (std::find(counts.begin(), counts.end(), scaled) == counts.end())
        counts.push_back(scaled);
    }
    for (std::size_t count : counts)
      for (const char* kindname : {"real", "complex"}) {
        SweepCell c{std::to_string(count) + kindname, base};
        c.cfg.train.model.n_tstb = count;
        c.cfg.train.model.tstm_kind = tstm_kind_from_string(kindname);
        cells.push_back(std::move(c));
      }
  } else if (sweep == "sampler-mode") {
    for (const char* mode : {"fixed", "random"}) {
      SweepCell c{mode, base};
      c.cfg.train.subsample.mode = subsample_mode_from_string(mode);
      cells.push_back(std::move(c));
    }
  } else {
    throw ConfigError("ablate: unknown sweep '" + sweep +
                      "' (expected k, gamma, tstb, or sampler-mode)");
  }
  return cells;
}

std::string condition_label(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "snr%g", snr);
  return buf;
}

double mean_model_snr(const MetricsReport& report, const std::string& strategy) {
  const auto group = report.aggregates.find(strategy);
  if (group == report.aggregates.end()) throw Error("ablate: missing aggregate group");
  return group->second.at("snr_db").mean;
}

void write_ablate_table(const fs::path& path, const std::vector<std::string>& conditions,
                        const std::vector<std::string>& cells,
                        const std::map<std::pair<std::string, std::string>, double>& table) {
  std::ostringstream out;
  out << "condition";
  for (const auto& c : cells) out << ',' << c;
  out << '\n';
  for (const auto& cond : conditions) {
    out << cond;
    for (const auto& cell : cells) {
      out << ',';
      const auto it = table.find({cond, cell});
      if (it != table.end()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", it->second);
        out << buf;
      }
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace

void cmd_ablate(const RunConfig& cfg, const std::string& sweep, std::size_t repetitions,
                const std::string& out_dir) {
  if (repetitions == 0) throw ConfigError("ablate: repetitions must be positive");
  const std::vector<SweepCell> cells = sweep_cells(cfg, sweep);
  const fs::path root(out_dir);
  fs::create_directories(root);
  echo_config(cfg, root);

  std::ofstream runs(root / "ablate_runs.csv", std::ios::trunc);
  if (!runs) throw DataError("ablate: cannot open runs CSV");
  runs << "condition,cell,rep,seed,mean_snr_db\n" << std::flush;

  std::vector<std::string> condition_labels;
  std::vector<std::string> cell_labels;
  for (const auto& c : cells) cell_labels.push_back(c.label);
  std::map<std::pair<std::string, std::string>, double> table;

  for (std::size_t ci = 0; ci < cfg.data.snr_db.size(); ++ci) {
    const double snr = cfg.data.snr_db[ci];
    const std::string cond = condition_label(snr);
    condition_labels.push_back(cond);

    RunConfig synth_cfg = cfg;
    synth_cfg.data.snr_db = {snr};
    synth_cfg.data.seed = mix_seed(cfg.data.seed, 0xAB1A7E, ci);
    const fs::path corpus_dir = root / ("corpus_" + cond);
    cmd_synth(synth_cfg, corpus_dir.string());
    const std::string manifest_path = (corpus_dir / "manifest.json").string();

    for (const auto& cell : cells) {
      double snr_sum = 0.0;
      for (std::size_t rep = 0; rep < repetitions; ++rep) {
        RunConfig run_cfg = cell.cfg;
        run_cfg.data.manifest = manifest_path;
        run_cfg.train.seed = cfg.train.seed + rep;
        const fs::path run_dir = root / ("run_" + cond + "_" + cell.label + "_rep" +
                                         std::to_string(rep));
        const TrainResult result = cmd_train(run_cfg, run_dir.string());
        const MetricsReport report =
            cmd_eval(result.model_path, run_cfg, (run_dir / "eval").string());
        const double mean_snr = mean_model_snr(report, to_string(run_cfg.train.strategy));
        snr_sum += mean_snr;
        runs << cond << ',' << cell.label << ',' << rep << ',' << run_cfg.train.seed << ','
             << mean_snr << '\n'
             << std::flush;
      }
      table[{cond, cell.label}] = snr_sum / static_cast<double>(repetitions);
      write_ablate_table(root / "ablate.csv", condition_labels, cell_labels, table);
    }
  }
}

void cmd_subsample(const std::string& in_wav, int k, const std::string& mode,
                   std::uint64_t seed, const std::string& out_prefix) {
  const Waveform input = read_wav(in_wav);
  SubsampleConfig sc;
  sc.k = k;
  sc.mode = subsample_mode_from_string(mode);
  sc.seed = seed;
  const SubsamplePair pair = subsample_pair(input, sc);
  const fs::path parent = fs::path(out_prefix).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_wav(pair.s1, out_prefix + "_s1.wav");
  write_wav(pair.s2, out_prefix + "_s2.wav");

  std::ostringstream map_text;
  map_text << "window,s1_index,s2_index\n";
  for (std::size_t w = 0; w < pair.map.n_windows(); ++w) {
    const auto [a, b] = pair.map.offsets[w];
    map_text << w << ',' << (w * static_cast<std::size_t>(pair.map.k) + static_cast<std::size_t>(a))
             << ',' << (w * static_cast<std::size_t>(pair.map.k) + static_cast<std::size_t>(b))
             << '\n';
  }
  write_text_file(out_prefix + "_map.txt", map_text.str());
}

void cmd_spectrogram(const std::string& in_wav, const std::string& out_pgm,
                     const RunConfig& cfg) {
  const Waveform input = read_wav(in_wav);
  const StftConfig stft_cfg = resolved_stft(cfg, input.sample_rate_hz);
  const ComplexSpectrogram spec = stft(input, stft_cfg);

  // Window-sum-normalized magnitude, displayed over an 80 dB range with the
  // floor pinned at -80 dBFS so silence maps to a uniform zero image.
  const std::vector<double> window = hamming_window(stft_cfg.window_samples());
  double wsum = 0.0;
  for (double v : window) wsum += v;

  std::ostringstream out;
  out << "P2\n" << spec.n_frames << ' ' << spec.n_bins << "\n255\n";
  for (std::size_t row = 0; row < spec.n_bins; ++row) {
    const std::size_t f = spec.n_bins - 1 - row;  // row 0 = highest bin
    std::size_t line_len = 0;
    for (std::size_t t = 0; t < spec.n_frames; ++t) {
      const double mag = std::hypot(spec.re_at(f, t), spec.im_at(f, t)) / wsum;
      const double db = 20.0 * std::log10(std::max(mag, 1e-4));
      const int pixel =
          static_cast<int>(std::clamp(std::llround((db + 80.0) / 80.0 * 255.0), 0LL, 255LL));
      char buf[8];
      const int n = std::snprintf(buf, sizeof(buf), "%d", pixel);
      if (line_len + static_cast<std::size_t>(n) + 1 > 70) {
        out << '\n';
        line_len = 0;
      } else if (line_len > 0) {
        out << ' ';
        ++line_len;
      }
      out << buf;
      line_len += static_cast<std::size_t>(n);
    }
    out << '\n';
  }
  write_text_file(out_pgm, out.str());
}

double cmd_gradcheck(const RunConfig& cfg, std::size_t n_coords, std::uint64_t seed) {
  if (n_coords == 0) throw ConfigError("gradcheck: need at least one coordinate");
  DenoiserModel model(cfg.train.model);
  model.init_params(seed);

  const int rate = cfg.train.stft.sample_rate_hz > 0 ? cfg.train.stft.sample_rate_hz
                                                     : cfg.data.sample_rate_hz;
  StftConfig stft_cfg = cfg.train.stft;
  stft_cfg.sample_rate_hz = rate;
  stft_cfg.validate();

  // Short clip that still leaves the stride pyramid enough frames after
  // sub-sampling: window + 16 hops, scaled back up by k.
  const std::size_t k = static_cast<std::size_t>(cfg.train.subsample.k);
  const std::size_t sub_len = stft_cfg.window_samples() + 16 * stft_cfg.hop_samples();
  SynthSpec spec;
  spec.duration_s = static_cast<double>(sub_len * k + k) / rate;
  spec.seed = mix_seed(seed, 0xC11F);
  const Waveform clean = synth_clean(spec, rate);
  const Waveform x = overlay_noise(
      clean, synth_white_noise(clean.size(), mix_seed(seed, 0x4015E), rate), 5.0);

  TrainConfig tc = cfg.train;
  const std::uint64_t pair_seed = mix_seed(seed, 0x9A12);
  auto grad_acc = [&] {
    std::vector<std::vector<double>> acc;
    for (const auto& p : model.params()) acc.emplace_back(p.numel(), 0.0);
    return acc;
  }();
  ont_step_grads<double>(model, x, tc, stft_cfg, pair_seed, grad_acc);

  // Freeze the sub-sampled pair and the stop-gradient branch for the
  // finite-difference evaluations.
  SubsampleConfig sc = tc.subsample;
  sc.seed = pair_seed;
  const SubsamplePair pair = subsample_pair(x, sc);
  Waveform g1, g2;
  if (tc.loss.gamma > 0.0) {
    const Waveform g = denoise_waveform_t<double>(model, x, stft_cfg);
    auto split = subsample_apply(pair.map, g);
    g1 = split.first;
    g2 = split.second;
  }

  const std::size_t total = model.scalar_count();
  Rng pick_rng(mix_seed(seed, 0xFD));
  double max_rel = 0.0;
  DenoiserModel probe = model;
  auto loss_at = [&] {
    return ont_loss_value<double>(probe, pair.s1, pair.s2, g1, g2, tc.loss, stft_cfg);
  };
  for (std::size_t c = 0; c < n_coords; ++c) {
    const std::size_t flat = pick_rng.below(total);
    std::size_t ti = 0, off = flat;
    while (off >= model.params()[ti].numel()) {
      off -= model.params()[ti].numel();
      ++ti;
    }
    const float original = probe.params()[ti].data[off];
    const double analytic = grad_acc[ti][off];
    // No single step size is valid for every coordinate. A quotient whose
    // step straddles an activation kink (leaky-relu) does not estimate the
    // local derivative, which only a smaller step avoids; a coordinate whose
    // derivative is tiny relative to the loss value sits on the
    // double-precision roundoff floor, which only a larger step escapes.
    // Take the best agreement across a step ladder; genuine gradient bugs
    // stay wrong at every step size.
    double rel = 1.0;
    for (double h0 : {4e-5, 1e-5, 2.5e-6, 6.25e-7}) {
      const double h = h0 * std::max(1.0, std::abs(static_cast<double>(original)));
      const float plus = static_cast<float>(original + h);
      const float minus = static_cast<float>(original - h);
      probe.params()[ti].data[off] = plus;
      const double f_plus = loss_at();
      probe.params()[ti].data[off] = minus;
      const double f_minus = loss_at();
      probe.params()[ti].data[off] = original;
      const double denom = static_cast<double>(plus) - static_cast<double>(minus);
      const double fd = (f_plus - f_minus) / denom;
      rel = std::min(rel,
                     std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-5}));
      if (rel <= 1e-4) break;
    }
    max_rel = std::max(max_rel, rel);
  }

  const bool pass = max_rel <= 1e-4;
  std::cout << "gradcheck: " << n_coords << " coordinates, max relative error " << max_rel
            << (pass ? " PASS" : " FAIL") << '\n';
  return max_rel;
}

}  // namespace ont
