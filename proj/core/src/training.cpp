#include "ont/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ont/network.hpp"
#include "ont/rng.hpp"
#include "ont/signal_ops.hpp"
#include "ont/synth.hpp"
#include "ont/wav_io.hpp"

namespace ont {

namespace fs = std::filesystem;
using nlohmann::json;

Strategy strategy_from_string(const std::string& s) {
  if (s == "ont") return Strategy::ont;
  if (s == "nct") return Strategy::nct;
  if (s == "nnt") return Strategy::nnt;
  if (s == "nernt") return Strategy::nernt;
  throw ConfigError("training: unknown strategy '" + s + "'");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::ont: return "ont";
    case Strategy::nct: return "nct";
    case Strategy::nnt: return "nnt";
    case Strategy::nernt: return "nernt";
  }
  throw Error("training: bad strategy value");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("training: batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("training: learning_rate must be positive");
  if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0)
    throw ConfigError("training: lr_decay_factor must lie in (0, 1]");
  if (lr_decay_interval_epochs == 0)
    throw ConfigError("training: lr_decay_interval_epochs must be positive");
  if (subsample.k < 2) throw ConfigError("training: sub-sampling interval k must be at least 2");
  if (nernt_snr_lo_db > nernt_snr_hi_db)
    throw ConfigError("training: nernt SNR range is inverted");
  loss.validate();
  model.validate();
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate_manifest_for(const DatasetManifest& manifest, Strategy strategy,
                           const std::string& split) {
  const auto items = manifest.split_items(split);
  if (items.empty()) throw DataError("manifest: no items in split '" + split + "'");
  for (const auto& it : items) {
    if (it.noisy.empty())
      throw DataError("manifest: item '" + it.id + "' is missing field 'noisy'");
    if (strategy == Strategy::nct && it.clean.empty())
      throw DataError("manifest: item '" + it.id + "' is missing field 'clean' (required by nct)");
    if (strategy == Strategy::nnt && it.noisy2.empty())
      throw DataError("manifest: item '" + it.id + "' is missing field 'noisy2' (required by nnt)");
    if (strategy == Strategy::nernt && it.extra_noise.empty())
      throw DataError("manifest: item '" + it.id +
                      "' is missing field 'extra_noise' (required by nernt)");
  }
}

namespace {

template <class R>
void add_param_grads(const ModelBinding<R>& pb, std::vector<std::vector<double>>& acc) {
  if (acc.size() != pb.vars.size()) throw Error("training: gradient accumulator misaligned");
  for (std::size_t i = 0; i < pb.vars.size(); ++i) {
    const auto& g = pb.vars[i].grad();
    if (acc[i].size() != g.size()) throw Error("training: gradient accumulator misaligned");
    for (std::size_t j = 0; j < g.size(); ++j) acc[i][j] += static_cast<double>(g[j]);
  }
}

std::vector<std::vector<double>> make_grad_acc(const DenoiserModel& model) {
  std::vector<std::vector<double>> acc;
  acc.reserve(model.params().size());
  for (const auto& p : model.params()) acc.emplace_back(p.numel(), 0.0);
  return acc;
}

void zero_grad_acc(std::vector<std::vector<double>>& acc) {
  for (auto& t : acc) std::fill(t.begin(), t.end(), 0.0);
}

template <class R>
Var<R> wave_leaf(Tape<R>& tape, const Waveform& w, const char* op) {
  std::vector<R> data(w.samples.begin(), w.samples.end());
  return tape.leaf({w.size()}, std::move(data), op);
}

// Shared tail of every step: run the denoiser on an input leaf, build the
// component losses against a target leaf, and return the assembled nodes.
template <class R>
struct BasicLossNodes {
  Var<R> est;
  Var<R> l_time, l_freq, l_wsdr, basic;
};

template <class R>
BasicLossNodes<R> build_basic_loss(const DenoiserModel& model, const ModelBinding<R>& pb,
                                   Var<R> input, Var<R> target, const LossWeights& w,
                                   const StftConfig& stft_cfg) {
  Var<R> in_spec = stft_frames(input, stft_cfg);
  Var<R> out_spec = model_forward(model, pb, in_spec);
  Var<R> est = istft_wola(out_spec, stft_cfg, input.numel());
  Var<R> est_spec = stft_frames(est, stft_cfg);
  Var<R> target_spec = stft_frames(target, stft_cfg);

  BasicLossNodes<R> nodes;
  nodes.est = est;
  nodes.l_time = loss_time_t(target, est);
  nodes.l_freq = loss_freq_t(target_spec, est_spec);
  nodes.l_wsdr = loss_wsdr_t(input, target, est);
  Var<R> bracket = add(scale(nodes.l_freq, w.alpha), scale(nodes.l_time, 1.0 - w.alpha));
  nodes.basic = add(scale(bracket, w.beta), nodes.l_wsdr);
  return nodes;
}

template <class R>
[[noreturn]] void throw_divergence(const Tape<R>& tape) {
  const char* op = tape.first_non_finite();
  throw DataError(std::string("training: non-finite loss (first bad op: ") +
                  (op ? op : "unknown") + ")");
}

double scalar_value(const std::vector<float>& v) { return static_cast<double>(v[0]); }
double scalar_value(const std::vector<double>& v) { return v[0]; }

}  // namespace

template <class R>
StepLosses ont_step_grads(const DenoiserModel& model, const Waveform& x, const TrainConfig& cfg,
                          const StftConfig& stft_cfg, std::uint64_t pair_seed,
                          std::vector<std::vector<double>>& grad_acc) {
  const std::size_t s_len = x.size() / static_cast<std::size_t>(cfg.subsample.k);
  if (s_len < stft_cfg.window_samples())
    throw DataError("training: clip too short for sub-sampling at k=" +
                    std::to_string(cfg.subsample.k));

  SubsampleConfig sc = cfg.subsample;
  sc.seed = pair_seed;
  SubsamplePair pair = subsample_pair(x, sc);

  // The regularization term compares against the sub-sampled full-signal
  // output, computed without gradient flow (stop-gradient): the full pass
  // runs on its own tape and enters the training tape as constants.
  Waveform g_s1, g_s2;
  const bool with_reg = cfg.loss.gamma > 0.0;
  if (with_reg) {
    const Waveform g = denoise_waveform_t<R>(model, x, stft_cfg);
    auto split = subsample_apply(pair.map, g);
    g_s1 = std::move(split.first);
    g_s2 = std::move(split.second);
  }

  Tape<R> tape;
  Var<R> s1 = wave_leaf(tape, pair.s1, "s1");
  Var<R> s2 = wave_leaf(tape, pair.s2, "s2");
  ModelBinding<R> pb = bind_params(tape, model);
  BasicLossNodes<R> nodes = build_basic_loss(model, pb, s1, s2, cfg.loss, stft_cfg);

  Var<R> total = nodes.basic;
  double reg_value = 0.0;
  if (with_reg) {
    Var<R> g1 = wave_leaf(tape, g_s1, "g_s1");
    Var<R> g2 = wave_leaf(tape, g_s2, "g_s2");
    Var<R> reg = loss_reg_t(nodes.est, s2, g1, g2, cfg.loss);
    reg_value = scalar_value(reg.val());
    total = loss_total_t(nodes.basic, reg, cfg.loss);
  }

  StepLosses out;
  out.l_time = scalar_value(nodes.l_time.val());
  out.l_freq = scalar_value(nodes.l_freq.val());
  out.l_wsdr = scalar_value(nodes.l_wsdr.val());
  out.l_basic = scalar_value(nodes.basic.val());
  out.l_reg = reg_value;
  out.total = scalar_value(total.val());
  if (!std::isfinite(out.total)) throw_divergence(tape);

  tape.backward(total);
  add_param_grads(pb, grad_acc);
  return out;
}

template <class R>
StepLosses basic_step_grads(const DenoiserModel& model, const Waveform& input,
                            const Waveform& target, const LossWeights& weights,
                            const StftConfig& stft_cfg,
                            std::vector<std::vector<double>>& grad_acc) {
  if (input.size() != target.size())
    throw DataError("training: input/target length mismatch");
  if (input.size() < stft_cfg.window_samples())
    throw DataError("training: clip shorter than one analysis window");

  Tape<R> tape;
  Var<R> in = wave_leaf(tape, input, "input");
  Var<R> tg = wave_leaf(tape, target, "target");
  ModelBinding<R> pb = bind_params(tape, model);
  BasicLossNodes<R> nodes = build_basic_loss(model, pb, in, tg, weights, stft_cfg);

  StepLosses out;
  out.l_time = scalar_value(nodes.l_time.val());
  out.l_freq = scalar_value(nodes.l_freq.val());
  out.l_wsdr = scalar_value(nodes.l_wsdr.val());
  out.l_basic = scalar_value(nodes.basic.val());
  out.total = out.l_basic;
  if (!std::isfinite(out.total)) throw_divergence(tape);

  tape.backward(nodes.basic);
  add_param_grads(pb, grad_acc);
  return out;
}

template StepLosses ont_step_grads<float>(const DenoiserModel&, const Waveform&,
                                          const TrainConfig&, const StftConfig&, std::uint64_t,
                                          std::vector<std::vector<double>>&);
template StepLosses ont_step_grads<double>(const DenoiserModel&, const Waveform&,
                                           const TrainConfig&, const StftConfig&, std::uint64_t,
                                           std::vector<std::vector<double>>&);
template StepLosses basic_step_grads<float>(const DenoiserModel&, const Waveform&,
                                            const Waveform&, const LossWeights&,
                                            const StftConfig&,
                                            std::vector<std::vector<double>>&);
template StepLosses basic_step_grads<double>(const DenoiserModel&, const Waveform&,
                                             const Waveform&, const LossWeights&,
                                             const StftConfig&,
                                             std::vector<std::vector<double>>&);

template <class R>
double ont_loss_value(const DenoiserModel& model, const Waveform& s1, const Waveform& s2,
                      const Waveform& g_s1, const Waveform& g_s2, const LossWeights& weights,
                      const StftConfig& stft_cfg) {
  Tape<R> tape;
  Var<R> v1 = wave_leaf(tape, s1, "s1");
  Var<R> v2 = wave_leaf(tape, s2, "s2");
  ModelBinding<R> pb = bind_params(tape, model);
  BasicLossNodes<R> nodes = build_basic_loss(model, pb, v1, v2, weights, stft_cfg);
  if (weights.gamma <= 0.0) return scalar_value(nodes.basic.val());
  Var<R> g1 = wave_leaf(tape, g_s1, "g_s1");
  Var<R> g2 = wave_leaf(tape, g_s2, "g_s2");
  Var<R> reg = loss_reg_t(nodes.est, v2, g1, g2, weights);
  Var<R> total = loss_total_t(nodes.basic, reg, weights);
  return scalar_value(total.val());
}

template double ont_loss_value<float>(const DenoiserModel&, const Waveform&, const Waveform&,
                                      const Waveform&, const Waveform&, const LossWeights&,
                                      const StftConfig&);
template double ont_loss_value<double>(const DenoiserModel&, const Waveform&, const Waveform&,
                                       const Waveform&, const Waveform&, const LossWeights&,
                                       const StftConfig&);

Waveform nernt_input(const Waveform& noisy, const Waveform& extra_noise, double snr_lo_db,
                     double snr_hi_db, std::uint64_t seed) {
  Rng rng(seed);
  const double snr = rng.uniform(snr_lo_db, snr_hi_db);
  return overlay_noise(noisy, extra_noise, snr);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct LoadedClip {
  std::string id;
  Waveform noisy;
  Waveform aux;  // clean (nct), second noisy (nnt), or extra noise (nernt)
  bool has_aux = false;
};

std::vector<LoadedClip> load_training_clips(const DatasetManifest& manifest,
                                            const TrainConfig& cfg) {
  validate_manifest_for(manifest, cfg.strategy, "train");
  std::vector<LoadedClip> clips;
  for (const auto& item : manifest.split_items("train")) {
    LoadedClip c;
    c.id = item.id;
    c.noisy = read_wav(item.noisy);
    switch (cfg.strategy) {
      case Strategy::ont: break;
      case Strategy::nct:
        c.aux = read_wav(item.clean);
        c.has_aux = true;
        break;
      case Strategy::nnt:
        c.aux = read_wav(item.noisy2);
        c.has_aux = true;
        break;
      case Strategy::nernt:
        c.aux = read_wav(item.extra_noise);
        c.has_aux = true;
        break;
    }
    if (c.has_aux && c.aux.sample_rate_hz != c.noisy.sample_rate_hz)
      throw DataError("training: sample rate mismatch within item '" + c.id + "'");
    if ((cfg.strategy == Strategy::nct || cfg.strategy == Strategy::nnt) &&
        c.aux.size() != c.noisy.size())
      throw DataError("training: input/target length mismatch in item '" + c.id + "'");
    clips.push_back(std::move(c));
  }
  return clips;
}

template <class R>
TrainResult run_train(const DatasetManifest& manifest, const TrainConfig& cfg,
                      const std::string& out_dir) {
  std::vector<LoadedClip> clips = load_training_clips(manifest, cfg);

  StftConfig stft_cfg = cfg.stft;
  if (stft_cfg.sample_rate_hz == 0) stft_cfg.sample_rate_hz = clips.front().noisy.sample_rate_hz;
  stft_cfg.validate();
  for (const auto& c : clips)
    if (c.noisy.sample_rate_hz != stft_cfg.sample_rate_hz)
      throw DataError("training: clip '" + c.id + "' sample rate differs from the corpus rate");

  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("training: cannot open log '" + log_path + "'");

  DenoiserModel model(cfg.model);
  AdamState adam = AdamState::for_model(model);
  std::size_t start_epoch = 0;
  if (!cfg.resume.empty()) {
    model = load_model(cfg.resume + ".ontm");
    if (model.config().canonical_text() != cfg.model.canonical_text())
      throw ConfigError("training: resume checkpoint was produced by a different model config");
    adam = load_adam(cfg.resume + ".onts", model);
    start_epoch = adam.completed_epochs;
  } else {
    model.init_params(cfg.seed);
  }

  auto checkpoint = [&](const std::string& stem) {
    save_model(model, (fs::path(out_dir) / (stem + ".ontm")).string());
    save_adam(adam, (fs::path(out_dir) / (stem + ".onts")).string());
  };

  std::vector<std::vector<double>> grad_acc = make_grad_acc(model);
  std::size_t step_index = adam.step;
  double last_epoch_mean = 0.0;

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(cfg.learning_rate, cfg.lr_decay_factor,
                                  cfg.lr_decay_interval_epochs, epoch);

    std::vector<std::size_t> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x736875666665ULL, epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_loss_sum = 0.0;
    std::size_t epoch_clip_count = 0;

    std::size_t pos = 0;
    while (pos < order.size()) {
      // Batches group consecutive equal-length clips; padding is never used.
      std::size_t batch_end = pos + 1;
      while (batch_end < order.size() && batch_end - pos < cfg.batch_size &&
             clips[order[batch_end]].noisy.size() == clips[order[pos]].noisy.size())
        ++batch_end;

      zero_grad_acc(grad_acc);
      const std::size_t batch_n = batch_end - pos;
      for (std::size_t b = pos; b < batch_end; ++b) {
        const LoadedClip& clip = clips[order[b]];
        StepLosses losses;
        try {
          switch (cfg.strategy) {
            case Strategy::ont: {
              const std::uint64_t pair_seed = mix_seed(cfg.seed, fnv1a64(clip.id), epoch);
              losses = ont_step_grads<R>(model, clip.noisy, cfg, stft_cfg, pair_seed, grad_acc);
              break;
            }
            case Strategy::nct:
            case Strategy::nnt:
              losses =
                  basic_step_grads<R>(model, clip.noisy, clip.aux, cfg.loss, stft_cfg, grad_acc);
              break;
            case Strategy::nernt: {
              const std::uint64_t mix = mix_seed(cfg.seed ^ 0x6e65726eULL, fnv1a64(clip.id), epoch);
              const Waveform input = nernt_input(clip.noisy, clip.aux, cfg.nernt_snr_lo_db,
                                                 cfg.nernt_snr_hi_db, mix);
              losses = basic_step_grads<R>(model, input, clip.noisy, cfg.loss, stft_cfg, grad_acc);
              break;
            }
          }
        } catch (const DataError& e) {
          throw DataError("training: aborted at epoch " + std::to_string(epoch) + " step " +
                          std::to_string(step_index) + " clip '" + clip.id + "': " + e.what());
        }

        json line;
        line["epoch"] = epoch;
        line["step"] = step_index;
        line["clip"] = clip.id;
        line["l_time"] = losses.l_time;
        line["l_freq"] = losses.l_freq;
        line["l_wsdr"] = losses.l_wsdr;
        line["l_basic"] = losses.l_basic;
        line["l_reg"] = losses.l_reg;
        line["total"] = losses.total;
        line["lr"] = lr;
        log << line.dump() << '\n';
        log.flush();

        epoch_loss_sum += losses.total;
        ++epoch_clip_count;
      }

      if (batch_n > 1)
        for (auto& t : grad_acc)
          for (auto& g : t) g /= static_cast<double>(batch_n);
      adam_update(model, grad_acc, adam, lr);
      ++step_index;
      pos = batch_end;
    }

    adam.completed_epochs = static_cast<std::uint32_t>(epoch + 1);
    checkpoint("ckpt_epoch" + std::to_string(epoch));
    last_epoch_mean = epoch_clip_count ? epoch_loss_sum / static_cast<double>(epoch_clip_count)
                                       : 0.0;
  }

  checkpoint("model");

  TrainResult result;
  result.model = std::move(model);
  result.steps = step_index;
  result.last_epoch_mean_loss = last_epoch_mean;
  result.model_path = (fs::path(out_dir) / "model.ontm").string();
  result.log_path = log_path;
  return result;
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  return cfg.verify_mode ? run_train<double>(manifest, cfg, out_dir)
                         : run_train<float>(manifest, cfg, out_dir);
}

}  // namespace ont
