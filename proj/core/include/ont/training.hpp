#pragma once

// Strategy-dispatched training: the self-supervised sub-sampling strategy
// (ONT) plus three reference strategies (NCT noisy->clean, NNT noisy->noisy,
// NerNT noisier->noisy). One loop owns the model; strategies differ only in
// how the (input, target) pair and the optional regularization term are
// constructed for each clip.

#include <cstdint>
#include <string>
#include <vector>

#include "ont/losses.hpp"
#include "ont/manifest.hpp"
#include "ont/model.hpp"
#include "ont/optimizer.hpp"
#include "ont/stft.hpp"
#include "ont/subsample.hpp"
#include "ont/waveform.hpp"

namespace ont {

enum class Strategy { ont, nct, nnt, nernt };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

struct TrainConfig {
  Strategy strategy = Strategy::ont;
  std::size_t epochs = 3;
  std::size_t batch_size = 1;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_interval_epochs = 1;
  SubsampleConfig subsample;  // k and mode; per-step seeds derive from `seed`
  LossWeights loss;
  double nernt_snr_lo_db = 0.0;
  double nernt_snr_hi_db = 10.0;
  std::uint64_t seed = 0;
  ModelConfig model = ModelConfig::tiny();
  StftConfig stft;          // sample_rate_hz 0 means adopt the corpus rate
  bool verify_mode = false;  // double-precision tape
  std::string resume;        // checkpoint stem (without extension) or empty

  void validate() const;
};

// Checks that every item in the chosen split carries the files the strategy
// needs; throws DataError naming the first offending item and field.
void validate_manifest_for(const DatasetManifest& manifest, Strategy strategy,
                           const std::string& split = "train");

struct StepLosses {
  double l_time = 0.0;
  double l_freq = 0.0;
  double l_wsdr = 0.0;
  double l_basic = 0.0;
  double l_reg = 0.0;
  double total = 0.0;
};

// One ONT clip: sub-sample a pair, run the network on s1, add the detached
// full-signal regularization when gamma > 0, and accumulate parameter
// gradients (no optimizer update). `pair_seed` fixes the sub-sampler draw.
template <class R>
StepLosses ont_step_grads(const DenoiserModel& model, const Waveform& x, const TrainConfig& cfg,
                          const StftConfig& stft_cfg, std::uint64_t pair_seed,
                          std::vector<std::vector<double>>& grad_acc);

// One supervised-style clip (all reference strategies): run the network on
// `input`, compare against `target` with the basic loss only.
template <class R>
StepLosses basic_step_grads(const DenoiserModel& model, const Waveform& input,
                            const Waveform& target, const LossWeights& weights,
                            const StftConfig& stft_cfg,
                            std::vector<std::vector<double>>& grad_acc);

extern template StepLosses ont_step_grads<float>(const DenoiserModel&, const Waveform&,
                                                 const TrainConfig&, const StftConfig&,
                                                 std::uint64_t,
                                                 std::vector<std::vector<double>>&);
extern template StepLosses ont_step_grads<double>(const DenoiserModel&, const Waveform&,
                                                  const TrainConfig&, const StftConfig&,
                                                  std::uint64_t,
                                                  std::vector<std::vector<double>>&);
extern template StepLosses basic_step_grads<float>(const DenoiserModel&, const Waveform&,
                                                   const Waveform&, const LossWeights&,
                                                   const StftConfig&,
                                                   std::vector<std::vector<double>>&);
extern template StepLosses basic_step_grads<double>(const DenoiserModel&, const Waveform&,
                                                    const Waveform&, const LossWeights&,
                                                    const StftConfig&,
                                                    std::vector<std::vector<double>>&);

// Loss value only (no gradients), with the stop-gradient full-signal branch
// supplied explicitly so finite-difference checks can hold it frozen while
// parameters are perturbed. g_s1/g_s2 are ignored when weights.gamma == 0.
template <class R>
double ont_loss_value(const DenoiserModel& model, const Waveform& s1, const Waveform& s2,
                      const Waveform& g_s1, const Waveform& g_s2, const LossWeights& weights,
                      const StftConfig& stft_cfg);

extern template double ont_loss_value<float>(const DenoiserModel&, const Waveform&,
                                             const Waveform&, const Waveform&, const Waveform&,
                                             const LossWeights&, const StftConfig&);
extern template double ont_loss_value<double>(const DenoiserModel&, const Waveform&,
                                              const Waveform&, const Waveform&, const Waveform&,
                                              const LossWeights&, const StftConfig&);

// Builds the NerNT training input: the clip's own noisy signal overlaid with
// extra noise at an SNR drawn uniformly from the configured range.
Waveform nernt_input(const Waveform& noisy, const Waveform& extra_noise, double snr_lo_db,
                     double snr_hi_db, std::uint64_t seed);

struct TrainResult {
  DenoiserModel model;
  std::size_t steps = 0;           // optimizer updates performed
  double last_epoch_mean_loss = 0.0;
  std::string model_path;
  std::string log_path;
};

// Full training run: per-epoch seeded shuffling, equal-length batch grouping
// with gradient averaging, JSON-lines step log, per-epoch checkpoints
// (ckpt_epoch<N>.ontm/.onts), final model.ontm/.onts. Aborts with DataError
// on a non-finite loss, leaving the last epoch checkpoint in place.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg,
                  const std::string& out_dir);

// 64-bit FNV-1a over a string; used to derive per-clip seed streams.
std::uint64_t fnv1a64(const std::string& s);

}  // namespace ont
