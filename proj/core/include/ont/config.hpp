#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ont/training.hpp"

namespace ont {

// Synthetic-dataset parameters (the data.* config section).
struct DataConfig {
  std::string manifest;                // path to a dataset manifest JSON
  int sample_rate_hz = 16000;          // synthesis sample rate
  std::size_t clips = 48;              // number of clips to synthesize
  double duration_ms = 1100.0;         // clip duration
  std::vector<double> snr_db = {5.0};  // mixture SNR list; clips cycle through it
  double train_fraction = 0.8;         // leading fraction assigned to the train split
  std::string kind = "harmonic-stack"; // clean-signal family
  bool noisy2 = false;                 // also emit an independent second noisy copy
  bool extra_noise = false;            // also emit an extra noise track
  std::uint64_t seed = 11;             // corpus seed
};

// Everything a run needs, parsed from a flat key=value file with section
// prefixes (train., stft., subsample., model., data.). Unknown keys are
// rejected; every key has a default, so an empty file is a valid config.
struct RunConfig {
  TrainConfig train;
  DataConfig data;

  // model.* keys are kept separately so a --preset override can be applied
  // after parsing and the remaining overrides re-applied on top.
  std::string model_preset = "tiny";
  std::size_t model_n_tstb = 0;  // 0 keeps the preset default
  std::string model_tstm;        // "", "real", or "complex"
  std::string model_mask;        // "", "bounded", or "unbounded"

  // Rebuilds train.model from the preset name plus the overrides above.
  void resolve_model();
};

// Parses config text; '#' starts a comment, blank lines are ignored.
RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Serializes every key with its current value (plus doc comments). Parsing
// the result reproduces the config; commands echo this into output
// directories for provenance.
std::string run_config_text(const RunConfig& cfg);

}  // namespace ont
