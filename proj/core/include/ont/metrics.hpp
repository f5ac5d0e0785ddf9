#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ont/manifest.hpp"
#include "ont/model.hpp"
#include "ont/stft.hpp"
#include "ont/waveform.hpp"

namespace ont {

// Signal-to-noise ratio in dB with `reference` as the target signal:
// 10*log10(|y|^2 / |test - y|^2). A zero residual returns +infinity;
// a silent reference is an error.
double snr_db(const Waveform& reference, const Waveform& test);

// Segmental SNR: mean over non-overlapping 32 ms frames of the per-frame
// SNR, each clamped to [-10, 35] dB. Frames whose reference portion is
// silent are skipped; if no frame survives, throws.
double ssnr_db(const Waveform& reference, const Waveform& test);

// Short-time objective intelligibility (Taal et al.). Both signals are
// resampled internally to 10 kHz, silent frames are removed based on the
// reference, and band-envelope correlations are averaged over 384 ms
// segments. Result lies in [0, 1]. Throws when too little non-silent
// signal remains.
double stoi(const Waveform& reference, const Waveform& test);

// Rational-ratio polyphase resampler (windowed-sinc lowpass). Used by the
// STOI implementation; exposed for direct testing.
Waveform polyphase_resample(const Waveform& input, std::uint32_t target_rate_hz);

struct ClipMetrics {
  std::string clip;
  std::string strategy;
  std::string preset;
  double snr_db = 0.0;
  double ssnr_db = 0.0;
  double stoi = 0.0;
};

struct MetricAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1); 0 for n < 2
  std::size_t count = 0;
};

struct MetricsReport {
  std::vector<ClipMetrics> rows;
  // strategy label -> metric name ("snr_db"/"ssnr_db"/"stoi") -> aggregate
  std::map<std::string, std::map<std::string, MetricAggregate>> aggregates;

  static MetricsReport from_rows(std::vector<ClipMetrics> rows);
  void write_csv(const std::string& path) const;
  void write_json(const std::string& path) const;
};

struct EvalConfig {
  StftConfig stft;                     // sample_rate_hz 0 adopts the corpus rate
  std::string strategy_label = "model";
  std::string split = "test";
  bool include_baseline = true;        // add rows for the unprocessed noisy input
  bool verify_mode = false;            // run the denoiser in double precision
};

// Denoises every clip in the chosen manifest split and scores the result
// against the clean reference; optionally adds a "noisy" baseline row per
// clip for the unprocessed input.
MetricsReport evaluate(const DenoiserModel& model, const DatasetManifest& manifest,
                       const EvalConfig& cfg);

}  // namespace ont
