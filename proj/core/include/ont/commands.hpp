#pragma once

#include <cstdint>
#include <string>

#include "ont/config.hpp"
#include "ont/manifest.hpp"
#include "ont/metrics.hpp"
#include "ont/training.hpp"

namespace ont {

// Synthesizes a corpus under out_dir: clean/, noisy/, plus noisy2/ and
// extra_noise/ when requested, and a manifest.json with relative paths.
// Deterministic per config. Returns the manifest with resolved paths.
DatasetManifest cmd_synth(const RunConfig& cfg, const std::string& out_dir);

// Trains on the manifest named by data.manifest; model files and the step
// log land in out_dir alongside an echo of the effective config.
TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir);

// Runs a saved model over one WAV file; output matches the input's length
// and sample rate.
void cmd_denoise(const std::string& model_path, const std::string& in_wav,
                 const std::string& out_wav, const RunConfig& cfg);

// Scores a saved model on one manifest split (clean references required);
// writes metrics.csv and metrics.json under out_dir.
MetricsReport cmd_eval(const std::string& model_path, const RunConfig& cfg,
                       const std::string& out_dir, const std::string& split = "test");

// Sweep runner: one corpus per noise condition (each data.snr_db entry),
// one training+evaluation run per sweep cell per repetition seed. Emits
// ablate.csv (rows = condition, columns = cells, mean over repetitions) and
// ablate_runs.csv (every individual run), both flushed as results arrive.
// sweep is one of: k, gamma, tstb, sampler-mode.
void cmd_ablate(const RunConfig& cfg, const std::string& sweep, std::size_t repetitions,
                const std::string& out_dir);

// Splits one WAV into the two sub-sampled signals; writes
// <prefix>_s1.wav, <prefix>_s2.wav and <prefix>_map.txt (window,s1,s2
// absolute sample indices per line).
void cmd_subsample(const std::string& in_wav, int k, const std::string& mode,
                   std::uint64_t seed, const std::string& out_prefix);

// Magnitude spectrogram as a plain (P2) PGM: height = bins, width = frames,
// row 0 = highest bin, 80 dB display range.
void cmd_spectrogram(const std::string& in_wav, const std::string& out_pgm,
                     const RunConfig& cfg);

// Compares analytic gradients against central finite differences on
// `n_coords` randomly chosen parameter coordinates of the configured model
// (double precision). Prints a per-run verdict; returns the max relative
// error seen.
double cmd_gradcheck(const RunConfig& cfg, std::size_t n_coords, std::uint64_t seed);

}  // namespace ont
