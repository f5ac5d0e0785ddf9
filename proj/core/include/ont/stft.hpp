#pragma once

#include <cstddef>
#include <vector>

#include "ont/waveform.hpp"

namespace ont {

// Analysis/synthesis geometry. Window and hop are given in milliseconds and
// resolved against the signal's sample rate; fft_len 0 means "window length
// zero-padded up to the next power of two".
struct StftConfig {
  double window_ms = 64.0;
  double hop_ms = 16.0;
  std::size_t fft_len = 0;
  int sample_rate_hz = 0;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  std::size_t resolved_fft_len() const;
  std::size_t bins() const { return resolved_fft_len() / 2 + 1; }
  void validate() const;
  bool compatible_with(const StftConfig& other) const;
};

std::vector<double> hamming_window(std::size_t n);

// One-sided complex spectrogram, F bins by T frames, row-major [f][t].
struct ComplexSpectrogram {
  std::vector<double> re;
  std::vector<double> im;
  std::size_t n_bins = 0;
  std::size_t n_frames = 0;
  std::size_t original_length = 0;  // samples, for exact inversion
  StftConfig config;

  double& re_at(std::size_t f, std::size_t t) { return re[f * n_frames + t]; }
  double& im_at(std::size_t f, std::size_t t) { return im[f * n_frames + t]; }
  double re_at(std::size_t f, std::size_t t) const { return re[f * n_frames + t]; }
  double im_at(std::size_t f, std::size_t t) const { return im[f * n_frames + t]; }
};

std::size_t stft_frame_count(std::size_t length, const StftConfig& cfg);

// Hamming-windowed one-sided STFT. Frame t covers samples
// [t*hop, t*hop + window); frames are zero-padded to the fft length.
ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg);

// Weighted overlap-add inverse: each inverse frame is windowed again and the
// sum is divided per sample by the summed squared analysis window. Exact
// (to rounding) wherever that denominator is bounded away from zero; the
// output is truncated to the recorded original length.
Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg);

// Per-sample sum of squared analysis windows for a signal of `length`
// samples. Zero entries mark samples no frame covers.
std::vector<double> synthesis_envelope(std::size_t length, const StftConfig& cfg);

}  // namespace ont
