#include "ont/stft.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "ont/fft.hpp"

namespace ont {

std::size_t StftConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_ms * 1e-3 * sample_rate_hz));
}

std::size_t StftConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_ms * 1e-3 * sample_rate_hz));
}

std::size_t StftConfig::resolved_fft_len() const {
  if (fft_len != 0) return fft_len;
  std::size_t n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

void StftConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("stft: sample rate must be positive");
  if (window_samples() < 2) throw ConfigError("stft: window too short");
  if (hop_samples() < 1) throw ConfigError("stft: hop must be at least one sample");
  if (hop_samples() >= window_samples()) throw ConfigError("stft: hop must be smaller than the window");
  if (!is_power_of_two(resolved_fft_len()))
    throw ConfigError("stft: fft length must be a power of two");
  if (resolved_fft_len() < window_samples())
    throw ConfigError("stft: fft length shorter than the window");
}

bool StftConfig::compatible_with(const StftConfig& other) const {
  return window_samples() == other.window_samples() && hop_samples() == other.hop_samples() &&
         resolved_fft_len() == other.resolved_fft_len() && sample_rate_hz == other.sample_rate_hz;
}

std::vector<double> hamming_window(std::size_t n) {
  // Periodic form; synthesis normalizes by the summed squared window anyway.
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  return w;
}

std::size_t stft_frame_count(std::size_t length, const StftConfig& cfg) {
  const std::size_t win = cfg.window_samples();
  if (length < win) throw ConfigError("stft: signal shorter than one window");
  return 1 + (length - win) / cfg.hop_samples();
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  w.validate("stft");
  if (w.sample_rate_hz != cfg.sample_rate_hz)
    throw ConfigError("stft: waveform sample rate does not match config");

  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t nfft = cfg.resolved_fft_len();
  const std::size_t frames = stft_frame_count(w.size(), cfg);
  const std::size_t bins = nfft / 2 + 1;
  const std::vector<double> window = hamming_window(win);

  ComplexSpectrogram out;
  out.n_bins = bins;
  out.n_frames = frames;
  out.original_length = w.size();
  out.config = cfg;
  out.re.assign(bins * frames, 0.0);
  out.im.assign(bins * frames, 0.0);

  std::vector<double> frame(win);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t base = t * hop;
    for (std::size_t i = 0; i < win; ++i) frame[i] = w.samples[base + i] * window[i];
    const auto spec = rfft(frame, nfft);
    for (std::size_t f = 0; f < bins; ++f) {
      out.re_at(f, t) = spec[f].real();
      out.im_at(f, t) = spec[f].imag();
    }
  }
  return out;
}

std::vector<double> synthesis_envelope(std::size_t length, const StftConfig& cfg) {
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::vector<double> window = hamming_window(win);
  std::vector<double> env(length, 0.0);
  if (length < win) return env;
  const std::size_t frames = 1 + (length - win) / hop;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < win; ++i) env[t * hop + i] += window[i] * window[i];
  return env;
}

Waveform istft(const ComplexSpectrogram& spec, const StftConfig& cfg) {
  cfg.validate();
  if (!spec.config.compatible_with(cfg))
    throw ConfigError("istft: spectrogram geometry does not match config");
  const std::size_t nfft = cfg.resolved_fft_len();
  if (spec.n_bins != nfft / 2 + 1) throw ConfigError("istft: bin count mismatch");
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t length = spec.original_length;
  if (length < win) throw ConfigError("istft: recorded length shorter than one window");
  if (spec.n_frames != stft_frame_count(length, cfg))
    throw ConfigError("istft: frame count inconsistent with recorded length");

  const std::vector<double> window = hamming_window(win);
  std::vector<double> acc(length, 0.0);
  std::vector<std::complex<double>> buf(nfft);

  for (std::size_t t = 0; t < spec.n_frames; ++t) {
    // Symmetrize the one-sided spectrum. The imaginary parts of the DC and
    // Nyquist bins have no real-signal counterpart and are dropped.
    buf[0] = {spec.re_at(0, t), 0.0};
    buf[nfft / 2] = {spec.re_at(nfft / 2, t), 0.0};
    for (std::size_t f = 1; f < nfft / 2; ++f) {
      buf[f] = {spec.re_at(f, t), spec.im_at(f, t)};
      buf[nfft - f] = std::conj(buf[f]);
    }
    ifft_inplace(buf);
    const std::size_t base = t * hop;
    for (std::size_t i = 0; i < win; ++i)
      acc[base + i] += buf[i].real() * window[i];
  }

  const std::vector<double> env = synthesis_envelope(length, cfg);
  Waveform out{std::vector<double>(length), cfg.sample_rate_hz};
  for (std::size_t i = 0; i < length; ++i)
    out.samples[i] = env[i] > 0.0 ? acc[i] / env[i] : 0.0;
  return out;
}

}  // namespace ont
