#pragma once

// Differentiable analysis/synthesis transforms recorded onto the autodiff
// tape. Both directions are exact adjoint pairs implemented with FFTs:
//
//   stft_frames: waveform [L] -> stacked spectrogram [2, F, T]
//                (plane 0 real part, plane 1 imaginary part, F = fft/2 + 1)
//   istft_wola:  stacked spectrogram [2, F, T] -> waveform [L]
//
// istft_wola reproduces the non-differentiable ont::istft sample for sample:
// Hermitian symmetrization that drops the imaginary parts of the DC and
// Nyquist bins, inverse FFT, re-windowing, overlap-add, then division by the
// summed squared window. Gradients flow through the same linear maps.

#include <complex>
#include <cstddef>
#include <vector>

#include "ont/autodiff.hpp"
#include "ont/fft.hpp"
#include "ont/stft.hpp"

namespace ont {

template <class R>
Var<R> stft_frames(Var<R> x, const StftConfig& cfg) {
  cfg.validate();
  const auto& xs = x.shape();
  if (xs.size() != 1) throw Error("stft_frames: expected a rank-1 waveform");
  const std::size_t length = xs[0];
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  const std::size_t nfft = cfg.resolved_fft_len();
  const std::size_t bins = nfft / 2 + 1;
  const std::size_t frames = stft_frame_count(length, cfg);
  const std::vector<double> window = hamming_window(win);

  Tape<R>* t = x.tape;
  Var<R> out = t->make({2, bins, frames}, "stft_frames");
  auto& ov = t->node(out.id).val;
  const auto& xv = t->node(x.id).val;

  std::vector<double> frame(win);
  for (std::size_t fr = 0; fr < frames; ++fr) {
    const std::size_t base = fr * hop;
    for (std::size_t n = 0; n < win; ++n)
      frame[n] = static_cast<double>(xv[base + n]) * window[n];
    const auto spec = rfft(frame, nfft);
    for (std::size_t f = 0; f < bins; ++f) {
      ov[f * frames + fr] = static_cast<R>(spec[f].real());
      ov[bins * frames + f * frames + fr] = static_cast<R>(spec[f].imag());
    }
  }

  t->set_backward(out, [t, ox = x.id, oo = out.id, win, hop, nfft, bins, frames,
                        window = std::move(window)] {
    const auto& g = t->node(oo).grad;
    auto& gx = t->node(ox).grad;
    std::vector<std::complex<double>> buf(nfft);
    for (std::size_t fr = 0; fr < frames; ++fr) {
      // Gradient w.r.t. the windowed frame is the real part of the inverse
      // DFT of the one-sided gradient with the upper half left at zero.
      for (std::size_t f = 0; f < bins; ++f)
        buf[f] = {static_cast<double>(g[f * frames + fr]),
                  static_cast<double>(g[bins * frames + f * frames + fr])};
      for (std::size_t f = bins; f < nfft; ++f) buf[f] = {0.0, 0.0};
      ifft_inplace(buf);
      const std::size_t base = fr * hop;
      for (std::size_t n = 0; n < win; ++n)
        gx[base + n] += static_cast<R>(buf[n].real() * static_cast<double>(nfft) * window[n]);
    }
  });
  return out;
}

template <class R>
Var<R> istft_wola(Var<R> spec, const StftConfig& cfg, std::size_t original_length) {
  cfg.validate();
  const auto& ss = spec.shape();
  const std::size_t nfft = cfg.resolved_fft_len();
  const std::size_t bins = nfft / 2 + 1;
  if (ss.size() != 3 || ss[0] != 2 || ss[1] != bins)
    throw Error("istft_wola: expected a [2, bins, frames] spectrogram");
  const std::size_t frames = ss[2];
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (original_length < win) throw Error("istft_wola: length shorter than one window");
  if (frames != stft_frame_count(original_length, cfg))
    throw Error("istft_wola: frame count inconsistent with length");
  const std::vector<double> window = hamming_window(win);
  std::vector<double> env = synthesis_envelope(original_length, cfg);

  Tape<R>* t = spec.tape;
  Var<R> out = t->make({original_length}, "istft_wola");
  auto& ov = t->node(out.id).val;
  const auto& sv = t->node(spec.id).val;

  std::vector<double> acc(original_length, 0.0);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t fr = 0; fr < frames; ++fr) {
    buf[0] = {static_cast<double>(sv[0 * frames + fr]), 0.0};
    buf[nfft / 2] = {static_cast<double>(sv[(nfft / 2) * frames + fr]), 0.0};
    for (std::size_t f = 1; f < nfft / 2; ++f) {
      buf[f] = {static_cast<double>(sv[f * frames + fr]),
                static_cast<double>(sv[bins * frames + f * frames + fr])};
      buf[nfft - f] = std::conj(buf[f]);
    }
    ifft_inplace(buf);
    const std::size_t base = fr * hop;
    for (std::size_t n = 0; n < win; ++n) acc[base + n] += buf[n].real() * window[n];
  }
  for (std::size_t i = 0; i < original_length; ++i)
    ov[i] = static_cast<R>(env[i] > 0.0 ? acc[i] / env[i] : 0.0);

  t->set_backward(out, [t, os = spec.id, oo = out.id, win, hop, nfft, bins, frames,
                        window = std::move(window), env = std::move(env)] {
    const auto& g = t->node(oo).grad;
    auto& gs = t->node(os).grad;
    std::vector<double> gr(nfft, 0.0);
    std::vector<std::complex<double>> buf;
    for (std::size_t fr = 0; fr < frames; ++fr) {
      const std::size_t base = fr * hop;
      for (std::size_t n = 0; n < win; ++n) {
        const double ge = env[base + n] > 0.0
                              ? static_cast<double>(g[base + n]) / env[base + n]
                              : 0.0;
        gr[n] = ge * window[n];
      }
      buf = rfft(gr, nfft);
      // Hermitian symmetry doubles the weight of the interior bins; the DC
      // and Nyquist imaginary parts were discarded in the forward pass and
      // therefore receive no gradient.
      gs[0 * frames + fr] += static_cast<R>(buf[0].real() / static_cast<double>(nfft));
      gs[(nfft / 2) * frames + fr] +=
          static_cast<R>(buf[nfft / 2].real() / static_cast<double>(nfft));
      for (std::size_t f = 1; f < nfft / 2; ++f) {
        gs[f * frames + fr] += static_cast<R>(2.0 * buf[f].real() / static_cast<double>(nfft));
        gs[bins * frames + f * frames + fr] +=
            static_cast<R>(2.0 * buf[f].imag() / static_cast<double>(nfft));
      }
    }
  });
  return out;
}

}  // namespace ont
