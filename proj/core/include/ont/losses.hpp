#pragma once

// Training objectives. Every loss exists in two forms that must agree
// numerically: a plain double-precision function on waveforms/spectrograms
// (used by tests and reporting) and a tape builder (used by training, where
// gradients are required). The unit tests pin the two against each other and
// against naive loop oracles.

#include <cstddef>

#include "ont/autodiff.hpp"
#include "ont/stft.hpp"
#include "ont/waveform.hpp"

namespace ont {

// Shared smoothing constant for guarded norms and smoothed absolute values.
inline constexpr double kLossEps = 1e-8;

struct LossWeights {
  double alpha = 0.8;   // frequency/time mix inside the scaled bracket
  double beta = 1.0 / 200.0;  // scale applied to the bracket
  double gamma = 1.0;   // weight of the regularization term
  bool reg_length_normalized = false;  // divide the reg sum of squares by N

  void validate() const;
};

// Mean squared error between two equal-length waveforms.
double loss_time(const Waveform& target, const Waveform& estimate);

// Mean over bins of | (|S_r|+|S_i|) - (|Est_r|+|Est_i|) |, every absolute
// value smoothed as sqrt(v^2 + eps^2).
double loss_freq(const ComplexSpectrogram& target_spec, const ComplexSpectrogram& estimate_spec);

// Weighted signal-to-distortion ratio surrogate; bounded in [-1, 1].
double loss_wsdr(const Waveform& x, const Waveform& y, const Waveform& y_hat);

// || f_s1 - s2 - (g_s1 - g_s2) ||^2 (sum of squares unless the normalized
// flag is set). The callers guarantee g_s1/g_s2 came through a detached
// full-signal pass with the same index map.
double loss_reg(const Waveform& f_s1, const Waveform& s2, const Waveform& g_s1,
                const Waveform& g_s2, const LossWeights& w);

double loss_basic(const Waveform& x, const Waveform& target, const Waveform& estimate,
                  const ComplexSpectrogram& target_spec, const ComplexSpectrogram& estimate_spec,
                  const LossWeights& w);

double loss_total(double basic, double reg, const LossWeights& w);

// ---------------------------------------------------------------------------
// Tape builders. Spectrogram arguments are stacked [2, F, T] tensors as
// produced by stft_frames.

template <class R>
Var<R> loss_time_t(Var<R> target, Var<R> estimate) {
  detail::require_same_shape(target, estimate, "loss_time");
  return mean(square(sub(target, estimate)));
}

template <class R>
Var<R> loss_freq_t(Var<R> target_spec, Var<R> estimate_spec) {
  detail::require_same_shape(target_spec, estimate_spec, "loss_freq");
  const auto& s = target_spec.shape();
  if (s.size() != 3 || s[0] != 2) throw Error("loss_freq: expected [2, F, T] spectrograms");
  auto mag_sum = [](Var<R> spec) {
    Var<R> re = slice_axis(spec, 0, 0, 1);
    Var<R> im = slice_axis(spec, 0, 1, 2);
    return add(smooth_abs(re, kLossEps), smooth_abs(im, kLossEps));
  };
  return mean(smooth_abs(sub(mag_sum(target_spec), mag_sum(estimate_spec)), kLossEps));
}

template <class R>
Var<R> loss_wsdr_t(Var<R> x, Var<R> y, Var<R> y_hat) {
  detail::require_same_shape(x, y, "loss_wsdr");
  detail::require_same_shape(x, y_hat, "loss_wsdr");
  Var<R> noise = sub(x, y);
  Var<R> noise_hat = sub(x, y_hat);

  Var<R> ny = norm_guarded(y, kLossEps);
  Var<R> nyh = norm_guarded(y_hat, kLossEps);
  Var<R> nn = norm_guarded(noise, kLossEps);
  Var<R> nnh = norm_guarded(noise_hat, kLossEps);

  Var<R> ny2 = square(ny);
  Var<R> nn2 = square(nn);
  Var<R> alpha = divide(ny2, add(ny2, nn2));  // energy ratio, strictly in (0,1)

  Var<R> cos_signal = divide(dot(y, y_hat), mul(ny, nyh));
  Var<R> cos_noise = divide(dot(noise, noise_hat), mul(nn, nnh));

  Var<R> one = x.tape->scalar(R(1));
  return sub(neg(mul(alpha, cos_signal)), mul(sub(one, alpha), cos_noise));
}

template <class R>
Var<R> loss_reg_t(Var<R> f_s1, Var<R> s2, Var<R> g_s1, Var<R> g_s2, const LossWeights& w) {
  detail::require_same_shape(f_s1, s2, "loss_reg");
  detail::require_same_shape(f_s1, g_s1, "loss_reg");
  detail::require_same_shape(f_s1, g_s2, "loss_reg");
  Var<R> resid = sub(sub(f_s1, s2), sub(g_s1, g_s2));
  Var<R> ss = sum(square(resid));
  if (w.reg_length_normalized) ss = scale(ss, 1.0 / static_cast<double>(f_s1.numel()));
  return ss;
}

template <class R>
Var<R> loss_basic_t(Var<R> x, Var<R> target, Var<R> estimate, Var<R> target_spec,
                    Var<R> estimate_spec, const LossWeights& w) {
  Var<R> lf = loss_freq_t(target_spec, estimate_spec);
  Var<R> lt = loss_time_t(target, estimate);
  Var<R> bracket = add(scale(lf, w.alpha), scale(lt, 1.0 - w.alpha));
  return add(scale(bracket, w.beta), loss_wsdr_t(x, target, estimate));
}

template <class R>
Var<R> loss_total_t(Var<R> basic, Var<R> reg, const LossWeights& w) {
  return add(basic, scale(reg, w.gamma));
}

}  // namespace ont
