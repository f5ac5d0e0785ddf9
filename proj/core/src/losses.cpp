#include "ont/losses.hpp"

#include <cmath>

namespace ont {

namespace {

double smooth_abs_v(double v) { return std::sqrt(v * v + kLossEps * kLossEps); }

void require_same_length(const Waveform& a, const Waveform& b, const char* who) {
  if (a.size() != b.size()) throw Error(std::string(who) + ": length mismatch");
}

double guarded_norm(const std::vector<double>& v) {
  double acc = kLossEps * kLossEps;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dot_v(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("loss weights: alpha must lie in [0,1]");
  if (beta <= 0.0) throw ConfigError("loss weights: beta must be positive");
  if (gamma < 0.0) throw ConfigError("loss weights: gamma must be non-negative");
}

double loss_time(const Waveform& target, const Waveform& estimate) {
  require_same_length(target, estimate, "loss_time");
  if (target.size() == 0) throw Error("loss_time: empty signals");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target.samples[i] - estimate.samples[i];
    acc += d * d;
  }
  return acc / static_cast<double>(target.size());
}

double loss_freq(const ComplexSpectrogram& target_spec,
                 const ComplexSpectrogram& estimate_spec) {
  if (target_spec.n_bins != estimate_spec.n_bins ||
      target_spec.n_frames != estimate_spec.n_frames)
    throw Error("loss_freq: spectrogram shape mismatch");
  const std::size_t n = target_spec.n_bins * target_spec.n_frames;
  if (n == 0) throw Error("loss_freq: empty spectrograms");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = smooth_abs_v(target_spec.re[i]) + smooth_abs_v(target_spec.im[i]);
    const double b = smooth_abs_v(estimate_spec.re[i]) + smooth_abs_v(estimate_spec.im[i]);
    acc += smooth_abs_v(a - b);
  }
  return acc / static_cast<double>(n);
}

double loss_wsdr(const Waveform& x, const Waveform& y, const Waveform& y_hat) {
  require_same_length(x, y, "loss_wsdr");
  require_same_length(x, y_hat, "loss_wsdr");
  const std::size_t n = x.size();
  std::vector<double> noise(n), noise_hat(n);
  for (std::size_t i = 0; i < n; ++i) {
    noise[i] = x.samples[i] - y.samples[i];
    noise_hat[i] = x.samples[i] - y_hat.samples[i];
  }
  const double ny = guarded_norm(y.samples);
  const double nyh = guarded_norm(y_hat.samples);
  const double nn = guarded_norm(noise);
  const double nnh = guarded_norm(noise_hat);
  const double alpha = (ny * ny) / (ny * ny + nn * nn);
  const double cos_signal = dot_v(y.samples, y_hat.samples) / (ny * nyh);
  const double cos_noise = dot_v(noise, noise_hat) / (nn * nnh);
  return -alpha * cos_signal - (1.0 - alpha) * cos_noise;
}

double loss_reg(const Waveform& f_s1, const Waveform& s2, const Waveform& g_s1,
                const Waveform& g_s2, const LossWeights& w) {
  require_same_length(f_s1, s2, "loss_reg");
  require_same_length(f_s1, g_s1, "loss_reg");
  require_same_length(f_s1, g_s2, "loss_reg");
  double acc = 0.0;
  for (std::size_t i = 0; i < f_s1.size(); ++i) {
    const double r = (f_s1.samples[i] - s2.samples[i]) - (g_s1.samples[i] - g_s2.samples[i]);
    acc += r * r;
  }
  if (w.reg_length_normalized) acc /= static_cast<double>(f_s1.size());
  return acc;
}

double loss_basic(const Waveform& x, const Waveform& target, const Waveform& estimate,
                  const ComplexSpectrogram& target_spec, const ComplexSpectrogram& estimate_spec,
                  const LossWeights& w) {
  w.validate();
  const double lf = loss_freq(target_spec, estimate_spec);
  const double lt = loss_time(target, estimate);
  return (w.alpha * lf + (1.0 - w.alpha) * lt) * w.beta + loss_wsdr(x, target, estimate);
}

double loss_total(double basic, double reg, const LossWeights& w) {
  if (!std::isfinite(basic) || !std::isfinite(reg))
    throw Error("loss_total: non-finite inputs");
  return basic + w.gamma * reg;
}

}  // namespace ont
