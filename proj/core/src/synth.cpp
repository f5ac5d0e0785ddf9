#include "ont/synth.hpp"

#include <cmath>
#include <numbers>

#include "ont/rng.hpp"

namespace ont {

using std::numbers::pi;

SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "harmonic-stack") return SynthKind::harmonic_stack;
  if (s == "chirp") return SynthKind::chirp;
  if (s == "am-tone") return SynthKind::am_tone;
  throw ConfigError("unknown synth kind: " + s);
}

std::string to_string(SynthKind k) {
  switch (k) {
    case SynthKind::harmonic_stack: return "harmonic-stack";
    case SynthKind::chirp: return "chirp";
    case SynthKind::am_tone: return "am-tone";
  }
  return "?";
}

namespace {

constexpr double kMinDurationS = 0.064;  // one default analysis window
constexpr double kTargetPeak = 0.85;

void normalize_peak(std::vector<double>& x) {
  double p = peak(x);
  if (p > 0) {
    const double g = kTargetPeak / p;
    for (double& v : x) v *= g;
  }
}

// Sum of the first partials of f0 with 1/h amplitude falloff, slow amplitude
// modulation at a syllabic rate and a light vibrato. The modulation matters:
// intelligibility metrics track band envelopes, so a steady tone would be a
// degenerate test signal.
std::vector<double> harmonic_stack(double f0, std::size_t n, int fs, Rng& rng) {
  const double nyquist = fs / 2.0;
  std::vector<double> x(n, 0.0);
  const double am_rate = rng.uniform(3.0, 5.0);
  const double am_phase = rng.uniform(0.0, 2.0 * pi);
  const double vib_rate = rng.uniform(4.0, 6.0);
  const double vib_depth = 0.004;
  int harmonics = 0;
  for (int h = 1; h * f0 < 0.95 * nyquist && h <= 24; ++h) ++harmonics;
  std::vector<double> phases(static_cast<std::size_t>(harmonics));
  for (auto& ph : phases) ph = rng.uniform(0.0, 2.0 * pi);

  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double vib = 1.0 + vib_depth * std::sin(2.0 * pi * vib_rate * t);
    const double env = 0.35 + 0.65 * 0.5 * (1.0 - std::cos(2.0 * pi * am_rate * t + am_phase));
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h)
      s += std::sin(2.0 * pi * h * f0 * vib * t + phases[static_cast<std::size_t>(h - 1)]) / h;
    x[i] = env * s;
  }
  return x;
}

std::vector<double> chirp(double f0, std::size_t n, int fs, Rng& rng) {
  const double nyquist = fs / 2.0;
  const double f1 = std::min(4.0 * f0, 0.45 * static_cast<double>(fs));
  const double dur = static_cast<double>(n) / fs;
  const double phase0 = rng.uniform(0.0, 2.0 * pi);
  (void)nyquist;
  std::vector<double> x(n);
  const std::size_t ramp = std::min<std::size_t>(n / 10, static_cast<std::size_t>(0.01 * fs));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double f = f0 + (f1 - f0) * t / (2.0 * dur);  // instantaneous phase integral
    double v = std::sin(2.0 * pi * f * t + phase0);
    if (ramp > 0) {
      if (i < ramp) v *= static_cast<double>(i) / ramp;
      if (n - 1 - i < ramp) v *= static_cast<double>(n - 1 - i) / ramp;
    }
    x[i] = v;
  }
  return x;
}

std::vector<double> am_tone(double f0, std::size_t n, int fs, Rng& rng) {
  const double mod_rate = rng.uniform(2.5, 4.0);
  const double depth = 0.8;
  const double phase0 = rng.uniform(0.0, 2.0 * pi);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double env = (1.0 - depth) + depth * 0.5 * (1.0 - std::cos(2.0 * pi * mod_rate * t));
    x[i] = env * std::sin(2.0 * pi * f0 * t + phase0);
  }
  return x;
}

}  // namespace

Waveform synth_clean(const SynthSpec& spec, int sample_rate_hz) {
  if (sample_rate_hz <= 0) throw ConfigError("synth_clean: sample rate must be positive");
  if (spec.duration_s < kMinDurationS)
    throw ConfigError("synth_clean: duration shorter than one analysis window");
  if (spec.fundamental_hz <= 0 || spec.fundamental_hz >= sample_rate_hz / 2.0)
    throw ConfigError("synth_clean: fundamental must lie below Nyquist");

  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * sample_rate_hz));
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(spec.kind)));
  std::vector<double> x;
  switch (spec.kind) {
    case SynthKind::harmonic_stack: x = harmonic_stack(spec.fundamental_hz, n, sample_rate_hz, rng); break;
    case SynthKind::chirp: x = chirp(spec.fundamental_hz, n, sample_rate_hz, rng); break;
    case SynthKind::am_tone: x = am_tone(spec.fundamental_hz, n, sample_rate_hz, rng); break;
  }
  normalize_peak(x);
  return Waveform{std::move(x), sample_rate_hz};
}

Waveform synth_white_noise(std::size_t length, std::uint64_t seed, int sample_rate_hz) {
  if (length < 1) throw ConfigError("synth_white_noise: length must be >= 1");
  if (sample_rate_hz <= 0) throw ConfigError("synth_white_noise: sample rate must be positive");
  Rng rng(mix_seed(seed, 0x6e6f6973));
  std::vector<double> x(length);
  for (double& v : x) v = rng.gaussian();
  return Waveform{std::move(x), sample_rate_hz};
}

Waveform overlay_noise(const Waveform& clean, const Waveform& noise, double snr_db,
                       std::size_t noise_offset) {
  clean.validate("overlay_noise(clean)");
  noise.validate("overlay_noise(noise)");
  if (clean.sample_rate_hz != noise.sample_rate_hz)
    throw ConfigError("overlay_noise: sample-rate mismatch");
  const double ey = energy(clean.samples);
  if (ey <= 0) throw ConfigError("overlay_noise: silent clean input");
  if (energy(noise.samples) <= 0) throw ConfigError("overlay_noise: silent noise input");

  // Tile/truncate the noise over the clean length, then solve for the gain
  // that hits the requested SNR exactly on the tiled segment.
  const std::size_t n = clean.size();
  std::vector<double> tiled(n);
  for (std::size_t i = 0; i < n; ++i)
    tiled[i] = noise.samples[(noise_offset + i) % noise.size()];
  const double en = energy(tiled);
  if (en <= 0) throw ConfigError("overlay_noise: tiled noise segment is silent");
  const double gain = std::sqrt(ey / (en * std::pow(10.0, snr_db / 10.0)));

  Waveform out{std::vector<double>(n), clean.sample_rate_hz};
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = clean.samples[i] + gain * tiled[i];
  return out;
}

}  // namespace ont
