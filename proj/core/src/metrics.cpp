#include "ont/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ont/error.hpp"
#include "ont/fft.hpp"
#include "ont/network.hpp"
#include "ont/wav_io.hpp"

namespace ont {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double energy_between(const Waveform& a, std::size_t begin, std::size_t end) {
  double e = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double v = a.samples[i];
    e += v * v;
  }
  return e;
}

void require_equal_lengths(const Waveform& reference, const Waveform& test) {
  if (reference.size() != test.size())
    throw DataError("metrics: reference and test lengths differ");
  if (reference.sample_rate_hz != test.sample_rate_hz)
    throw DataError("metrics: reference and test sample rates differ");
}

}  // namespace

double snr_db(const Waveform& reference, const Waveform& test) {
  require_equal_lengths(reference, test);
  double signal = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double y = reference.samples[i];
    const double d = static_cast<double>(test.samples[i]) - y;
    signal += y * y;
    residual += d * d;
  }
  if (signal == 0.0) throw DataError("metrics: silent reference");
  if (residual == 0.0) return kInf;
  return 10.0 * std::log10(signal / residual);
}

double ssnr_db(const Waveform& reference, const Waveform& test) {
  require_equal_lengths(reference, test);
  const std::size_t frame =
      static_cast<std::size_t>(std::llround(0.032 * reference.sample_rate_hz));
  if (frame == 0 || reference.size() < frame)
    throw DataError("metrics: clip shorter than one segmental-SNR frame");
  double sum = 0.0;
  std::size_t valid = 0;
  for (std::size_t start = 0; start + frame <= reference.size(); start += frame) {
    const double signal = energy_between(reference, start, start + frame);
    if (signal == 0.0) continue;  // silent reference frame: skipped
    double residual = 0.0;
    for (std::size_t i = start; i < start + frame; ++i) {
      const double d =
          static_cast<double>(test.samples[i]) - static_cast<double>(reference.samples[i]);
      residual += d * d;
    }
    const double frame_snr =
        residual == 0.0 ? 35.0 : std::clamp(10.0 * std::log10(signal / residual), -10.0, 35.0);
    sum += frame_snr;
    ++valid;
  }
  if (valid == 0) throw DataError("metrics: no frames with a non-silent reference");
  return sum / static_cast<double>(valid);
}

// ---------------------------------------------------------------------------
// Polyphase resampling (windowed-sinc lowpass, Kaiser beta = 5)

namespace {

double bessel_i0(double x) {
  const double hx = 0.5 * x;
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    const double f = hx / k;
    term *= f * f;
    sum += term;
    if (term < sum * 1e-18) break;
  }
  return sum;
}

double sinc(double t) {
  if (t == 0.0) return 1.0;
  const double pt = M_PI * t;
  return std::sin(pt) / pt;
}

// Linear-phase FIR lowpass: cutoff is normalized so 1 = Nyquist. Unit DC gain.
std::vector<double> kaiser_lowpass(std::size_t numtaps, double cutoff, double beta) {
  std::vector<double> h(numtaps);
  const double mid = 0.5 * static_cast<double>(numtaps - 1);
  const double denom = bessel_i0(beta);
  double sum = 0.0;
  for (std::size_t k = 0; k < numtaps; ++k) {
    const double t = static_cast<double>(k) - mid;
    const double r = t / mid;
    const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[k] = cutoff * sinc(cutoff * t) * window;
    sum += h[k];
  }
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> resample_rational(const std::vector<double>& x, std::size_t up,
                                      std::size_t down) {
  if (up == down) return x;
  const std::size_t g = std::gcd(up, down);
  const std::size_t L = up / g, M = down / g;
  const std::size_t max_rate = std::max(L, M);
  const std::size_t half = 10 * max_rate;
  const std::size_t numtaps = 2 * half + 1;
  std::vector<double> h = kaiser_lowpass(numtaps, 1.0 / static_cast<double>(max_rate), 5.0);
  for (auto& v : h) v *= static_cast<double>(L);

  const std::size_t n = x.size();
  const std::size_t out_len = (n * L + M - 1) / M;
  std::vector<double> y(out_len, 0.0);
  const long long D = static_cast<long long>(half);
  for (std::size_t m = 0; m < out_len; ++m) {
    const long long center = static_cast<long long>(m) * static_cast<long long>(M) + D;
    long long j_lo = (center - static_cast<long long>(numtaps) + 1 + static_cast<long long>(L) - 1) /
                     static_cast<long long>(L);
    long long j_hi = center / static_cast<long long>(L);
    j_lo = std::max<long long>(j_lo, 0);
    j_hi = std::min<long long>(j_hi, static_cast<long long>(n) - 1);
    double acc = 0.0;
    for (long long j = j_lo; j <= j_hi; ++j)
      acc += x[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(center - j * static_cast<long long>(L))];
    y[m] = acc;
  }
  return y;
}

}  // namespace

Waveform polyphase_resample(const Waveform& input, std::uint32_t target_rate_hz) {
  input.validate("metrics");
  if (target_rate_hz == 0) throw ConfigError("metrics: target sample rate must be positive");
  std::vector<double> x(input.samples.begin(), input.samples.end());
  std::vector<double> y = resample_rational(x, target_rate_hz, input.sample_rate_hz);
  Waveform out;
  out.sample_rate_hz = static_cast<int>(target_rate_hz);
  out.samples = std::move(y);
  return out;
}

// ---------------------------------------------------------------------------
// STOI

namespace {

constexpr std::size_t kStoiRate = 10000;
constexpr std::size_t kStoiFrame = 256;   // 25.6 ms at 10 kHz
constexpr std::size_t kStoiHop = 128;     // 50% overlap
constexpr std::size_t kStoiFft = 512;
constexpr std::size_t kStoiBands = 15;    // one-third octaves from 150 Hz
constexpr std::size_t kStoiSegment = 30;  // 384 ms of frames
constexpr double kStoiBandStartHz = 150.0;
constexpr double kStoiSilenceRangeDb = 40.0;

// Hann window without zero endpoints: w_k = 0.5*(1 - cos(2*pi*(k+1)/(n+1))).
std::vector<double> hann_inner(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k)
    w[k] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(k + 1) /
                                 static_cast<double>(n + 1)));
  return w;
}

// Frame start offsets: hop-spaced, requiring start + frame < len (the
// final exactly-touching frame is deliberately excluded, matching the
// reference STOI implementation).
std::vector<std::size_t> frame_starts(std::size_t len) {
  std::vector<std::size_t> starts;
  if (len <= kStoiFrame) return starts;
  for (std::size_t s = 0; s + kStoiFrame < len; s += kStoiHop) starts.push_back(s);
  return starts;
}

// Drops frames more than 40 dB below the loudest reference frame; the kept
// frames of both signals are compacted by windowed overlap-add.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::vector<std::size_t> starts = frame_starts(x.size());
  if (starts.empty()) {
    x.clear();
    y.clear();
    return;
  }
  const std::vector<double> w = hann_inner(kStoiFrame);
  std::vector<double> energy(starts.size());
  double max_energy = 0.0;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (std::size_t k = 0; k < kStoiFrame; ++k) {
      const double v = x[starts[f] + k] * w[k];
      e += v * v;
    }
    energy[f] = e;
    max_energy = std::max(max_energy, e);
  }
  const double threshold = max_energy * std::pow(10.0, -kStoiSilenceRangeDb / 10.0);

  std::vector<double> xs, ys;
  std::size_t kept = 0;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    if (!(energy[f] > threshold)) continue;
    const std::size_t out = kept * kStoiHop;
    if (xs.size() < out + kStoiFrame) {
      xs.resize(out + kStoiFrame, 0.0);
      ys.resize(out + kStoiFrame, 0.0);
    }
    for (std::size_t k = 0; k < kStoiFrame; ++k) {
      xs[out + k] += x[starts[f] + k] * w[k];
      ys[out + k] += y[starts[f] + k] * w[k];
    }
    ++kept;
  }
  x = std::move(xs);
  y = std::move(ys);
}

// One-third-octave band edges snapped to the nearest FFT bin; each band is
// the half-open bin range [lo, hi).
std::vector<std::pair<std::size_t, std::size_t>> third_octave_bands() {
  const double bin_hz = static_cast<double>(kStoiRate) / static_cast<double>(kStoiFft);
  const std::size_t n_bins = kStoiFft / 2 + 1;
  auto nearest_bin = [&](double hz) {
    const long long b = std::llround(hz / bin_hz);
    return static_cast<std::size_t>(std::clamp<long long>(b, 0, static_cast<long long>(n_bins) - 1));
  };
  std::vector<std::pair<std::size_t, std::size_t>> bands;
  for (std::size_t j = 0; j < kStoiBands; ++j) {
    const double cf = kStoiBandStartHz * std::pow(2.0, static_cast<double>(j) / 3.0);
    const double lo = cf / std::pow(2.0, 1.0 / 6.0);
    const double hi = cf * std::pow(2.0, 1.0 / 6.0);
    bands.emplace_back(nearest_bin(lo), nearest_bin(hi));
  }
  return bands;
}

// Band magnitudes [band][frame]: sqrt of summed power over each band's bins.
std::vector<std::vector<double>> band_envelopes(
    const std::vector<double>& x, const std::vector<std::pair<std::size_t, std::size_t>>& bands) {
  const std::vector<std::size_t> starts = frame_starts(x.size());
  const std::vector<double> w = hann_inner(kStoiFrame);
  std::vector<std::vector<double>> env(kStoiBands, std::vector<double>(starts.size(), 0.0));
  std::vector<double> frame(kStoiFrame);
  for (std::size_t m = 0; m < starts.size(); ++m) {
    for (std::size_t k = 0; k < kStoiFrame; ++k) frame[k] = x[starts[m] + k] * w[k];
    const auto spec = rfft(frame, kStoiFft);
    for (std::size_t j = 0; j < kStoiBands; ++j) {
      double p = 0.0;
      for (std::size_t k = bands[j].first; k < bands[j].second; ++k) p += std::norm(spec[k]);
      env[j][m] = std::sqrt(p);
    }
  }
  return env;
}

}  // namespace

double stoi(const Waveform& reference, const Waveform& test) {
  require_equal_lengths(reference, test);

  const Waveform ref10 = reference.sample_rate_hz == kStoiRate
                             ? reference
                             : polyphase_resample(reference, kStoiRate);
  const Waveform tst10 =
      test.sample_rate_hz == kStoiRate ? test : polyphase_resample(test, kStoiRate);

  std::vector<double> x(ref10.samples.begin(), ref10.samples.end());
  std::vector<double> y(tst10.samples.begin(), tst10.samples.end());
  remove_silent_frames(x, y);

  const std::size_t min_len = kStoiFrame + (kStoiSegment - 1) * kStoiHop + 1;
  if (x.size() < min_len)
    throw DataError("metrics: too little non-silent signal for a 384 ms STOI segment");

  const auto bands = third_octave_bands();
  const auto X = band_envelopes(x, bands);
  const auto Y = band_envelopes(y, bands);
  const std::size_t n_frames = X[0].size();
  if (n_frames < kStoiSegment)
    throw DataError("metrics: too little non-silent signal for a 384 ms STOI segment");

  // Clip bound: the scaled degraded envelope may exceed the clean one by at
  // most the -15 dB signal-to-distortion floor.
  const double clip_gain = 1.0 + std::pow(10.0, 15.0 / 20.0);
  const double tiny = 1e-300;

  double corr_sum = 0.0;
  std::size_t corr_count = 0;
  std::vector<double> ys(kStoiSegment);
  for (std::size_t m = kStoiSegment - 1; m < n_frames; ++m) {
    const std::size_t s0 = m + 1 - kStoiSegment;
    for (std::size_t j = 0; j < kStoiBands; ++j) {
      const double* xs = X[j].data() + s0;
      const double* yb = Y[j].data() + s0;
      double ex = 0.0, ey = 0.0;
      for (std::size_t t = 0; t < kStoiSegment; ++t) {
        ex += xs[t] * xs[t];
        ey += yb[t] * yb[t];
      }
      const double alpha = ey > 0.0 ? std::sqrt(ex / ey) : 0.0;
      double mx = 0.0, my = 0.0;
      for (std::size_t t = 0; t < kStoiSegment; ++t) {
        ys[t] = std::min(alpha * yb[t], xs[t] * clip_gain);
        mx += xs[t];
        my += ys[t];
      }
      mx /= static_cast<double>(kStoiSegment);
      my /= static_cast<double>(kStoiSegment);
      double dot = 0.0, nx = 0.0, ny = 0.0;
      for (std::size_t t = 0; t < kStoiSegment; ++t) {
        const double a = xs[t] - mx;
        const double b = ys[t] - my;
        dot += a * b;
        nx += a * a;
        ny += b * b;
      }
      corr_sum += dot / (std::sqrt(nx) * std::sqrt(ny) + tiny);
      ++corr_count;
    }
  }
  const double d = corr_sum / static_cast<double>(corr_count);
  return std::clamp(d, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Reports

namespace {

void accumulate(std::map<std::string, std::map<std::string, MetricAggregate>>& aggs,
                const std::vector<ClipMetrics>& rows) {
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  for (const auto& r : rows) {
    auto& g = grouped[r.strategy];
    g["snr_db"].push_back(r.snr_db);
    g["ssnr_db"].push_back(r.ssnr_db);
    g["stoi"].push_back(r.stoi);
  }
  for (const auto& [strategy, metrics] : grouped) {
    for (const auto& [metric, values] : metrics) {
      MetricAggregate a;
      a.count = values.size();
      double sum = 0.0;
      for (double v : values) sum += v;
      a.mean = sum / static_cast<double>(values.size());
      if (values.size() > 1 && std::isfinite(a.mean)) {
        double sq = 0.0;
        for (double v : values) sq += (v - a.mean) * (v - a.mean);
        a.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
      }
      aggs[strategy][metric] = a;
    }
  }
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

json json_metric(double v) {
  if (std::isfinite(v)) return v;
  return format_metric(v);
}

}  // namespace

MetricsReport MetricsReport::from_rows(std::vector<ClipMetrics> rows) {
  MetricsReport report;
  report.rows = std::move(rows);
  accumulate(report.aggregates, report.rows);
  return report;
}

void MetricsReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("metrics: cannot open '" + path + "' for writing");
  out << "clip,strategy,preset,snr_db,ssnr_db,stoi\n";
  for (const auto& r : rows)
    out << r.clip << ',' << r.strategy << ',' << r.preset << ',' << format_metric(r.snr_db) << ','
        << format_metric(r.ssnr_db) << ',' << format_metric(r.stoi) << '\n';
  if (!out) throw DataError("metrics: write failed for '" + path + "'");
}

void MetricsReport::write_json(const std::string& path) const {
  json doc;
  doc["rows"] = json::array();
  for (const auto& r : rows) {
    json row;
    row["clip"] = r.clip;
    row["strategy"] = r.strategy;
    row["preset"] = r.preset;
    row["snr_db"] = json_metric(r.snr_db);
    row["ssnr_db"] = json_metric(r.ssnr_db);
    row["stoi"] = json_metric(r.stoi);
    doc["rows"].push_back(std::move(row));
  }
  doc["aggregates"] = json::object();
  for (const auto& [strategy, metrics] : aggregates) {
    json group;
    for (const auto& [metric, a] : metrics) {
      group[metric] = {{"mean", json_metric(a.mean)},
                       {"stddev", json_metric(a.stddev)},
                       {"count", a.count}};
    }
    doc["aggregates"][strategy] = std::move(group);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("metrics: cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("metrics: write failed for '" + path + "'");
}

MetricsReport evaluate(const DenoiserModel& model, const DatasetManifest& manifest,
                       const EvalConfig& cfg) {
  const auto items = manifest.split_items(cfg.split);
  if (items.empty()) throw DataError("metrics: no items in split '" + cfg.split + "'");

  std::vector<ClipMetrics> rows;
  std::vector<ClipMetrics> baseline;
  StftConfig stft_cfg = cfg.stft;

  for (const auto& item : items) {
    if (item.clean.empty())
      throw DataError("metrics: item '" + item.id + "' has no clean reference");
    const Waveform noisy = read_wav(item.noisy);
    const Waveform clean = read_wav(item.clean);
    if (stft_cfg.sample_rate_hz == 0) {
      stft_cfg.sample_rate_hz = noisy.sample_rate_hz;
      stft_cfg.validate();
    }
    const Waveform denoised = cfg.verify_mode
                                  ? denoise_waveform_t<double>(model, noisy, stft_cfg)
                                  : denoise_waveform(model, noisy, stft_cfg);

    ClipMetrics row;
    row.clip = item.id;
    row.strategy = cfg.strategy_label;
    row.preset = model.config().preset;
    row.snr_db = snr_db(clean, denoised);
    row.ssnr_db = ssnr_db(clean, denoised);
    row.stoi = stoi(clean, denoised);
    rows.push_back(std::move(row));

    if (cfg.include_baseline) {
      ClipMetrics base;
      base.clip = item.id;
      base.strategy = "noisy";
      base.preset = "-";
      base.snr_db = snr_db(clean, noisy);
      base.ssnr_db = ssnr_db(clean, noisy);
      base.stoi = stoi(clean, noisy);
      baseline.push_back(std::move(base));
    }
  }
  rows.insert(rows.end(), baseline.begin(), baseline.end());
  return MetricsReport::from_rows(std::move(rows));
}

}  // namespace ont
