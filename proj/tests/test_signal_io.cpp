#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "ont/manifest.hpp"
#include "ont/rng.hpp"
#include "ont/synth.hpp"
#include "ont/wav_io.hpp"
#include "test_util.hpp"

using namespace ont;

TEST_SUITE_BEGIN("signal_io");

TEST_CASE("rng is deterministic per seed and differs across seeds") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_equal_c = false;
  for (int i = 0; i < 64; ++i) {
    auto va = a.next_u64();
    all_equal = all_equal && (va == b.next_u64());
    any_equal_c = any_equal_c || (va == c.next_u64());
  }
  CHECK(all_equal);
  CHECK_FALSE(any_equal_c);
}

TEST_CASE("rng uniform stays in bounds and below(n) stays below n") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform(-3.0, 5.0);
    CHECK(v >= -3.0);
    CHECK(v < 5.0);
    CHECK(rng.below(17) < 17);
  }
}

TEST_CASE("rng gaussian has standard moments") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("mix_seed depends on every argument") {
  const auto base = mix_seed(1, 2, 3);
  CHECK(base == mix_seed(1, 2, 3));
  CHECK(base != mix_seed(2, 2, 3));
  CHECK(base != mix_seed(1, 3, 3));
  CHECK(base != mix_seed(1, 2, 4));
}

TEST_CASE("wav float32 round trip is bit exact") {
  testutil::TempDir tmp("wav_f32");
  Waveform w = testutil::random_wave(1234, 99, 16000);
  w.samples[0] = 1e-30;  // tiny values must survive too
  w.samples[1] = -0.999999;
  write_wav(w, tmp.str("x.wav"));
  const Waveform r = read_wav(tmp.str("x.wav"));
  REQUIRE(r.size() == w.size());
  CHECK(r.sample_rate_hz == 16000);
  bool exact = true;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const float a = static_cast<float>(w.samples[i]);
    const float b = static_cast<float>(r.samples[i]);
    exact = exact && std::memcmp(&a, &b, sizeof a) == 0;
  }
  CHECK(exact);
}

TEST_CASE("wav pcm16 scaling maps known amplitudes to known codes") {
  testutil::TempDir tmp("wav_pcm");
  Waveform w{{0.0, 0.5, -1.0, 1.0, 16384.0 / 32768.0}, 8000};
  write_wav(w, tmp.str("p.wav"), WavEncoding::pcm16);
  const Waveform r = read_wav(tmp.str("p.wav"));
  REQUIRE(r.size() == 5);
  CHECK(r.samples[0] == 0.0);
  CHECK(r.samples[1] == 0.5);                    // 16384 / 32768
  CHECK(r.samples[2] == -1.0);                   // -32768 / 32768
  CHECK(r.samples[3] == 32767.0 / 32768.0);      // clamped below +1
  CHECK(r.samples[4] == 0.5);
}

TEST_CASE("wav reader refuses stereo and unknown formats") {
  testutil::TempDir tmp("wav_bad");
  // Hand-rolled 44-byte header + 4 bytes of data, stereo PCM16.
  auto write_header = [&](const std::string& path, std::uint16_t channels,
                          std::uint16_t format) {
    unsigned char h[48] = {0};
    std::memcpy(h, "RIFF", 4);
    const std::uint32_t riff_len = 40;
    std::memcpy(h + 4, &riff_len, 4);
    std::memcpy(h + 8, "WAVEfmt ", 8);
    const std::uint32_t fmt_len = 16;
    std::memcpy(h + 16, &fmt_len, 4);
    std::memcpy(h + 20, &format, 2);
    std::memcpy(h + 22, &channels, 2);
    const std::uint32_t rate = 8000;
    std::memcpy(h + 24, &rate, 4);
    const std::uint32_t byte_rate = rate * channels * 2;
    std::memcpy(h + 28, &byte_rate, 4);
    const std::uint16_t block = channels * 2, bits = 16;
    std::memcpy(h + 32, &block, 2);
    std::memcpy(h + 34, &bits, 2);
    std::memcpy(h + 36, "data", 4);
    const std::uint32_t data_len = 4;
    std::memcpy(h + 40, &data_len, 4);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite(h, 1, 48, f);
    std::fclose(f);
  };
  write_header(tmp.str("stereo.wav"), 2, 1);
  CHECK_THROWS_AS(read_wav(tmp.str("stereo.wav")), Error);
  write_header(tmp.str("alaw.wav"), 1, 6);
  CHECK_THROWS_AS(read_wav(tmp.str("alaw.wav")), Error);
}

TEST_CASE("synth output is deterministic, peak normalized, and sized by duration") {
  SynthSpec spec;
  spec.kind = SynthKind::harmonic_stack;
  spec.duration_s = 0.5;
  spec.fundamental_hz = 220;
  spec.seed = 5;
  const Waveform a = synth_clean(spec, 16000);
  const Waveform b = synth_clean(spec, 16000);
  CHECK(a.samples == b.samples);
  CHECK(a.size() == 8000);
  CHECK(peak(a.samples) == doctest::Approx(0.85).epsilon(1e-12));
  spec.seed = 6;
  const Waveform c = synth_clean(spec, 16000);
  CHECK(a.samples != c.samples);
}

TEST_CASE("all synth kinds produce finite non-silent audio") {
  for (SynthKind kind : {SynthKind::harmonic_stack, SynthKind::chirp, SynthKind::am_tone}) {
    SynthSpec spec;
    spec.kind = kind;
    spec.duration_s = 0.2;
    spec.fundamental_hz = 200;
    spec.seed = 1;
    const Waveform w = synth_clean(spec, 8000);
    w.validate("test");
    CHECK(energy(w.samples) > 0.0);
  }
}

TEST_CASE("synth rejects degenerate requests") {
  SynthSpec spec;
  spec.duration_s = 0.001;  // shorter than one analysis window
  CHECK_THROWS_AS(synth_clean(spec, 16000), ConfigError);
  spec.duration_s = 0.5;
  spec.fundamental_hz = 9000;  // above Nyquist at 16 kHz
  CHECK_THROWS_AS(synth_clean(spec, 16000), ConfigError);
}

TEST_CASE("overlay_noise hits the requested snr exactly") {
  SynthSpec spec;
  spec.duration_s = 0.5;
  spec.seed = 3;
  const Waveform clean = synth_clean(spec, 16000);
  const Waveform noise = synth_white_noise(clean.size(), 77, 16000);
  for (double snr : {-5.0, 0.0, 5.0, 20.0}) {
    const Waveform noisy = overlay_noise(clean, noise, snr);
    double en = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      const double d = noisy.samples[i] - clean.samples[i];
      en += d * d;
    }
    const double measured = 10.0 * std::log10(energy(clean.samples) / en);
    CHECK(measured == doctest::Approx(snr).epsilon(1e-9));
  }
}

TEST_CASE("overlay_noise tiles short noise and honors the offset") {
  const Waveform clean{std::vector<double>(100, 0.5), 8000};
  const Waveform noise{{1.0, -1.0, 2.0}, 8000};
  const Waveform out = overlay_noise(clean, noise, 0.0, 1);
  // The additive part must repeat with period 3 starting at noise[1].
  const double n0 = out.samples[0] - 0.5;
  const double n3 = out.samples[3] - 0.5;
  CHECK(n0 == doctest::Approx(n3).epsilon(1e-12));
  const double ratio = (out.samples[1] - 0.5) / n0;  // noise[2]/noise[1] = -2
  CHECK(ratio == doctest::Approx(-2.0).epsilon(1e-9));
}

TEST_CASE("overlay_noise rejects silent or mismatched inputs") {
  const Waveform silent{std::vector<double>(100, 0.0), 8000};
  const Waveform noise = synth_white_noise(100, 1, 8000);
  CHECK_THROWS_AS(overlay_noise(silent, noise, 0.0), ConfigError);
  const Waveform other_rate = synth_white_noise(100, 1, 16000);
  const Waveform clean{std::vector<double>(100, 0.5), 8000};
  CHECK_THROWS_AS(overlay_noise(clean, other_rate, 0.0), ConfigError);
}

TEST_CASE("manifest round trips and resolves paths relative to its directory") {
  testutil::TempDir tmp("manifest");
  std::filesystem::create_directories(tmp.path() / "noisy");
  const Waveform w = testutil::random_wave(256, 4, 8000);
  write_wav(w, tmp.str("noisy/a.wav"));

  DatasetManifest m;
  m.sample_rate_hz = 8000;
  ManifestItem item;
  item.id = "a";
  item.split = "test";
  item.noisy = "noisy/a.wav";  // relative on purpose
  m.items.push_back(item);
  save_manifest(m, tmp.str("manifest.json"));

  const DatasetManifest r = load_manifest(tmp.str("manifest.json"));
  REQUIRE(r.items.size() == 1);
  CHECK(r.sample_rate_hz == 8000);
  CHECK(r.items[0].id == "a");
  CHECK(std::filesystem::exists(r.items[0].noisy));
  const Waveform back = read_wav(r.items[0].noisy);
  CHECK(back.size() == 256);
  CHECK(r.split_items("test").size() == 1);
  CHECK(r.split_items("train").empty());
}

TEST_CASE("waveform validate flags bad rates, empty data, and non-finite samples") {
  Waveform w;
  CHECK_THROWS_AS(w.validate("t"), ConfigError);
  w.sample_rate_hz = 8000;
  CHECK_THROWS_AS(w.validate("t"), ConfigError);
  w.samples = {0.0, std::nan("")};
  CHECK_THROWS_AS(w.validate("t"), DataError);
  w.samples = {0.0, 0.1};
  CHECK_NOTHROW(w.validate("t"));
}

TEST_SUITE_END();
