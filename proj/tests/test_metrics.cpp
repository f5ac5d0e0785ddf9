#include <cmath>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "nlohmann/json.hpp"
#include "ont/metrics.hpp"
#include "ont/synth.hpp"
#include "test_util.hpp"

using namespace ont;
using std::numbers::pi;

namespace {

Waveform tone(double hz, double dur_s, int rate, double amp = 0.5) {
  const auto n = static_cast<std::size_t>(std::llround(dur_s * rate));
  Waveform w{std::vector<double>(n), rate};
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * pi * hz * static_cast<double>(i) / rate);
  return w;
}

Waveform voiced(double dur_s, int rate, std::uint64_t seed) {
  SynthSpec spec;
  spec.kind = SynthKind::harmonic_stack;
  spec.duration_s = dur_s;
  spec.fundamental_hz = 180.0;
  spec.seed = seed;
  return synth_clean(spec, rate);
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("snr matches hand computed cases") {
  Waveform ref{{1.0, 1.0, 1.0, 1.0}, 8000};
  Waveform test = ref;
  for (double& v : test.samples) v += 0.1;
  // 10*log10(4 / (4*0.01)) = 20 dB.
  CHECK(snr_db(ref, test) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(std::isinf(snr_db(ref, ref)));
  CHECK(snr_db(ref, ref) > 0);

  Waveform silent{{0.0, 0.0, 0.0, 0.0}, 8000};
  CHECK_THROWS_AS(snr_db(silent, ref), DataError);
  Waveform shorter{{1.0, 1.0}, 8000};
  CHECK_THROWS_AS(snr_db(ref, shorter), Error);
  Waveform wrong_rate{{1.0, 1.0, 1.0, 1.0}, 4000};
  CHECK_THROWS_AS(snr_db(ref, wrong_rate), Error);
}

TEST_CASE("overlay then snr recovers the requested value") {
  const Waveform clean = voiced(0.6, 16000, 1);
  const Waveform noise = synth_white_noise(clean.size(), 5, 16000);
  for (double target : {-10.0, 0.0, 12.5}) {
    const Waveform noisy = overlay_noise(clean, noise, target);
    CHECK(snr_db(clean, noisy) == doctest::Approx(target).epsilon(1e-9));
  }
}

TEST_CASE("segmental snr clamps to the documented ceiling and floor") {
  const Waveform x = voiced(0.8, 16000, 2);
  CHECK(ssnr_db(x, x) == doctest::Approx(35.0));  // zero residual per frame

  // Massive noise forces every frame to the -10 dB floor.
  Waveform wrecked = x;
  Rng rng(3);
  for (double& v : wrecked.samples) v += rng.gaussian() * 1e4;
  CHECK(ssnr_db(x, wrecked) == doctest::Approx(-10.0));
}

TEST_CASE("segmental snr of a sign flipped tone is about -6 dB") {
  // Residual of -x vs x is -2x: per-frame ratio E/4E = -6.02 dB.
  const Waveform x = tone(440.0, 0.8, 16000);
  Waveform flipped = x;
  for (double& v : flipped.samples) v = -v;
  CHECK(ssnr_db(x, flipped) == doctest::Approx(-10.0 * std::log10(4.0)).epsilon(1e-2));
}

TEST_CASE("segmental snr needs at least one full frame") {
  const Waveform x = tone(440.0, 0.01, 16000);  // 160 samples < one 512-sample frame
  CHECK_THROWS_AS(ssnr_db(x, x), DataError);
}

TEST_CASE("stoi equals one on identical voiced input") {
  for (int rate : {16000, 10000, 8000}) {
    const Waveform x = voiced(1.0, rate, 4);
    CHECK(stoi(x, x) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("stoi decreases when noise increases") {
  const Waveform clean = voiced(1.0, 16000, 6);
  const Waveform noise = synth_white_noise(clean.size(), 7, 16000);
  const double hi = stoi(clean, overlay_noise(clean, noise, 15.0));
  const double lo = stoi(clean, overlay_noise(clean, noise, -5.0));
  CHECK(hi > lo);
  CHECK(hi > 0.8);
  CHECK(lo < 0.7);
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
}

TEST_CASE("stoi rejects too short or silent input") {
  const Waveform x = voiced(0.2, 16000, 8);  // under 30 frames after resampling
  CHECK_THROWS_AS(stoi(x, x), DataError);
  Waveform silent{std::vector<double>(16000, 0.0), 16000};
  CHECK_THROWS_AS(stoi(silent, silent), DataError);
}

TEST_CASE("polyphase resampler preserves a tone through 16k to 10k") {
  const double hz = 440.0;
  const Waveform x = tone(hz, 1.0, 16000);
  const Waveform y = polyphase_resample(x, 10000);
  CHECK(y.sample_rate_hz == 10000);
  // ceil(16000 * 5 / 8) = 10000 output samples for 16000 input samples.
  CHECK(y.size() == 10000);
  // Compare the interior against the ideal resampled tone.
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 500; i + 500 < y.size(); ++i) {
    const double ideal = 0.5 * std::sin(2.0 * pi * hz * static_cast<double>(i) / 10000.0);
    err += (y.samples[i] - ideal) * (y.samples[i] - ideal);
    ref += ideal * ideal;
  }
  CHECK(std::sqrt(err / ref) < 2e-3);
}

TEST_CASE("polyphase resampler is the identity at equal rates") {
  const Waveform x = testutil::random_wave(2000, 9, 10000);
  const Waveform y = polyphase_resample(x, 10000);
  CHECK(y.samples == x.samples);
}

TEST_CASE("polyphase resampler preserves dc when upsampling") {
  Waveform x{std::vector<double>(4000, 0.25), 8000};
  const Waveform y = polyphase_resample(x, 16000);
  CHECK(y.size() == 8000);
  for (std::size_t i = 200; i + 200 < y.size(); ++i)
    CHECK(y.samples[i] == doctest::Approx(0.25).epsilon(1e-3));
}

TEST_CASE("report aggregates mean and sample stddev per strategy") {
  std::vector<ClipMetrics> rows;
  rows.push_back({"a", "ont", "tiny", 8.0, 7.0, 0.8});
  rows.push_back({"b", "ont", "tiny", 10.0, 9.0, 0.9});
  rows.push_back({"a", "noisy", "-", 5.0, 4.0, 0.7});
  const MetricsReport rep = MetricsReport::from_rows(rows);

  const auto& ont_agg = rep.aggregates.at("ont");
  CHECK(ont_agg.at("snr_db").mean == doctest::Approx(9.0));
  CHECK(ont_agg.at("snr_db").stddev == doctest::Approx(std::sqrt(2.0)));  // sample stddev
  CHECK(ont_agg.at("snr_db").count == 2);
  const auto& noisy_agg = rep.aggregates.at("noisy");
  CHECK(noisy_agg.at("snr_db").mean == doctest::Approx(5.0));
  CHECK(noisy_agg.at("snr_db").stddev == 0.0);
}

TEST_CASE("csv and json outputs follow the documented layout") {
  testutil::TempDir tmp("metrics_io");
  std::vector<ClipMetrics> rows;
  rows.push_back({"a", "ont", "tiny", 8.5, 7.25, 0.875});
  rows.push_back({"b", "noisy", "-", std::numeric_limits<double>::infinity(), 35.0, 1.0});
  const MetricsReport rep = MetricsReport::from_rows(rows);
  rep.write_csv(tmp.str("m.csv"));
  rep.write_json(tmp.str("m.json"));

  std::ifstream csv(tmp.str("m.csv"));
  std::string header, line1, line2;
  std::getline(csv, header);
  std::getline(csv, line1);
  std::getline(csv, line2);
  CHECK(header == "clip,strategy,preset,snr_db,ssnr_db,stoi");
  CHECK(line1 == "a,ont,tiny,8.500000,7.250000,0.875000");
  CHECK(line2 == "b,noisy,-,inf,35.000000,1.000000");

  std::ifstream jf(tmp.str("m.json"));
  const auto j = nlohmann::json::parse(jf);
  REQUIRE(j.contains("rows"));
  REQUIRE(j.contains("aggregates"));
  CHECK(j["rows"].size() == 2);
  CHECK(j["rows"][0]["clip"] == "a");
  CHECK(j["aggregates"].contains("ont"));
  CHECK(j["aggregates"].contains("noisy"));
}

TEST_SUITE_END();
