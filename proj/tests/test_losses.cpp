#include <cmath>

#include "doctest.h"
#include "ont/losses.hpp"
#include "ont/stft.hpp"
#include "ont/subsample.hpp"
#include "ont/synth.hpp"
#include "test_util.hpp"

using namespace ont;
using testutil::random_vec;
using testutil::random_wave;

namespace {

StftConfig cfg_4k() {
  StftConfig cfg;
  cfg.sample_rate_hz = 4000;
  return cfg;
}

// Packs a spectrogram the way the training graph lays it out: [2, F, T].
std::vector<double> pack_spec(const ComplexSpectrogram& s) {
  std::vector<double> v(2 * s.re.size());
  std::copy(s.re.begin(), s.re.end(), v.begin());
  std::copy(s.im.begin(), s.im.end(), v.begin() + s.re.size());
  return v;
}

double sabs(double v) { return std::sqrt(v * v + kLossEps * kLossEps); }

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("loss_time is the mean squared error") {
  const Waveform a = random_wave(500, 1, 4000);
  const Waveform b = random_wave(500, 2, 4000);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.samples[i] - b.samples[i];
    acc += d * d;
  }
  CHECK(loss_time(a, b) == doctest::Approx(acc / 500.0).epsilon(1e-12));
  CHECK(loss_time(a, a) == 0.0);
}

TEST_CASE("loss_freq matches a hand loop over smoothed magnitude sums") {
  const Waveform a = random_wave(1000, 3, 4000);
  const Waveform b = random_wave(1000, 4, 4000);
  const auto sa = stft(a, cfg_4k()), sb = stft(b, cfg_4k());
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.re.size(); ++i) {
    const double ma = sabs(sa.re[i]) + sabs(sa.im[i]);
    const double mb = sabs(sb.re[i]) + sabs(sb.im[i]);
    acc += sabs(ma - mb);
  }
  acc /= static_cast<double>(sa.re.size());
  CHECK(loss_freq(sa, sb) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("loss_freq takes the magnitude of the difference, not the difference of sums") {
  // Construct two one-bin spectrograms where the target sum is smaller than
  // the estimate sum; without the outer absolute value the loss would go
  // negative.
  ComplexSpectrogram a, b;
  a.n_bins = b.n_bins = 1;
  a.n_frames = b.n_frames = 1;
  a.re = {0.1};
  a.im = {0.0};
  b.re = {2.0};
  b.im = {1.0};
  const double v = loss_freq(a, b);
  CHECK(v > 0.0);
  CHECK(v == doctest::Approx(sabs(sabs(0.1) + sabs(0.0) - sabs(2.0) - sabs(1.0))));
}

TEST_CASE("loss_wsdr reaches its extremes on the documented constructions") {
  const Waveform x = random_wave(400, 5, 4000);
  const Waveform y = random_wave(400, 6, 4000);
  // Perfect estimate: y_hat == y gives -1.
  CHECK(loss_wsdr(x, y, y) == doctest::Approx(-1.0).epsilon(1e-9));
  // Zero mixture with y_hat == -y gives +1.
  Waveform zero{std::vector<double>(400, 0.0), 4000};
  Waveform neg_y = y;
  for (double& v : neg_y.samples) v = -v;
  CHECK(loss_wsdr(zero, y, neg_y) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("loss_wsdr stays inside [-1, 1] on random triples") {
  for (int i = 0; i < 200; ++i) {
    const Waveform x = random_wave(64, 100 + i, 4000);
    const Waveform y = random_wave(64, 300 + i, 4000);
    const Waveform yh = random_wave(64, 500 + i, 4000);
    const double v = loss_wsdr(x, y, yh);
    CHECK(v >= -1.0 - 1e-12);
    CHECK(v <= 1.0 + 1e-12);
  }
}

TEST_CASE("loss_wsdr weighting follows the energy split") {
  // When x = y + n with n orthogonal-ish, alpha = |y|^2 / (|y|^2 + |n|^2).
  const Waveform y = random_wave(1000, 7, 4000);
  const Waveform n = random_wave(1000, 8, 4000);
  Waveform x{std::vector<double>(1000), 4000};
  for (std::size_t i = 0; i < 1000; ++i) x.samples[i] = y.samples[i] + n.samples[i];
  const Waveform yh = random_wave(1000, 9, 4000);

  const double ey = energy(y.samples) + kLossEps * kLossEps;
  const double en = energy(n.samples) + kLossEps * kLossEps;
  const double alpha = ey / (ey + en);
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) num += a[i] * b[i];
    double na = kLossEps * kLossEps, nb = kLossEps * kLossEps;
    for (double v : a) na += v * v;
    for (double v : b) nb += v * v;
    return num / std::sqrt(na * nb);
  };
  std::vector<double> noise_hat(1000);
  for (std::size_t i = 0; i < 1000; ++i) noise_hat[i] = x.samples[i] - yh.samples[i];
  const double expect =
      -alpha * cosine(y.samples, yh.samples) - (1.0 - alpha) * cosine(n.samples, noise_hat);
  CHECK(loss_wsdr(x, y, yh) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("loss_reg is zero exactly under an identity denoiser") {
  for (int i = 0; i < 20; ++i) {
    const Waveform x = random_wave(512, 40 + i, 4000);
    SubsampleConfig sc;
    sc.k = 2 + (i % 3);
    sc.seed = static_cast<std::uint64_t>(i);
    const SubsamplePair p = subsample_pair(x, sc);
    // Identity denoiser: f(s1) = s1 and the full pass g = x, so the stored
    // map applied to g reproduces (s1, s2).
    const auto [g1, g2] = subsample_apply(p.map, x);
    LossWeights w;
    CHECK(loss_reg(p.s1, p.s2, g1, g2, w) == 0.0);
  }
}

TEST_CASE("loss_reg is the plain sum of squared residuals") {
  const Waveform f1 = random_wave(300, 50, 4000);
  const Waveform s2 = random_wave(300, 51, 4000);
  const Waveform g1 = random_wave(300, 52, 4000);
  const Waveform g2 = random_wave(300, 53, 4000);
  double acc = 0.0;
  for (std::size_t i = 0; i < 300; ++i) {
    const double r = (f1.samples[i] - s2.samples[i]) - (g1.samples[i] - g2.samples[i]);
    acc += r * r;
  }
  LossWeights w;
  CHECK(loss_reg(f1, s2, g1, g2, w) == doctest::Approx(acc).epsilon(1e-12));
  w.reg_length_normalized = true;
  CHECK(loss_reg(f1, s2, g1, g2, w) == doctest::Approx(acc / 300.0).epsilon(1e-12));
}

TEST_CASE("loss_basic combines the parts with the configured weights") {
  const Waveform x = random_wave(1000, 60, 4000);
  const Waveform y = random_wave(1000, 61, 4000);
  const Waveform yh = random_wave(1000, 62, 4000);
  const auto sy = stft(y, cfg_4k()), syh = stft(yh, cfg_4k());
  LossWeights w;
  w.alpha = 0.8;
  w.beta = 1.0 / 200.0;
  const double expect = (w.alpha * loss_freq(sy, syh) + (1.0 - w.alpha) * loss_time(y, yh)) *
                            w.beta + loss_wsdr(x, y, yh);
  CHECK(loss_basic(x, y, yh, sy, syh, w) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss_total adds the weighted regularizer") {
  LossWeights w;
  w.gamma = 2.5;
  CHECK(loss_total(0.25, 0.5, w) == doctest::Approx(1.5).epsilon(1e-12));
  w.gamma = 0.0;
  CHECK(loss_total(0.25, 0.5, w) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(loss_total(std::nan(""), 0.0, w), Error);
}

TEST_CASE("weights validate their documented ranges") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.alpha = 1.5;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.beta = 0.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
  w = LossWeights{};
  w.gamma = -0.1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("tape losses agree with the plain implementations") {
  const Waveform x = random_wave(800, 70, 4000);
  const Waveform y = random_wave(800, 71, 4000);
  const Waveform yh = random_wave(800, 72, 4000);
  const auto sy = stft(y, cfg_4k()), syh = stft(yh, cfg_4k());

  Tape<double> t;
  auto vx = t.leaf({800}, std::vector<double>(x.samples));
  auto vy = t.leaf({800}, std::vector<double>(y.samples));
  auto vyh = t.leaf({800}, std::vector<double>(yh.samples));
  auto vsy = t.leaf({2, sy.n_bins, sy.n_frames}, pack_spec(sy));
  auto vsyh = t.leaf({2, sy.n_bins, sy.n_frames}, pack_spec(syh));

  CHECK(loss_time_t(vy, vyh).val()[0] == doctest::Approx(loss_time(y, yh)).epsilon(1e-12));
  CHECK(loss_freq_t(vsy, vsyh).val()[0] == doctest::Approx(loss_freq(sy, syh)).epsilon(1e-12));
  CHECK(loss_wsdr_t(vx, vy, vyh).val()[0] ==
        doctest::Approx(loss_wsdr(x, y, yh)).epsilon(1e-10));

  LossWeights w;
  auto basic = loss_basic_t(vx, vy, vyh, vsy, vsyh, w);
  CHECK(basic.val()[0] == doctest::Approx(loss_basic(x, y, yh, sy, syh, w)).epsilon(1e-10));

  const Waveform g1 = random_wave(800, 73, 4000);
  const Waveform g2 = random_wave(800, 74, 4000);
  auto vg1 = t.leaf({800}, std::vector<double>(g1.samples));
  auto vg2 = t.leaf({800}, std::vector<double>(g2.samples));
  auto reg = loss_reg_t(vyh, vy, vg1, vg2, w);
  CHECK(reg.val()[0] == doctest::Approx(loss_reg(yh, y, g1, g2, w)).epsilon(1e-10));

  auto total = loss_total_t(basic, reg, w);
  CHECK(total.val()[0] ==
        doctest::Approx(loss_basic(x, y, yh, sy, syh, w) + w.gamma * loss_reg(yh, y, g1, g2, w))
            .epsilon(1e-10));
}

TEST_CASE("tape wsdr gradient matches finite differences") {
  const auto y0 = random_vec(60, 75, -0.8, 0.8);
  CHECK(testutil::check_tape_grad([](Tape<double>& t, Var<double> yh) {
          auto x = t.leaf({60}, random_vec(60, 76, -0.8, 0.8));
          auto y = t.leaf({60}, random_vec(60, 77, -0.8, 0.8));
          return loss_wsdr_t(x, y, yh);
        }, y0, {60}) < 1e-6);
}

TEST_CASE("tape reg gradient flows only through the estimate argument") {
  Tape<double> t;
  const auto f0 = random_vec(50, 78);
  auto f1 = t.leaf({50}, std::vector<double>(f0));
  auto s2 = t.leaf({50}, random_vec(50, 79));
  auto g1 = t.leaf({50}, random_vec(50, 80));
  auto g2 = t.leaf({50}, random_vec(50, 81));
  LossWeights w;
  auto reg = loss_reg_t(f1, s2, detach(g1), detach(g2), w);
  t.backward(reg);
  // d/df1 of sum((f1 - s2 - (g1 - g2))^2) = 2 * residual.
  for (std::size_t i = 0; i < 50; ++i) {
    const double resid = (f1.val()[i] - s2.val()[i]) - (g1.val()[i] - g2.val()[i]);
    CHECK(f1.grad()[i] == doctest::Approx(2.0 * resid).epsilon(1e-12));
  }
  for (double g : g1.grad()) CHECK(g == 0.0);
  for (double g : g2.grad()) CHECK(g == 0.0);
}

TEST_SUITE_END();
