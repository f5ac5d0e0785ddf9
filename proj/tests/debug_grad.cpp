// Interactive gradient-debug probe (not part of the test suite): prints the
// worst finite-difference mismatches with tensor names and sweeps the step
// size, which separates truncation noise (error ~ h^2) from genuine
// analytic-gradient bugs (error independent of h).

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "ont/network.hpp"
#include "ont/rng.hpp"
#include "ont/subsample.hpp"
#include "ont/synth.hpp"
#include "ont/training.hpp"

using namespace ont;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  const double gamma = argc > 2 ? std::strtod(argv[2], nullptr) : 1.0;
  const std::size_t n_coords = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 200;

  ModelConfig mc = ModelConfig::tiny();
  DenoiserModel model(mc);
  model.init_params(seed);

  StftConfig stft_cfg;
  stft_cfg.sample_rate_hz = 16000;
  stft_cfg.validate();

  TrainConfig tc;
  tc.loss.gamma = gamma;

  const std::size_t k = 2;
  const std::size_t sub_len = stft_cfg.window_samples() + 16 * stft_cfg.hop_samples();
  SynthSpec spec;
  spec.duration_s = static_cast<double>(sub_len * k + k) / stft_cfg.sample_rate_hz;
  spec.seed = mix_seed(seed, 0xC11F);
  const Waveform clean = synth_clean(spec, stft_cfg.sample_rate_hz);
  const Waveform x = overlay_noise(
      clean, synth_white_noise(clean.size(), mix_seed(seed, 0x4015E), stft_cfg.sample_rate_hz),
      5.0);

  const std::uint64_t pair_seed = mix_seed(seed, 0x9A12);
  std::vector<std::vector<double>> acc;
  for (const auto& p : model.params()) acc.emplace_back(p.numel(), 0.0);
  ont_step_grads<double>(model, x, tc, stft_cfg, pair_seed, acc);

  SubsampleConfig sc = tc.subsample;
  sc.seed = pair_seed;
  const SubsamplePair pair = subsample_pair(x, sc);
  Waveform g1, g2;
  if (tc.loss.gamma > 0.0) {
    const Waveform g = denoise_waveform_t<double>(model, x, stft_cfg);
    auto split = subsample_apply(pair.map, g);
    g1 = split.first;
    g2 = split.second;
  }

  auto loss_at = [&](DenoiserModel& m) {
    return ont_loss_value<double>(m, pair.s1, pair.s2, g1, g2, tc.loss, stft_cfg);
  };

  struct Record {
    std::size_t ti, off;
    double analytic, fd, rel;
  };
  std::vector<Record> records;

  const std::size_t total = model.scalar_count();
  Rng pick(mix_seed(seed, 0xFD));
  DenoiserModel probe = model;
  for (std::size_t c = 0; c < n_coords; ++c) {
    const std::size_t flat = pick.below(total);
    std::size_t ti = 0, off = flat;
    while (off >= model.params()[ti].numel()) {
      off -= model.params()[ti].numel();
      ++ti;
    }
    const float original = probe.params()[ti].data[off];
    const double h = 1e-5 * std::max(1.0, std::abs(static_cast<double>(original)));
    const float plus = static_cast<float>(original + h);
    const float minus = static_cast<float>(original - h);
    probe.params()[ti].data[off] = plus;
    const double fp = loss_at(probe);
    probe.params()[ti].data[off] = minus;
    const double fm = loss_at(probe);
    probe.params()[ti].data[off] = original;
    const double fd = (fp - fm) / (static_cast<double>(plus) - static_cast<double>(minus));
    const double an = acc[ti][off];
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-5});
    records.push_back({ti, off, an, fd, rel});
  }

  std::sort(records.begin(), records.end(),
            [](const Record& a, const Record& b) { return a.rel > b.rel; });
  std::printf("worst 10 of %zu coords (gamma=%g):\n", n_coords, gamma);
  for (std::size_t i = 0; i < std::min<std::size_t>(10, records.size()); ++i) {
    const auto& r = records[i];
    std::printf("  %-28s[%5zu]  analytic=% .9e  fd=% .9e  rel=%.3e\n",
                model.params()[r.ti].name.c_str(), r.off, r.analytic, r.fd, r.rel);
  }

  // h-sweep on the worst coordinate.
  const auto& w = records.front();
  std::printf("h-sweep on %s[%zu] (analytic=% .9e):\n", model.params()[w.ti].name.c_str(), w.off,
              w.analytic);
  const float original = probe.params()[w.ti].data[w.off];
  for (double h : {1e-3, 1e-4, 1e-5, 3e-6}) {
    const float plus = static_cast<float>(original + h);
    const float minus = static_cast<float>(original - h);
    probe.params()[w.ti].data[w.off] = plus;
    const double fp = loss_at(probe);
    probe.params()[w.ti].data[w.off] = minus;
    const double fm = loss_at(probe);
    probe.params()[w.ti].data[w.off] = original;
    const double fd = (fp - fm) / (static_cast<double>(plus) - static_cast<double>(minus));
    const double rel = std::abs(w.analytic - fd) / std::max({std::abs(w.analytic), std::abs(fd), 1e-5});
    std::printf("  h=%8.1e  fd=% .9e  rel=%.3e\n", h, fd, rel);
  }
  return 0;
}
