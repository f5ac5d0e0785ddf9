#include "ont/subsample.hpp"

#include <cstdlib>

#include "ont/rng.hpp"

namespace ont {

SubsampleMode subsample_mode_from_string(const std::string& s) {
  if (s == "random") return SubsampleMode::random;
  if (s == "fixed") return SubsampleMode::fixed;
  throw ConfigError("unknown subsample mode: " + s);
}

std::string to_string(SubsampleMode m) {
  return m == SubsampleMode::random ? "random" : "fixed";
}

void SubsampleIndexMap::validate() const {
  if (k < 2) throw ConfigError("subsample map: k must be >= 2");
  if (offsets.empty()) throw ConfigError("subsample map: no windows");
  for (const auto& [a, b] : offsets) {
    if (a < 0 || b < 0 || a >= k || b >= k)
      throw ConfigError("subsample map: offset outside window");
    if (std::abs(a - b) != 1)
      throw ConfigError("subsample map: offsets not adjacent");
  }
}

SubsampleIndexMap subsample_plan(std::size_t length, const SubsampleConfig& config) {
  if (config.k < 2) throw ConfigError("subsample: k must be >= 2");
  const auto k = static_cast<std::size_t>(config.k);
  if (length < k) throw ConfigError("subsample: signal shorter than one window");

  const std::size_t windows = length / k;
  SubsampleIndexMap map;
  map.k = config.k;
  map.offsets.reserve(windows);

  if (config.mode == SubsampleMode::fixed) {
    map.offsets.assign(windows, {0, 1});
    return map;
  }

  Rng rng(mix_seed(config.seed, 0x73756273));
  for (std::size_t w = 0; w < windows; ++w) {
    const int pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.k - 1)));
    const bool first_is_left = rng.coin();
    if (first_is_left)
      map.offsets.emplace_back(pos, pos + 1);
    else
      map.offsets.emplace_back(pos + 1, pos);
  }
  return map;
}

std::pair<Waveform, Waveform> subsample_apply(const SubsampleIndexMap& map,
                                              const Waveform& w) {
  map.validate();
  const std::size_t need = map.n_windows() * static_cast<std::size_t>(map.k);
  if (w.size() < need)
    throw ConfigError("subsample: signal shorter than map coverage");

  Waveform s1{std::vector<double>(map.n_windows()), w.sample_rate_hz};
  Waveform s2{std::vector<double>(map.n_windows()), w.sample_rate_hz};
  for (std::size_t win = 0; win < map.n_windows(); ++win) {
    const std::size_t base = win * static_cast<std::size_t>(map.k);
    s1.samples[win] = w.samples[base + static_cast<std::size_t>(map.offsets[win].first)];
    s2.samples[win] = w.samples[base + static_cast<std::size_t>(map.offsets[win].second)];
  }
  return {std::move(s1), std::move(s2)};
}

SubsamplePair subsample_pair(const Waveform& x, const SubsampleConfig& config) {
  SubsampleIndexMap map = subsample_plan(x.size(), config);
  auto [s1, s2] = subsample_apply(map, x);
  return {std::move(s1), std::move(s2), std::move(map)};
}

}  // namespace ont
