#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ont/waveform.hpp"

namespace ont {

enum class SubsampleMode { random, fixed };

SubsampleMode subsample_mode_from_string(const std::string& s);
std::string to_string(SubsampleMode m);

struct SubsampleConfig {
  int k = 2;  // sampling interval, >= 2
  SubsampleMode mode = SubsampleMode::random;
  std::uint64_t seed = 0;
};

// The recorded draws of one sub-sampler run. Each window of k consecutive
// samples contributes one adjacent offset pair (a, b) with |a - b| = 1;
// offset a feeds the first output, b the second. A map can be re-applied to
// any signal of sufficient length, which is what lets the regularization
// term pick out the same positions from the full-signal network output.
struct SubsampleIndexMap {
  int k = 0;
  std::vector<std::pair<int, int>> offsets;  // (a_w, b_w) per window

  std::size_t n_windows() const { return offsets.size(); }
  void validate() const;
};

// Plans one pair draw for a signal of `length` samples. Trailing samples
// beyond n_windows * k are dropped. Fixed mode always selects (0, 1);
// random mode draws the adjacent position uniformly and assigns sides by a
// fair coin, all from the seeded generator.
SubsampleIndexMap subsample_plan(std::size_t length, const SubsampleConfig& config);

// Extracts the two sub-signals selected by `map` from `w`.
std::pair<Waveform, Waveform> subsample_apply(const SubsampleIndexMap& map,
                                              const Waveform& w);

struct SubsamplePair {
  Waveform s1;
  Waveform s2;
  SubsampleIndexMap map;
};

// plan + apply in one call.
SubsamplePair subsample_pair(const Waveform& x, const SubsampleConfig& config);

}  // namespace ont
