#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ont/error.hpp"

namespace ont {

// Mono audio signal. Samples are dimensionless amplitudes, nominally in
// [-1, 1]; everything downstream assumes finite values and a positive rate.
struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 0;

  std::size_t size() const { return samples.size(); }

  void validate(const char* who) const {
    if (sample_rate_hz <= 0)
      throw ConfigError(std::string(who) + ": sample rate must be positive");
    if (samples.empty())
      throw ConfigError(std::string(who) + ": empty waveform");
    for (double v : samples)
      if (!std::isfinite(v))
        throw DataError(std::string(who) + ": non-finite sample");
  }
};

inline double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double peak(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

}  // namespace ont
