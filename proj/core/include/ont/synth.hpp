#pragma once

#include <cstdint>
#include <string>

#include "ont/waveform.hpp"

namespace ont {

enum class SynthKind { harmonic_stack, chirp, am_tone };

SynthKind synth_kind_from_string(const std::string& s);
std::string to_string(SynthKind k);

// Desk-scale stand-in for clean speech recordings. Deterministic per seed.
struct SynthSpec {
  SynthKind kind = SynthKind::harmonic_stack;
  double duration_s = 1.0;
  double fundamental_hz = 220.0;
  std::uint64_t seed = 0;
};

// Generates a clean test signal; peak amplitude <= 0.9. The duration must
// cover at least one default analysis window (64 ms) and the fundamental must
// sit below Nyquist.
Waveform synth_clean(const SynthSpec& spec, int sample_rate_hz);

// Zero-mean unit-variance gaussian noise, deterministic per seed.
Waveform synth_white_noise(std::size_t length, std::uint64_t seed,
                           int sample_rate_hz);

// Tiles or truncates `noise` to the length of `clean`, scales it so the mix
// has the requested SNR w.r.t. `clean`, and returns clean + scaled noise.
// `noise_offset` rotates the tiling start; the default 0 keeps runs
// reproducible from the clip seeds alone.
Waveform overlay_noise(const Waveform& clean, const Waveform& noise,
                       double snr_db, std::size_t noise_offset = 0);

}  // namespace ont
