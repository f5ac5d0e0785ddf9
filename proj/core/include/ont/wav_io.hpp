#pragma once

#include <filesystem>

#include "ont/waveform.hpp"

namespace ont {

enum class WavEncoding { pcm16, float32 };

// Reads a mono RIFF/WAVE file. Accepts 16-bit integer PCM (format tag 1)
// and 32-bit IEEE float (format tag 3); anything else is refused, including
// multi-channel files -- no silent downmix.
// PCM16 samples map to [-1, 1) by division by 32768.
Waveform read_wav(const std::filesystem::path& path);

// Writes a mono WAV file. For pcm16 the samples are clamped to
// [-1, 1 - 2^-15] before quantization so no value can wrap. float32 files
// round-trip bit-exactly through read_wav.
void write_wav(const Waveform& w, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::float32);

}  // namespace ont
