#include "ont/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace ont {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t pos = 0;
  const std::filesystem::path& path;

  void need(std::size_t k) const {
    if (pos + k > n) throw DataError("truncated WAV file: " + path.string());
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  bool tag(const char* t) {
    need(4);
    bool ok = std::memcmp(p + pos, t, 4) == 0;
    pos += 4;
    return ok;
  }
};

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());

  Reader r{bytes.data(), bytes.size(), 0, path};
  if (!r.tag("RIFF")) throw DataError("not a RIFF file: " + path.string());
  r.u32();  // declared riff size; trust the actual byte count instead
  if (!r.tag("WAVE")) throw DataError("not a WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  Waveform w;

  while (r.pos + 8 <= r.n) {
    char id[4];
    r.need(4);
    std::memcpy(id, r.p + r.pos, 4);
    r.pos += 4;
    std::uint32_t size = r.u32();
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::size_t next = r.pos + size + (size & 1);
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      have_fmt = true;
      r.pos = next;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw DataError("WAV data chunk before fmt: " + path.string());
      if (channels != 1)
        throw DataError("only mono WAV is supported (got " +
                        std::to_string(channels) + " channels): " + path.string());
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32)
        throw DataError("unsupported WAV encoding (format " + std::to_string(format) +
                        ", " + std::to_string(bits) + " bit): " + path.string());
      r.need(size);
      const std::size_t bytes_per = pcm16 ? 2 : 4;
      const std::size_t count = size / bytes_per;
      w.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* s = r.p + r.pos + i * bytes_per;
        if (pcm16) {
          std::int16_t v = static_cast<std::int16_t>(s[0] | (s[1] << 8));
          w.samples[i] = static_cast<double>(v) / 32768.0;
        } else {
          std::uint32_t u = 0;
          for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(s[k]) << (8 * k);
          float f;
          std::memcpy(&f, &u, 4);
          w.samples[i] = static_cast<double>(f);
        }
      }
      w.sample_rate_hz = static_cast<int>(rate);
      w.validate("read_wav");
      return w;
    } else {
      // Skip unknown chunks (LIST, fact, ...). Chunks are word-aligned.
      r.pos += size + (size & 1);
    }
  }
  throw DataError("WAV file has no data chunk: " + path.string());
}

void write_wav(const Waveform& w, const std::filesystem::path& path, WavEncoding encoding) {
  w.validate("write_wav");
  const bool pcm16 = encoding == WavEncoding::pcm16;
  const std::uint32_t bytes_per = pcm16 ? 2 : 4;
  const std::uint32_t data_size = static_cast<std::uint32_t>(w.size()) * bytes_per;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  for (char c : {'R', 'I', 'F', 'F'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 36 + data_size);
  for (char c : {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 16);
  put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * bytes_per);
  put_u16(out, static_cast<std::uint16_t>(bytes_per));
  put_u16(out, pcm16 ? 16 : 32);
  for (char c : {'d', 'a', 't', 'a'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, data_size);

  for (double v : w.samples) {
    if (pcm16) {
      const double clamped = std::clamp(v, -1.0, 1.0 - std::exp2(-15));
      const auto q = static_cast<std::int16_t>(std::lrint(clamped * 32768.0));
      put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    }
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace ont
