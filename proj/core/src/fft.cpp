#include "ont/fft.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "ont/error.hpp"

namespace ont {
namespace {

// Twiddle factors per size, cached per thread. Tapes on different threads
// never contend and the tables are tiny (largest realistic size is 4096).
const std::vector<std::complex<double>>& twiddles(std::size_t n) {
  thread_local std::unordered_map<std::size_t, std::vector<std::complex<double>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<double>> tw(n / 2);
  for (std::size_t i = 0; i < n / 2; ++i) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    tw[i] = {std::cos(a), std::sin(a)};
  }
  return cache.emplace(n, std::move(tw)).first->second;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw ConfigError("fft: size must be a power of two");
  if (n == 1) return;

  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  const auto& tw = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> w = tw[k * step];
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
      }
    }
  }
}

void ifft_inplace(std::span<std::complex<double>> data) {
  for (auto& v : data) v = std::conj(v);
  fft_inplace(data);
  const double inv = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v = std::conj(v) * inv;
}

std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t fft_len) {
  if (!is_power_of_two(fft_len)) throw ConfigError("rfft: fft length must be a power of two");
  if (x.size() > fft_len) throw ConfigError("rfft: input longer than fft length");
  std::vector<std::complex<double>> buf(fft_len, {0.0, 0.0});
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = {x[i], 0.0};
  fft_inplace(buf);
  buf.resize(fft_len / 2 + 1);
  return buf;
}

}  // namespace ont
