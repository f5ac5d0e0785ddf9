#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ont {

// In-place iterative radix-2 FFT, power-of-two sizes only. Unnormalized:
// forward computes X_f = sum_n x_n e^{-2pi i f n / N}; inverse undoes it
// including the 1/N factor.
void fft_inplace(std::span<std::complex<double>> data);
void ifft_inplace(std::span<std::complex<double>> data);

// One-sided real-input transform: returns bins 0..N/2 of the unnormalized
// DFT of `x` zero-padded to `fft_len` (power of two, >= x.size()).
std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t fft_len);

bool is_power_of_two(std::size_t n);

}  // namespace ont
