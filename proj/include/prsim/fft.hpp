#pragma once

#include <cstddef>
#include <vector>

#include "prsim/common.hpp"

namespace prsim {

/// In-place DFT. Radix-2 for power-of-two lengths, Bluestein otherwise.
/// Forward is unscaled; inverse is scaled by 1/N.
void fft_inplace(std::vector<cdouble>& data, bool inverse);

std::vector<cdouble> fft(std::vector<cdouble> data);
std::vector<cdouble> ifft(std::vector<cdouble> data);

std::size_t next_pow2(std::size_t n);

/// Frequency of FFT bin k for length n at sample rate fs (negative for k >= n/2).
double bin_frequency(std::size_t k, std::size_t n, double fs);

}  // namespace prsim
