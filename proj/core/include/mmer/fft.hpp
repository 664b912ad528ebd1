#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace mmer::dsp {

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& x, bool inverse = false);

// Real-input FFT returning bins 0..n/2 (inclusive); n must be a power of two.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

size_t next_pow2(size_t n);

// Full linear convolution, length a+b-1. The direct form is the oracle
// route; fft_convolve must agree with it to ~1e-6 relative.
std::vector<double> direct_convolve(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b);

// Picks the FFT route above a size threshold, direct form below.
std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mmer::dsp
