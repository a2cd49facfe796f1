#pragma once

#include <complex>
#include <vector>

namespace sagnac::fft {

/// Real-to-complex forward FFT; returns n/2+1 bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

/// Complex-to-real inverse FFT, normalized so irfft(rfft(x), n) == x.
std::vector<double> irfft(const std::vector<std::complex<double>>& spec, std::size_t n);

/// Circular convolution of two equal-length real sequences.
std::vector<double> circular_convolve(const std::vector<double>& a,
                                      const std::vector<double>& b);

}  // namespace sagnac::fft
