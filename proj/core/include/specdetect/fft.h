#ifndef SPECDETECT_FFT_H_
#define SPECDETECT_FFT_H_

#include <complex>
#include <span>
#include <vector>

namespace specdetect::fft {

// Real-to-complex forward transform of `input` (length n); returns the
// n/2 + 1 non-negative frequency bins. Unnormalized.
std::vector<std::complex<double>> forward_real(std::span<const double> input);

// Inverse of forward_real for a length-n signal, scaled by 1/n so that
// inverse_real(forward_real(x), n) == x up to rounding.
std::vector<double> inverse_real(std::span<const std::complex<double>> bins, int n);

}  // namespace specdetect::fft

#endif  // SPECDETECT_FFT_H_
