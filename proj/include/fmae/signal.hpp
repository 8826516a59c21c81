#pragma once

#include <complex>
#include <vector>

#include "fmae/tensor.hpp"

namespace fmae::signal {

struct Spectrum {
    std::vector<std::complex<double>> values;
    bool shifted = false;

    size_t size() const { return values.size(); }
};

// Per-bin weights in [0,1]: zero at the centered DC bin, rising toward 1 at
// the spectrum edges.
struct FrequencyMask {
    std::vector<double> values;
    double scale_b = 0.0;
    int center = 0;
};

// X[k] = sum_n x[n] * e^{-2*pi*i*k*n/N}. Direct evaluation; N here is small
// and not a power of two, so no FFT machinery is warranted.
Spectrum dft_1d(const std::vector<double>& x);

// Cyclic rotation placing the DC bin at index floor(N/2).
Spectrum fft_shift(const Spectrum& s);

// m[i] = 1 - exp(-|i - floor(N/2)| / scale_b)
FrequencyMask laplace_mask(int n, double scale_b);

// Column-wise masked magnitude spectrum of a T x n_cells voltage matrix:
// per column, |fft_shift(dft(column))| * mask. Output is real, nonnegative,
// same shape as the input, and carries no gradient (fixed preprocessing).
Tensor frequency_masked_features(const Tensor& voltage, double scale_b);

}  // namespace fmae::signal
