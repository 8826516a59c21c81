#include "fmae/signal.hpp"

#include <cmath>

#include "fmae/errors.hpp"

namespace fmae::signal {

namespace {
constexpr double kTwoPi = 6.283185307179586477;
}

Spectrum dft_1d(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    if (n < 1) throw ParamError("dft_1d: empty input");
    // Only n distinct twiddle angles exist since k*t mod n indexes them;
    // tabulating keeps the angles small and the O(n^2) sum cheap.
    std::vector<double> cos_tab(static_cast<size_t>(n)), sin_tab(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const double angle = kTwoPi * j / n;
        cos_tab[j] = std::cos(angle);
        sin_tab[j] = std::sin(angle);
    }
    Spectrum s;
    s.values.resize(x.size());
    for (int k = 0; k < n; ++k) {
        double re = 0.0, im = 0.0;
        for (int t = 0; t < n; ++t) {
            const int j = static_cast<int>((static_cast<long long>(k) * t) % n);
            re += x[t] * cos_tab[j];
            im -= x[t] * sin_tab[j];
        }
        s.values[k] = {re, im};
    }
    return s;
}

Spectrum fft_shift(const Spectrum& s) {
    if (s.shifted) throw ContractError("fft_shift: spectrum is already shifted");
    const int n = static_cast<int>(s.values.size());
    Spectrum out;
    out.shifted = true;
    out.values.resize(s.values.size());
    const int rot = (n + 1) / 2;  // ceil(n/2)
    for (int i = 0; i < n; ++i) out.values[i] = s.values[(i + rot) % n];
    return out;
}

FrequencyMask laplace_mask(int n, double scale_b) {
    if (n < 1) throw ParamError("laplace_mask: length must be >= 1");
    if (scale_b <= 0.0) throw ParamError("laplace_mask: scale_b must be positive");
    FrequencyMask m;
    m.scale_b = scale_b;
    m.center = n / 2;
    m.values.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        m.values[i] = 1.0 - std::exp(-std::abs(i - m.center) / scale_b);
    return m;
}

Tensor frequency_masked_features(const Tensor& voltage, double scale_b) {
    if (voltage.ndim() != 2)
        throw ShapeError("frequency_masked_features: expected a matrix, got " +
                         shape_str(voltage.shape()));
    const int t_len = voltage.dim(0), n_cells = voltage.dim(1);
    const FrequencyMask mask = laplace_mask(t_len, scale_b);
    Tensor out = Tensor::zeros({t_len, n_cells});
    std::vector<double> column(static_cast<size_t>(t_len));
    for (int c = 0; c < n_cells; ++c) {
        for (int t = 0; t < t_len; ++t) column[t] = voltage.data()[t * n_cells + c];
        const Spectrum shifted = fft_shift(dft_1d(column));
        for (int t = 0; t < t_len; ++t)
            out.data()[t * n_cells + c] = mask.values[t] * std::abs(shifted.values[t]);
    }
    return out;
}

}  // namespace fmae::signal
