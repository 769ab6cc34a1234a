#pragma once

#include "freqlens/errors.hpp"
#include "freqlens/filter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace freqlens {

// Real signal sampled uniformly on [a, b): values[j] = y(a + j*(b-a)/N).
struct UniformSignal {
    std::vector<double> values;
    double domain_start = 0.0;
    double domain_end = 1.0;

    std::size_t size() const { return values.size(); }
    double length() const { return domain_end - domain_start; }
    double spacing() const { return length() / static_cast<double>(values.size()); }

    void validate() const {
        if (values.size() < 2) throw invalid_parameter_error("uniform signal needs N >= 2 samples");
        if (!(domain_end > domain_start)) throw invalid_parameter_error("uniform signal needs b > a");
        for (const double v : values) {
            if (!std::isfinite(v)) throw invalid_parameter_error("uniform signal has non-finite samples");
        }
    }

    static UniformSignal sample(const std::function<double(double)>& fn, double a, double b, std::size_t n) {
        UniformSignal s;
        s.domain_start = a;
        s.domain_end = b;
        s.values.resize(n);
        const double h = (b - a) / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) s.values[j] = fn(a + h * static_cast<double>(j));
        s.validate();
        return s;
    }
};

// One two-sided spectrum bin: angular frequency and complex amplitude. Bins
// are kept in DFT index order m = 0..N-1; the attached frequency folds
// m > N/2 to the negative side.
struct FrequencyBin {
    double k = 0.0;
    std::complex<double> amplitude;
};

// Indicator split of the spectrum at |k| <= k0.
struct SpectrumCut {
    double k0 = 0.0;
    double low_power = 0.0;
    double total_power = 0.0;
};

// Direct O(N^2) discrete Fourier transform. Phases are reduced modulo N in
// exact integer arithmetic before the trig evaluation, which keeps Parseval
// tight even for large N.
inline std::vector<FrequencyBin> dft_1d(const UniformSignal& signal) {
    signal.validate();
    const std::size_t n = signal.size();
    std::vector<FrequencyBin> bins(n);

    for (std::size_t m = 0; m < n; ++m) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t phase_idx = (j * m) % n;
            const double angle = -2.0 * M_PI * static_cast<double>(phase_idx) / static_cast<double>(n);
            acc += signal.values[j] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        const double folded = (m <= n / 2) ? static_cast<double>(m)
                                           : static_cast<double>(m) - static_cast<double>(n);
        bins[m].k = 2.0 * M_PI * folded / signal.length();
        bins[m].amplitude = acc;
    }
    return bins;
}

// Inverse of dft_1d; bins must be in DFT index order.
inline std::vector<double> inverse_dft_1d(const std::vector<FrequencyBin>& bins) {
    const std::size_t n = bins.size();
    if (n < 2) throw invalid_parameter_error("inverse DFT needs N >= 2 bins");
    std::vector<double> values(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            const std::size_t phase_idx = (j * m) % n;
            const double angle = 2.0 * M_PI * static_cast<double>(phase_idx) / static_cast<double>(n);
            acc += bins[m].amplitude * std::complex<double>(std::cos(angle), std::sin(angle));
        }
        values[j] = acc.real() / static_cast<double>(n);
    }
    return values;
}

inline SpectrumCut spectrum_cut(const UniformSignal& signal, double k0) {
    if (!(k0 >= 0.0) || !std::isfinite(k0)) {
        throw invalid_parameter_error("spectrum cut: k0 must be nonnegative finite");
    }
    SpectrumCut cut;
    cut.k0 = k0;
    for (const auto& bin : dft_1d(signal)) {
        const double power = std::norm(bin.amplitude);
        cut.total_power += power;
        if (std::abs(bin.k) <= k0) cut.low_power += power;
    }
    return cut;
}

// Exact LFR on a 1-d uniform grid: the indicator-cutoff power ratio
// sum_{|k| <= k0} |y_hat(k)|^2 / sum_k |y_hat(k)|^2.
inline double exact_lfr(const UniformSignal& signal, double k0) {
    const SpectrumCut cut = spectrum_cut(signal, k0);
    if (!(cut.total_power > 0.0)) {
        throw undefined_ratio_error("exact LFR undefined: signal has zero power");
    }
    return cut.low_power / cut.total_power;
}

// Multiplies each Fourier amplitude by exp(-delta k^2 / 2) -- the transform
// of the unit-mass Gaussian with spatial variance delta -- and inverts.
inline UniformSignal spectral_low_pass(const UniformSignal& signal, double delta) {
    signal.validate();
    detail::require_delta(delta);
    auto bins = dft_1d(signal);
    for (auto& bin : bins) {
        bin.amplitude *= std::exp(-delta * bin.k * bin.k / 2.0);
    }
    UniformSignal out = signal;
    out.values = inverse_dft_1d(bins);
    return out;
}

// Runs the spatial-domain Gaussian filter (unnormalized kernel sums rescaled
// by the analytic Gaussian mass h/sqrt(2 pi delta), distances wrapped
// periodically to match the DFT's periodic extension) against
// spectral_low_pass, and returns the relative L2 discrepancy
// ||spatial - spectral|| / ||spectral||.
//
// The smoother's per-row normalization C_i is deliberately absent here: the
// convolution theorem holds for the plain convolution only.
inline double compare_filter_vs_spectral(const UniformSignal& signal, double delta) {
    signal.validate();
    detail::require_delta(delta);
    const std::size_t n = signal.size();
    const double h = signal.spacing();
    const double mass_scale = h / std::sqrt(2.0 * M_PI * delta);

    // Kernel depends only on the circular index distance.
    std::vector<double> kernel(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double wrapped = h * static_cast<double>(std::min(t, n - t));
        kernel[t] = gaussian_kernel_weight(wrapped * wrapped, delta);
    }

    const UniformSignal spectral = spectral_low_pass(signal, delta);

    double diff_sq = 0.0;
    double ref_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t t = i >= j ? i - j : j - i;
            acc += signal.values[j] * kernel[t];
        }
        const double spatial = mass_scale * acc;
        const double d = spatial - spectral.values[i];
        diff_sq += d * d;
        ref_sq += spectral.values[i] * spectral.values[i];
    }
    if (ref_sq == 0.0) return diff_sq == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(diff_sq / ref_sq);
}

}  // namespace freqlens
