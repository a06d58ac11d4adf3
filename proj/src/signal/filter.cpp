#include "lblm/signal/filter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace lblm::signal {

namespace {

int filter_order(double transition_hz, double fs) {
    if (!(transition_hz > 0)) throw ConfigError("transition width must be positive");
    const double raw = 4.0 * fs / transition_hz;
    int order = static_cast<int>(std::lround(raw / 2.0)) * 2;
    return std::max(order, 2);
}

void check_cutoff(double f, double fs) {
    if (!(f > 0) || f >= fs / 2.0) {
        throw ConfigError("cutoff " + std::to_string(f) + " Hz must lie in (0, " + std::to_string(fs / 2.0) +
                          ") for fs=" + std::to_string(fs));
    }
}

std::vector<double> windowed_sinc(double cutoff_hz, double fs, int order) {
    std::vector<double> h(order + 1);
    const double fc = cutoff_hz / fs;
    const double mid = order / 2.0;
    double sum = 0.0;
    for (int n = 0; n <= order; ++n) {
        const double t = n - mid;
        const double s = t == 0.0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * t) / (kPi * t);
        const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * n / order);
        h[n] = s * w;
        sum += h[n];
    }
    for (double& v : h) v /= sum;
    return h;
}

std::vector<double> spectral_inversion(std::vector<double> h) {
    for (double& v : h) v = -v;
    h[h.size() / 2] += 1.0;
    return h;
}

}  // namespace

std::vector<double> design_lowpass(double cutoff_hz, double transition_hz, double fs) {
    check_cutoff(cutoff_hz, fs);
    return windowed_sinc(cutoff_hz, fs, filter_order(transition_hz, fs));
}

std::vector<double> design_highpass(double cutoff_hz, double transition_hz, double fs) {
    check_cutoff(cutoff_hz, fs);
    return spectral_inversion(windowed_sinc(cutoff_hz, fs, filter_order(transition_hz, fs)));
}

double default_transition(double lo, double hi, double fs) {
    const double lower = std::min(std::max(0.25 * lo, 2.0), lo);
    const double upper = std::min(std::max(0.25 * hi, 2.0), fs / 2.0 - hi);
    return std::min(lower, upper);
}

std::vector<double> design_bandpass(double lo, double hi, double fs) {
    if (!(lo > 0) || !(hi > lo) || hi >= fs / 2.0) {
        throw ConfigError("bandpass requires 0 < lo < hi < fs/2 (got " + std::to_string(lo) + ", " +
                          std::to_string(hi) + " at fs=" + std::to_string(fs) + ")");
    }
    const double tw = default_transition(lo, hi, fs);
    const int order = filter_order(tw, fs);
    const double f1 = lo - tw / 2.0;
    const double f2 = hi + tw / 2.0;
    check_cutoff(f2, fs);
    auto high = windowed_sinc(f2, fs, order);
    if (f1 <= 0) return high;
    auto low = windowed_sinc(f1, fs, order);
    for (std::size_t i = 0; i < high.size(); ++i) high[i] -= low[i];
    return high;
}

std::vector<double> design_notch(const Notch& n, double fs) {
    const double lo = n.f0 - n.half_width;
    const double hi = n.f0 + n.half_width;
    if (!(lo > 0) || hi >= fs / 2.0) {
        throw ConfigError("notch at " + std::to_string(n.f0) + " Hz does not fit below Nyquist " +
                          std::to_string(fs / 2.0));
    }
    // Band-stop: low-pass below the stop band plus high-pass above it.
    const double tw = n.half_width;
    const int order = filter_order(tw, fs);
    auto below = windowed_sinc(lo - tw / 2.0 > 0 ? lo - tw / 2.0 : lo, fs, order);
    auto above = spectral_inversion(windowed_sinc(hi + tw / 2.0, fs, order));
    for (std::size_t i = 0; i < below.size(); ++i) below[i] += above[i];
    return below;
}

std::vector<double> design(const FilterKind& kind, double fs) {
    return std::visit(
        [fs](const auto& k) -> std::vector<double> {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Bandpass>) {
                return design_bandpass(k.lo, k.hi, fs);
            } else {
                return design_notch(k, fs);
            }
        },
        kind);
}

std::vector<double> filter_zero_phase(std::span<const double> x, std::span<const double> taps) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto m = static_cast<std::ptrdiff_t>(taps.size());
    if (m % 2 == 0) throw ConfigError("zero-phase filtering needs an odd tap count");
    if (n == 0) return {};
    const std::ptrdiff_t half = m / 2;
    const std::ptrdiff_t pad = std::min(half, n - 1);

    // Odd reflection about the end samples keeps value and slope continuous.
    std::vector<double> ext(static_cast<std::size_t>(n + 2 * half), 0.0);
    const std::ptrdiff_t off = half;
    for (std::ptrdiff_t i = 0; i < n; ++i) ext[off + i] = x[i];
    for (std::ptrdiff_t i = 1; i <= pad; ++i) {
        ext[off - i] = 2.0 * x[0] - x[i];
        ext[off + n - 1 + i] = 2.0 * x[n - 1] - x[n - 1 - i];
    }

    std::vector<double> y(static_cast<std::size_t>(n));
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        // y[i] = sum_k h[k] * x[i + half - k]
        double acc = 0.0;
        const double* src = ext.data() + i + 2 * half;
        for (std::ptrdiff_t k = 0; k < m; ++k) acc += taps[k] * src[-k];
        y[i] = acc;
    }
    return y;
}

Mat filter_rows(const Mat& x, std::span<const double> taps) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        std::vector<double> row(x.row(r).data(), x.row(r).data() + x.cols());
        auto y = filter_zero_phase(row, taps);
        for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = y[c];
    }
    return out;
}

double magnitude_response(std::span<const double> taps, double f, double fs) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t k = 0; k < taps.size(); ++k) {
        acc += taps[k] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(k) / fs);
    }
    return std::abs(acc);
}

EegRecording fir_filter(const EegRecording& rec, const FilterKind& kind) {
    auto taps = design(kind, rec.fs);
    EegRecording out = rec;
    out.data = filter_rows(rec.data, taps);
    return out;
}

}  // namespace lblm::signal
