#include "lblm/signal/spectrum.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>

namespace lblm::signal {

namespace {

// Cached real-to-complex plan for one transform length.
class R2CPlan {
public:
    explicit R2CPlan(int n) : n_(n) {
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
        plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    }
    ~R2CPlan() {
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    R2CPlan(const R2CPlan&) = delete;
    R2CPlan& operator=(const R2CPlan&) = delete;

    // Writes amplitude/phase of the one-sided spectrum of x (length n).
    template <typename Src, typename Dst>
    void run(const Src& x, Dst amp, Dst ph) {
        for (int i = 0; i < n_; ++i) in_[i] = x[i];
        fftw_execute(plan_);
        for (int k = 0; k <= n_ / 2; ++k) {
            const double re = out_[k][0];
            const double im = out_[k][1];
            amp[k] = std::hypot(re, im);
            double p = std::atan2(im, re);
            if (p <= -kPi) p = kPi;
            ph[k] = p;
        }
    }

private:
    int n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan plan_;
};

R2CPlan& plan_for(int n) {
    thread_local std::map<int, std::unique_ptr<R2CPlan>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<R2CPlan>(n);
    return *slot;
}

}  // namespace

SpectroTarget fft_components(std::span<const double> patch) {
    const int P = static_cast<int>(patch.size());
    if (P < 2) throw ConfigError("fft_components needs at least 2 samples");
    SpectroTarget t;
    t.wave.assign(patch.begin(), patch.end());
    t.amplitude.resize(num_freq_bins(P));
    t.phase.resize(num_freq_bins(P));
    plan_for(P).run(patch, t.amplitude.data(), t.phase.data());
    return t;
}

void fft_components_rows(const Mat& patches, Mat& amplitude, Mat& phase) {
    const int P = static_cast<int>(patches.cols());
    if (P < 2) throw ConfigError("fft_components needs at least 2 samples");
    const int K = num_freq_bins(P);
    amplitude.resize(patches.rows(), K);
    phase.resize(patches.rows(), K);
    auto& plan = plan_for(P);
    for (Eigen::Index r = 0; r < patches.rows(); ++r) {
        plan.run(patches.row(r).data(), amplitude.row(r).data(), phase.row(r).data());
    }
}

}  // namespace lblm::signal
