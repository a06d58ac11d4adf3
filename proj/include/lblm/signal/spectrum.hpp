#pragma once

#include "lblm/common.hpp"

#include <span>
#include <vector>

namespace lblm::signal {

// Prediction targets for one patch: the wave itself plus the one-sided DFT
// amplitude |X[k]| and phase arg X[k] for k = 0..floor(P/2). No doubling.
struct SpectroTarget {
    std::vector<double> wave;
    std::vector<double> amplitude;
    std::vector<double> phase;  // in (-pi, pi]
};

inline int num_freq_bins(int P) { return P / 2 + 1; }

SpectroTarget fft_components(std::span<const double> patch);

// Row-wise version for a stack of patches: fills amplitude and phase matrices
// of shape rows × num_freq_bins(cols).
void fft_components_rows(const Mat& patches, Mat& amplitude, Mat& phase);

}  // namespace lblm::signal
