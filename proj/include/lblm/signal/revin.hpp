#pragma once

#include "lblm/common.hpp"

#include <utility>

namespace lblm::signal {

// Per-channel statistics over the time axis.
struct RevinStats {
    Vec mu;
    Vec sigma;  // population std, floored at eps
    double eps = 1e-5;
};

// Standardizes each row of a C×L matrix. Constant rows map to zeros.
std::pair<Mat, RevinStats> revin_normalize(const Mat& seg, double eps = 1e-5);
// Inverse map; pred must have one row per channel in stats.
Mat revin_denormalize(const Mat& pred, const RevinStats& stats);

}  // namespace lblm::signal
