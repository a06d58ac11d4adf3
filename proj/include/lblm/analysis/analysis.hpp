#pragma once

#include "lblm/signal/types.hpp"

#include <string>
#include <vector>

namespace lblm::analysis {

struct BandDef {
    std::string name;
    double lo;
    double hi;
};

// delta 1-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-50 Hz.
const std::vector<BandDef>& canonical_bands();
const BandDef& band_by_name(const std::string& name);

struct PsdEstimate {
    Vec freqs;  // window_len/2 + 1 bins from 0 to fs/2
    Mat power;  // C×F one-sided density, units²/Hz
    int window_len = 0;
    int overlap = 0;
    double fs = 0.0;
};

// Hann-windowed Welch average of periodograms per channel, density-normalized
// so that the integral over [0, fs/2] approximates the variance.
PsdEstimate welch_psd(const Mat& segment, double fs, int window_len, int overlap);
// 1 s windows, 50% overlap.
PsdEstimate welch_psd(const Mat& segment, double fs);

// Trapezoidal integral over the bins with lo <= f < hi; fewer than two bins
// throws ConfigError.
Vec band_power(const PsdEstimate& psd, const BandDef& band);
// Trapezoidal integral over all bins.
Vec total_power(const PsdEstimate& psd);

// Two-level repeated-measures ANOVA per column. Rows are subjects.
struct AnovaResult {
    Vec F;                        // 0 where degenerate
    std::vector<char> degenerate; // zero within-subject error with a nonzero effect
    int n_subjects = 0;

    // F for one column; throws NumericError when that column is degenerate.
    double at(int column) const;
};
AnovaResult rm_anova_f(const Mat& cond_a, const Mat& cond_b);

// Mean band power over each subject's segments with the given condition:
// one subjects × (C·bands) matrix, column c·B + b. Subjects are returned
// in ascending id order.
struct ConditionPowers {
    std::vector<int> subjects;
    Mat power;
};
ConditionPowers condition_band_powers(const std::vector<signal::TrialSegment>& segments, signal::Condition condition,
                                      const std::vector<BandDef>& bands);

struct FRow {
    std::string comparison;  // "rest:silent"
    int channel = 0;
    std::string band;
    double F = 0.0;
    int n_subjects = 0;
    bool degenerate = false;
};

// Restricted to subjects present under both conditions; fewer than two throws ConfigError.
std::vector<FRow> compare_conditions(const std::vector<signal::TrialSegment>& segments, signal::Condition a,
                                     signal::Condition b, const std::vector<BandDef>& bands = canonical_bands());

std::string f_rows_csv(const std::vector<FRow>& rows);

}  // namespace lblm::analysis
