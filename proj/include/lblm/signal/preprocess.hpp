#pragma once

#include "lblm/signal/types.hpp"

#include <vector>

namespace lblm::signal {

// Subtracts the cross-channel mean at every sample. Requires at least 2 channels.
EegRecording average_rereference(const EegRecording& rec);

// Anti-alias low-pass (cutoff 0.45·target_fs) then integer decimation.
// fs must be an integer multiple of target_fs. Trial marks are rescaled.
EegRecording downsample(const EegRecording& rec, double target_fs);

struct EpochConfig {
    double window_s = 2.0;
    double overlap_s = 0.5;
};

// Label-free sliding windows over the whole recording. Shorter-than-window
// recordings give an empty list.
std::vector<TrialSegment> epoch(const EegRecording& rec, const EpochConfig& cfg = {});

// One window per trial mark with the given condition, starting at the mark.
// A window running past the end of the recording throws RangeError.
std::vector<TrialSegment> epoch_trials(const EegRecording& rec, const EpochConfig& cfg = {},
                                       Condition condition = Condition::silent);

struct BandSpec {
    BandTag tag;
    double lo;
    double hi;
};
// raw 1-50, alpha 8-13, beta 13-30, gamma 30-50 Hz.
const std::vector<BandSpec>& mixing_bands();

// For every raw input, emits the raw (1-50 Hz) copy followed by the alpha, beta
// and gamma copies. Labels and identities are preserved.
std::vector<TrialSegment> multiband_mix(const std::vector<TrialSegment>& segments);

}  // namespace lblm::signal
