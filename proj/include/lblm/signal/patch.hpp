#pragma once

#include "lblm/common.hpp"

#include <span>
#include <vector>

namespace lblm::signal {

// Overlapping patches of one channel. Row i is samples [i·S, i·S + P).
struct PatchSequence {
    Mat patches;
    std::vector<int> start_indices;
    int P = 0;
    int S = 0;

    int count() const { return static_cast<int>(patches.rows()); }
};

// floor((L - P) / S) + 1, or 0 when L < P.
int patch_count(int L, int P, int S);

// Trailing samples past the last full patch are dropped. L < P throws InputTooShortError.
PatchSequence patchify(std::span<const double> x, int P, int S);

// Patchifies every row of a C×L matrix and stacks the results channel-major:
// row c·N + i is patch i of channel c.
Mat patchify_rows(const Mat& x, int P, int S);

// Number of leading samples to drop so that the last patch ends exactly at the
// final sample: (L - P) mod S.
int end_aligned_lead(int L, int P, int S);

}  // namespace lblm::signal
