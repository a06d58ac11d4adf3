#include "lblm/signal/patch.hpp"

#include <string>

namespace lblm::signal {

namespace {

void check_geometry(int P, int S) {
    if (P <= 0 || S <= 0) throw ConfigError("patch length and stride must be positive");
}

}  // namespace

int patch_count(int L, int P, int S) {
    check_geometry(P, S);
    if (L < P) return 0;
    return (L - P) / S + 1;
}

PatchSequence patchify(std::span<const double> x, int P, int S) {
    check_geometry(P, S);
    const int L = static_cast<int>(x.size());
    if (L < P) {
        throw InputTooShortError("series of length " + std::to_string(L) + " is shorter than patch length " +
                                 std::to_string(P));
    }
    PatchSequence ps;
    ps.P = P;
    ps.S = S;
    const int n = patch_count(L, P, S);
    ps.patches.resize(n, P);
    ps.start_indices.resize(n);
    for (int i = 0; i < n; ++i) {
        ps.start_indices[i] = i * S;
        for (int j = 0; j < P; ++j) ps.patches(i, j) = x[i * S + j];
    }
    return ps;
}

Mat patchify_rows(const Mat& x, int P, int S) {
    check_geometry(P, S);
    const int L = static_cast<int>(x.cols());
    if (L < P) {
        throw InputTooShortError("series of length " + std::to_string(L) + " is shorter than patch length " +
                                 std::to_string(P));
    }
    const int n = patch_count(L, P, S);
    Mat out(x.rows() * n, P);
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (int i = 0; i < n; ++i) out.row(c * n + i) = x.block(c, static_cast<Eigen::Index>(i) * S, 1, P);
    }
    return out;
}

int end_aligned_lead(int L, int P, int S) {
    check_geometry(P, S);
    if (L < P) throw InputTooShortError("series shorter than one patch");
    return (L - P) % S;
}

}  // namespace lblm::signal
