#include "lblm/signal/preprocess.hpp"

#include "lblm/signal/filter.hpp"

#include <cmath>
#include <map>

namespace lblm::signal {

EegRecording average_rereference(const EegRecording& rec) {
    if (rec.channels() < 2) throw ConfigError("average re-reference needs at least 2 channels");
    EegRecording out = rec;
    RowVec mean = rec.data.colwise().mean();
    out.data.rowwise() -= mean;
    return out;
}

EegRecording downsample(const EegRecording& rec, double target_fs) {
    if (!(target_fs > 0)) throw ConfigError("target sampling rate must be positive");
    const double ratio_f = rec.fs / target_fs;
    const long ratio = std::lround(ratio_f);
    if (ratio < 1 || std::abs(ratio_f - static_cast<double>(ratio)) > 1e-9) {
        throw ConfigError("sampling rate " + std::to_string(rec.fs) + " is not an integer multiple of " +
                          std::to_string(target_fs));
    }
    if (ratio == 1) return rec;

    auto taps = design_lowpass(0.45 * target_fs, 0.1 * target_fs, rec.fs);
    Mat filtered = filter_rows(rec.data, taps);
    const std::int64_t T = rec.samples();
    const std::int64_t out_len = static_cast<std::int64_t>(std::floor(static_cast<double>(T) * target_fs / rec.fs));

    EegRecording out;
    out.fs = target_fs;
    out.subject_id = rec.subject_id;
    out.session_id = rec.session_id;
    out.data.resize(rec.channels(), out_len);
    for (std::int64_t t = 0; t < out_len; ++t) out.data.col(t) = filtered.col(t * ratio);
    for (const auto& m : rec.trial_marks) {
        TrialMark nm = m;
        nm.start = m.start / static_cast<std::uint64_t>(ratio);
        if (static_cast<std::int64_t>(nm.start) < out_len) out.trial_marks.push_back(nm);
    }
    return out;
}

namespace {

std::pair<std::int64_t, std::int64_t> window_and_hop(const EpochConfig& cfg, double fs) {
    if (!(cfg.window_s > 0) || cfg.overlap_s < 0 || cfg.overlap_s >= cfg.window_s) {
        throw ConfigError("epoch window must be positive and overlap must lie in [0, window)");
    }
    const auto win = static_cast<std::int64_t>(std::llround(cfg.window_s * fs));
    const auto hop = static_cast<std::int64_t>(std::llround((cfg.window_s - cfg.overlap_s) * fs));
    return {win, hop};
}

TrialSegment cut(const EegRecording& rec, std::int64_t start, std::int64_t len) {
    TrialSegment s;
    s.data = rec.data.middleCols(start, len);
    s.fs = rec.fs;
    s.subject_id = rec.subject_id;
    s.session_id = rec.session_id;
    return s;
}

}  // namespace

std::vector<TrialSegment> epoch(const EegRecording& rec, const EpochConfig& cfg) {
    auto [win, hop] = window_and_hop(cfg, rec.fs);
    std::vector<TrialSegment> out;
    const std::int64_t T = rec.samples();
    if (T < win) return out;
    const std::int64_t count = (T - win) / hop + 1;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) out.push_back(cut(rec, i * hop, win));
    return out;
}

std::vector<TrialSegment> epoch_trials(const EegRecording& rec, const EpochConfig& cfg, Condition condition) {
    auto [win, hop] = window_and_hop(cfg, rec.fs);
    (void)hop;
    std::vector<TrialSegment> out;
    for (const auto& m : rec.trial_marks) {
        if (m.condition != condition) continue;
        const auto start = static_cast<std::int64_t>(m.start);
        if (start + win > rec.samples()) {
            throw RangeError("trial at sample " + std::to_string(start) + " runs past the end of the recording (" +
                             std::to_string(rec.samples()) + " samples)");
        }
        TrialSegment s = cut(rec, start, win);
        s.word = m.word;
        s.semantic = m.semantic;
        s.condition = m.condition;
        out.push_back(std::move(s));
    }
    return out;
}

const std::vector<BandSpec>& mixing_bands() {
    static const std::vector<BandSpec> bands = {
        {BandTag::raw, 1.0, 50.0},
        {BandTag::alpha, 8.0, 13.0},
        {BandTag::beta, 13.0, 30.0},
        {BandTag::gamma, 30.0, 50.0},
    };
    return bands;
}

std::vector<TrialSegment> multiband_mix(const std::vector<TrialSegment>& segments) {
    std::map<double, std::vector<std::vector<double>>> taps_by_fs;
    std::vector<TrialSegment> out;
    out.reserve(segments.size() * mixing_bands().size());
    for (const auto& seg : segments) {
        if (seg.band != BandTag::raw) throw ConfigError("multiband_mix expects raw-band input segments");
        auto& taps = taps_by_fs[seg.fs];
        if (taps.empty()) {
            for (const auto& b : mixing_bands()) taps.push_back(design_bandpass(b.lo, b.hi, seg.fs));
        }
        for (std::size_t i = 0; i < mixing_bands().size(); ++i) {
            TrialSegment s = seg;
            s.band = mixing_bands()[i].tag;
            s.data = filter_rows(seg.data, taps[i]);
            out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace lblm::signal
