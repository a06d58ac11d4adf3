#include "lblm/analysis/analysis.hpp"

#include <fftw3.h>

#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

namespace lblm::analysis {

const std::vector<BandDef>& canonical_bands() {
    static const std::vector<BandDef> bands = {
        {"delta", 1.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}, {"gamma", 30.0, 50.0}};
    return bands;
}

const BandDef& band_by_name(const std::string& name) {
    for (const auto& b : canonical_bands()) {
        if (b.name == name) return b;
    }
    throw ConfigError("unknown band '" + name + "'");
}

namespace {

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

}  // namespace

PsdEstimate welch_psd(const Mat& segment, double fs, int window_len, int overlap) {
    if (!(fs > 0)) throw ConfigError("sampling rate must be positive");
    if (window_len < 2) throw ConfigError("Welch window must hold at least 2 samples");
    if (window_len > segment.cols()) {
        throw ConfigError("Welch window of " + std::to_string(window_len) + " exceeds segment length " +
                          std::to_string(segment.cols()));
    }
    if (overlap < 0 || overlap >= window_len) throw ConfigError("overlap must lie in [0, window_len)");
    const int n = window_len;
    const int F = n / 2 + 1;
    const int step = n - overlap;
    const int L = static_cast<int>(segment.cols());
    const int n_windows = (L - n) / step + 1;

    // Periodic Hann window.
    Vec w(n);
    for (int i = 0; i < n; ++i) w(i) = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
    const double scale = 1.0 / (fs * w.squaredNorm() * n_windows);

    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<fftw_complex> out(static_cast<std::size_t>(F));
    std::unique_ptr<fftw_plan_s, PlanDeleter> plan(
        fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE));

    PsdEstimate est;
    est.window_len = n;
    est.overlap = overlap;
    est.fs = fs;
    est.freqs.resize(F);
    for (int k = 0; k < F; ++k) est.freqs(k) = fs * k / n;
    est.power = Mat::Zero(segment.rows(), F);
    for (Eigen::Index c = 0; c < segment.rows(); ++c) {
        for (int s = 0; s < n_windows; ++s) {
            const auto seg = segment.row(c).segment(static_cast<Eigen::Index>(s) * step, n);
            const double mean = seg.mean();
            for (int i = 0; i < n; ++i) in[i] = (seg(i) - mean) * w(i);
            fftw_execute(plan.get());
            for (int k = 0; k < F; ++k) {
                const double p = out[k][0] * out[k][0] + out[k][1] * out[k][1];
                // One-sided: double everything except DC and (even n) Nyquist.
                const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
                est.power(c, k) += (edge ? 1.0 : 2.0) * p * scale;
            }
        }
    }
    return est;
}

PsdEstimate welch_psd(const Mat& segment, double fs) {
    const int n = static_cast<int>(std::lround(fs));
    return welch_psd(segment, fs, n, n / 2);
}

namespace {

Vec trapezoid(const PsdEstimate& psd, int k0, int k1) {
    Vec out = Vec::Zero(psd.power.rows());
    for (int k = k0; k + 1 <= k1; ++k) {
        const double df = psd.freqs(k + 1) - psd.freqs(k);
        out += 0.5 * df * (psd.power.col(k) + psd.power.col(k + 1));
    }
    return out;
}

}  // namespace

Vec band_power(const PsdEstimate& psd, const BandDef& band) {
    if (!(band.lo >= 0) || !(band.hi > band.lo) || band.hi > psd.fs / 2.0 + 1e-9) {
        throw ConfigError("band " + band.name + " must lie within [0, fs/2]");
    }
    int k0 = -1, k1 = -1;
    for (int k = 0; k < psd.freqs.size(); ++k) {
        if (psd.freqs(k) >= band.lo && psd.freqs(k) < band.hi) {
            if (k0 < 0) k0 = k;
            k1 = k;
        }
    }
    if (k0 < 0 || k1 == k0) throw ConfigError("band " + band.name + " covers fewer than two frequency bins");
    return trapezoid(psd, k0, k1);
}

Vec total_power(const PsdEstimate& psd) { return trapezoid(psd, 0, static_cast<int>(psd.freqs.size()) - 1); }

double AnovaResult::at(int column) const {
    if (column < 0 || column >= F.size()) throw RangeError("ANOVA column out of range");
    if (degenerate[static_cast<std::size_t>(column)]) {
        throw NumericError("degenerate variance: within-subject error is zero in column " + std::to_string(column));
    }
    return F(column);
}

AnovaResult rm_anova_f(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("conditions must cover the same subjects and columns");
    const auto n = a.rows();
    if (n < 2) throw ConfigError("repeated-measures ANOVA needs at least 2 subjects");
    AnovaResult r;
    r.n_subjects = static_cast<int>(n);
    r.F = Vec::Zero(a.cols());
    r.degenerate.assign(static_cast<std::size_t>(a.cols()), 0);
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double ma = a.col(c).mean();
        const double mb = b.col(c).mean();
        const double grand = 0.5 * (ma + mb);
        double ss_cond = static_cast<double>(n) * ((ma - grand) * (ma - grand) + (mb - grand) * (mb - grand));
        double ss_err = 0.0;
        double ss_total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double subj = 0.5 * (a(i, c) + b(i, c));
            const double ea = a(i, c) - subj - ma + grand;
            const double eb = b(i, c) - subj - mb + grand;
            ss_err += ea * ea + eb * eb;
            ss_total += (a(i, c) - grand) * (a(i, c) - grand) + (b(i, c) - grand) * (b(i, c) - grand);
        }
        const double tiny = 1e-24 * std::max(1.0, ss_total);
        if (ss_err <= tiny) {
            if (ss_cond > tiny) r.degenerate[static_cast<std::size_t>(c)] = 1;
            continue;
        }
        const double ms_cond = ss_cond / 1.0;
        const double ms_err = ss_err / static_cast<double>(n - 1);
        r.F(c) = ms_cond / ms_err;
    }
    return r;
}

ConditionPowers condition_band_powers(const std::vector<signal::TrialSegment>& segments, signal::Condition condition,
                                      const std::vector<BandDef>& bands) {
    std::map<int, std::pair<Vec, int>> acc;
    const auto B = static_cast<Eigen::Index>(bands.size());
    Eigen::Index C = -1;
    for (const auto& s : segments) {
        if (s.condition != condition) continue;
        if (C < 0) C = s.channels();
        if (s.channels() != C) throw ShapeError("segments differ in channel count");
        const auto psd = welch_psd(s.data, s.fs);
        Vec row(C * B);
        for (Eigen::Index b = 0; b < B; ++b) {
            const Vec p = band_power(psd, bands[static_cast<std::size_t>(b)]);
            for (Eigen::Index c = 0; c < C; ++c) row(c * B + b) = p(c);
        }
        auto& [sum, count] = acc[s.subject_id];
        if (count == 0) sum = Vec::Zero(C * B);
        sum += row;
        ++count;
    }
    ConditionPowers out;
    if (acc.empty()) return out;
    out.power.resize(static_cast<Eigen::Index>(acc.size()), C * B);
    Eigen::Index i = 0;
    for (const auto& [subj, sc] : acc) {
        out.subjects.push_back(subj);
        out.power.row(i++) = (sc.first / sc.second).transpose();
    }
    return out;
}

std::vector<FRow> compare_conditions(const std::vector<signal::TrialSegment>& segments, signal::Condition a,
                                     signal::Condition b, const std::vector<BandDef>& bands) {
    const auto pa = condition_band_powers(segments, a, bands);
    const auto pb = condition_band_powers(segments, b, bands);
    std::vector<Eigen::Index> ia, ib;
    for (std::size_t i = 0; i < pa.subjects.size(); ++i) {
        for (std::size_t j = 0; j < pb.subjects.size(); ++j) {
            if (pa.subjects[i] == pb.subjects[j]) {
                ia.push_back(static_cast<Eigen::Index>(i));
                ib.push_back(static_cast<Eigen::Index>(j));
            }
        }
    }
    if (ia.size() < 2) {
        throw ConfigError("comparison " + std::string(signal::condition_name(a)) + ":" +
                          std::string(signal::condition_name(b)) + " needs at least 2 subjects with both conditions");
    }
    const auto cols = pa.power.cols();
    Mat ma(static_cast<Eigen::Index>(ia.size()), cols), mb(static_cast<Eigen::Index>(ib.size()), cols);
    for (std::size_t k = 0; k < ia.size(); ++k) {
        ma.row(static_cast<Eigen::Index>(k)) = pa.power.row(ia[k]);
        mb.row(static_cast<Eigen::Index>(k)) = pb.power.row(ib[k]);
    }
    const auto res = rm_anova_f(ma, mb);
    const auto B = static_cast<Eigen::Index>(bands.size());
    const std::string name = std::string(signal::condition_name(a)) + ":" + std::string(signal::condition_name(b));
    std::vector<FRow> rows;
    for (Eigen::Index col = 0; col < cols; ++col) {
        FRow r;
        r.comparison = name;
        r.channel = static_cast<int>(col / B);
        r.band = bands[static_cast<std::size_t>(col % B)].name;
        r.F = res.F(col);
        r.n_subjects = res.n_subjects;
        r.degenerate = res.degenerate[static_cast<std::size_t>(col)] != 0;
        rows.push_back(r);
    }
    return rows;
}

std::string f_rows_csv(const std::vector<FRow>& rows) {
    std::ostringstream os;
    os << "comparison,channel,band,F,n_subjects,degenerate_flag\n" << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.comparison << ',' << r.channel << ',' << r.band << ',';
        if (r.degenerate) {
            os << "";
        } else {
            os << r.F;
        }
        os << ',' << r.n_subjects << ',' << (r.degenerate ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace lblm::analysis
