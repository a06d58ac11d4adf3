#include "lblm/analysis/analysis.hpp"
#include "lblm/signal/preprocess.hpp"
#include "lblm/signal/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lblm;
using namespace lblm::analysis;
using lblm::testing::random_mat;

namespace {

Mat sine(double f, double fs, int L, double amp = 1.0, double phase = 0.0) {
    Mat x(1, L);
    for (int i = 0; i < L; ++i) x(0, i) = amp * std::sin(2.0 * kPi * f * i / fs + phase);
    return x;
}

// Independent sums-of-squares decomposition of the subject × condition table.
double f_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const int n = static_cast<int>(a.size());
    double grand = 0.0;
    for (int i = 0; i < n; ++i) grand += a[i] + b[i];
    grand /= 2.0 * n;
    double ss_total = 0.0, ss_subj = 0.0, ma = 0.0, mb = 0.0;
    for (int i = 0; i < n; ++i) {
        ss_total += (a[i] - grand) * (a[i] - grand) + (b[i] - grand) * (b[i] - grand);
        const double s = 0.5 * (a[i] + b[i]);
        ss_subj += 2.0 * (s - grand) * (s - grand);
        ma += a[i] / n;
        mb += b[i] / n;
    }
    const double ss_cond = n * ((ma - grand) * (ma - grand) + (mb - grand) * (mb - grand));
    const double ss_err = ss_total - ss_subj - ss_cond;
    return (ss_cond / 1.0) / (ss_err / (n - 1));
}

double paired_t(const Vec& a, const Vec& b) {
    const Vec d = a - b;
    const double n = static_cast<double>(d.size());
    const double m = d.mean();
    const double sd = std::sqrt((d.array() - m).square().sum() / (n - 1));
    return m / (sd / std::sqrt(n));
}

}  // namespace

TEST(Bands, CanonicalTable) {
    const auto& b = canonical_bands();
    ASSERT_EQ(b.size(), 5u);
    EXPECT_EQ(b[0].name, "delta");
    EXPECT_EQ(b[4].hi, 50.0);
    for (std::size_t i = 1; i < b.size(); ++i) EXPECT_EQ(b[i].lo, b[i - 1].hi);
    EXPECT_EQ(band_by_name("alpha").lo, 8.0);
    EXPECT_THROW(band_by_name("mu"), ConfigError);
}

TEST(Welch, SinePeakAndConcentration) {
    const double fs = 250.0;
    for (double f : {10.0, 17.3, 40.0}) {
        auto psd = welch_psd(sine(f, fs, 1000, 1.0, 0.4), fs, 250, 125);
        Eigen::Index k;
        psd.power.row(0).maxCoeff(&k);
        Eigen::Index nearest;
        (psd.freqs.array() - f).abs().minCoeff(&nearest);
        EXPECT_EQ(k, nearest) << f;
        const double total = psd.power.row(0).sum();
        const double near = psd.power.row(0).segment(std::max<Eigen::Index>(0, nearest - 2), 5).sum();
        EXPECT_GE(near / total, 0.9) << f;
        EXPECT_TRUE((psd.power.array() >= 0).all());
        for (Eigen::Index i = 1; i < psd.freqs.size(); ++i) EXPECT_GT(psd.freqs(i), psd.freqs(i - 1));
        EXPECT_LE(psd.freqs(psd.freqs.size() - 1), fs / 2.0);
    }
}

TEST(Welch, WhiteNoisePowerMatchesVariance) {
    std::mt19937_64 rng(3);
    double ratio = 0.0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
        Mat x = random_mat(1, 2500, rng, 1.7);
        auto psd = welch_psd(x, 250.0);
        ratio += total_power(psd)(0) / (1.7 * 1.7);
    }
    EXPECT_NEAR(ratio / reps, 1.0, 0.2);
}

TEST(Welch, ZeroInputAndErrors) {
    auto psd = welch_psd(Mat::Zero(3, 500), 250.0);
    EXPECT_EQ(psd.power.cwiseAbs().maxCoeff(), 0.0);
    for (const auto& b : canonical_bands()) EXPECT_EQ(band_power(psd, b).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(psd.window_len, 250);
    EXPECT_EQ(psd.overlap, 125);
    EXPECT_THROW(welch_psd(Mat::Zero(1, 100), 250.0, 200, 100), ConfigError);
    EXPECT_THROW(welch_psd(Mat::Zero(1, 300), 250.0, 200, 200), ConfigError);
}

TEST(BandPower, AlphaDominatesForTenHertzAndBandsSumBelowTotal) {
    auto psd = welch_psd(sine(10.0, 250.0, 1000), 250.0);
    const double alpha = band_power(psd, band_by_name("alpha"))(0);
    const double beta = band_power(psd, band_by_name("beta"))(0);
    EXPECT_GT(alpha, 10.0 * beta);
    std::mt19937_64 rng(9);
    auto noise = welch_psd(random_mat(4, 1000, rng), 250.0);
    Vec sum = Vec::Zero(4);
    for (const auto& b : canonical_bands()) sum += band_power(noise, b);
    EXPECT_TRUE((sum.array() <= total_power(noise).array() + 1e-12).all());
    EXPECT_THROW(band_power(psd, {"narrow", 10.2, 10.4}), ConfigError);
    EXPECT_THROW(band_power(psd, {"above", 100.0, 200.0}), ConfigError);
}

TEST(Anova, IdenticalConditionsGiveZero) {
    std::mt19937_64 rng(1);
    Mat a = random_mat(5, 3, rng);
    auto r = rm_anova_f(a, a);
    EXPECT_EQ(r.n_subjects, 5);
    for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(r.at(c), 0.0);
        EXPECT_FALSE(r.degenerate[c]);
    }
}

TEST(Anova, ConstantShiftIsDegenerate) {
    Mat a(3, 1), b(3, 1);
    a << 1, 2, 3;
    b << 2, 3, 4;
    auto r = rm_anova_f(a, b);
    EXPECT_TRUE(r.degenerate[0]);
    EXPECT_TRUE(std::isfinite(r.F(0)));
    EXPECT_THROW(r.at(0), NumericError);
}

TEST(Anova, HandExampleMatchesSumsOfSquares) {
    Mat a(3, 1), b(3, 1);
    a << 1, 2, 3;
    b << 3, 3, 6;
    const double expect = f_oracle({1, 2, 3}, {3, 3, 6});
    // d = (-2, -1, -3): mean -2, sd 1, t = -2 sqrt(3), F = 12.
    EXPECT_NEAR(expect, 12.0, 1e-12);
    EXPECT_NEAR(rm_anova_f(a, b).at(0), expect, 1e-12);
}

TEST(Anova, EqualsPairedTSquaredAndIgnoresSubjectOffsets) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> un(2, 12);
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = un(rng);
        Mat a = random_mat(n, 2, rng);
        Mat b = random_mat(n, 2, rng) + Mat::Constant(n, 2, 0.3);
        auto r = rm_anova_f(a, b);
        for (int c = 0; c < 2; ++c) {
            const double t = paired_t(a.col(c), b.col(c));
            worst = std::max(worst, std::abs(r.at(c) - t * t) / std::max(1.0, t * t));
            EXPECT_GE(r.at(c), 0.0);
        }
        Mat offset = random_mat(n, 1, rng, 5.0).replicate(1, 2);
        auto shifted = rm_anova_f(a + offset, b + offset);
        EXPECT_NEAR(shifted.at(0), r.at(0), 1e-9 * std::max(1.0, r.at(0)));
    }
    EXPECT_LE(worst, 1e-9);
    EXPECT_THROW(rm_anova_f(Mat::Zero(1, 2), Mat::Zero(1, 2)), ConfigError);
    EXPECT_THROW(rm_anova_f(Mat::Zero(3, 2), Mat::Zero(4, 2)), ShapeError);
}

TEST(Compare, SyntheticConditionsProduceRows) {
    auto spec = signal::default_generator_spec();
    spec.subjects = 3;
    spec.sessions = 1;
    spec.trials_per_session = 12;
    std::vector<signal::TrialSegment> segs;
    signal::EpochConfig ec;
    ec.window_s = 1.0;
    for (const auto& rec : signal::synth_dataset(spec, 4)) {
        for (auto cond : {signal::Condition::rest, signal::Condition::silent}) {
            for (auto& s : signal::epoch_trials(rec, ec, cond)) segs.push_back(std::move(s));
        }
    }
    auto rows = compare_conditions(segs, signal::Condition::rest, signal::Condition::silent);
    ASSERT_EQ(rows.size(), static_cast<std::size_t>(spec.channels) * 5u);
    for (const auto& r : rows) {
        EXPECT_EQ(r.n_subjects, 3);
        EXPECT_EQ(r.comparison, "rest:silent");
    }
    // Planted rest alpha on the posterior third of channels.
    const auto& post_alpha = rows[static_cast<std::size_t>(spec.channels - 1) * 5 + 2];
    EXPECT_EQ(post_alpha.band, "alpha");
    EXPECT_GT(post_alpha.F, 3.0);
    auto csv = f_rows_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "comparison,channel,band,F,n_subjects,degenerate_flag");
    EXPECT_THROW(compare_conditions(segs, signal::Condition::rest, signal::Condition::read), ConfigError);
}
