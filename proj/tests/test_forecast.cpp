#include "lblm/backbone/model.hpp"
#include "lblm/forecast/forecast.hpp"
#include "lblm/signal/patch.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lblm;
using namespace lblm::forecast;
using lblm::testing::random_mat;

namespace {

backbone::ModelConfig tiny() {
    backbone::ModelConfig c;
    c.d = 8;
    c.layers = 1;
    c.heads = 2;
    c.ffn_dim = 16;
    return c;
}

// Nonzero gate path so the whole block participates.
diff::ParamStore perturbed(const backbone::ModelConfig& c, std::uint64_t seed) {
    auto ps = backbone::init_params(c, seed);
    std::mt19937_64 rng(seed + 1);
    for (auto& p : ps) p.value += random_mat(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()), rng, 0.1);
    return ps;
}

}  // namespace

TEST(Ladder, DefaultPairsSumToOneSecond) {
    const auto& l = default_ladder();
    ASSERT_EQ(l.size(), 5u);
    const int ctx[] = {204, 180, 156, 132, 114};
    const int tgt[] = {46, 70, 94, 118, 136};
    for (std::size_t i = 0; i < l.size(); ++i) {
        EXPECT_EQ(l[i].context, ctx[i]);
        EXPECT_EQ(l[i].target, tgt[i]);
        EXPECT_EQ(l[i].context + l[i].target, 250);
    }
    EXPECT_EQ(parse_ladder("204:46,180:70,156:94,132:118,114:136"), l);
    EXPECT_EQ(parse_ladder(ladder_to_string(l)), l);
    EXPECT_THROW(parse_ladder("204-46"), ConfigError);
    EXPECT_THROW(parse_ladder("204:x"), ConfigError);
    EXPECT_THROW(parse_ladder(""), ConfigError);
}

TEST(MergeOverlaps, WorkedExample) {
    Mat p(2, 4);
    p << 1, 1, 1, 1, 3, 3, 3, 3;
    Vec m = merge_overlaps(p, 2);
    Vec expect(6);
    expect << 1, 1, 2, 2, 3, 3;
    EXPECT_EQ(m, expect);
}

TEST(MergeOverlaps, NoOverlapConcatenatesAndConstantsStayConstant) {
    std::mt19937_64 rng(1);
    Mat p = random_mat(3, 5, rng);
    Vec m = merge_overlaps(p, 5);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(Vec(m.segment(i * 5, 5)), Vec(p.row(i).transpose()));
    Vec c = merge_overlaps(Mat::Constant(7, 25, 2.5), 6);
    EXPECT_EQ(c.size(), 6 * 6 + 25);
    EXPECT_LE((c.array() - 2.5).abs().maxCoeff(), 1e-15);
}

TEST(MergeOverlaps, ReconstructsTruePatchification) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> up(2, 30), us(1, 30), ul(0, 80);
    for (int trial = 0; trial < 200; ++trial) {
        const int P = up(rng);
        const int S = std::uniform_int_distribution<int>(1, P)(rng);
        const int N = 1 + ul(rng) / S;
        const int L = (N - 1) * S + P;
        Mat x = random_mat(1, L, rng);
        auto seq = signal::patchify(std::span<const double>(x.data(), static_cast<std::size_t>(L)), P, S);
        Vec m = merge_overlaps(seq.patches, S);
        ASSERT_EQ(m.size(), L);
        EXPECT_LE((m - x.row(0).transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Metrics, Anchors) {
    std::mt19937_64 rng(2);
    Mat t = random_mat(3, 40, rng);
    auto m0 = forecast_metrics(t, t);
    EXPECT_EQ(m0.mse, 0.0);
    EXPECT_EQ(m0.mae, 0.0);
    auto m1 = forecast_metrics((t.array() + 1.0).matrix(), t);
    EXPECT_NEAR(m1.mse, 1.0, 1e-12);
    EXPECT_NEAR(m1.mae, 1.0, 1e-12);
    EXPECT_THROW(forecast_metrics(t, t.leftCols(3)), ShapeError);
}

TEST(Persistence, RepeatsLastSample) {
    Mat ctx(2, 4);
    ctx << 1, 2, 3, 5, 7, 7, 7, 7;
    Mat p = persistence_baseline(ctx, 6);
    EXPECT_TRUE((p.row(0).array() == 5.0).all());
    EXPECT_EQ(forecast_metrics(p.row(1), Mat::Constant(1, 6, 7.0)).mse, 0.0);
}

TEST(Persistence, SineErrorGrowsWithHorizon) {
    // Closed form: the error at lag h after a sample at phase phi is
    // sin(phi + w h) - sin(phi); averaging |.| over phi gives (4/pi)|sin(w h/2)|.
    const double fs = 250.0, f = 5.0, w = 2.0 * kPi * f / fs;
    auto mean_mae = [&](int T) {
        double total = 0.0;
        const int phases = 64;
        for (int k = 0; k < phases; ++k) {
            const double phi = 2.0 * kPi * k / phases;
            Mat ctx(1, 30), truth(1, T);
            for (int i = 0; i < 30; ++i) ctx(0, i) = std::sin(phi + w * (i - 29));
            for (int h = 0; h < T; ++h) truth(0, h) = std::sin(phi + w * (h + 1));
            total += forecast_metrics(persistence_baseline(ctx, T), truth).mae;
        }
        return total / phases;
    };
    auto oracle = [&](int T) {
        double s = 0.0;
        for (int h = 1; h <= T; ++h) s += 4.0 / kPi * std::abs(std::sin(w * h / 2.0));
        return s / T;
    };
    double prev = 0.0;
    for (int T : {5, 10, 20, 25}) {
        const double m = mean_mae(T);
        EXPECT_NEAR(m, oracle(T), 0.02 * oracle(T) + 1e-3) << T;
        EXPECT_GT(m, prev);
        prev = m;
    }
}

TEST(Rollout, CallCountsAndTrimming) {
    auto c = tiny();
    auto ps = perturbed(c, 3);
    std::mt19937_64 rng(5);
    const Mat ctx = random_mat(2, 60, rng);
    RolloutStats st;
    Mat one = rollout(ps, c, ctx, c.S, 0, RolloutMode::last_patch, &st);
    EXPECT_EQ(st.model_calls, 1);
    EXPECT_EQ(one.cols(), c.S);
    Mat many = rollout(ps, c, ctx, 46, 0, RolloutMode::last_patch, &st);
    EXPECT_EQ(st.model_calls, 8);
    EXPECT_EQ(st.generated, 48);
    EXPECT_EQ(many.cols(), 46);
    EXPECT_EQ(many.rows(), 2);
    // The first stride equals the one-call result: later steps only append.
    EXPECT_EQ(Mat(many.leftCols(c.S)), one);
    EXPECT_EQ(rollout(ps, c, ctx, 46, 0), many);
    Mat merged = rollout(ps, c, ctx, 46, 0, RolloutMode::merged, &st);
    EXPECT_EQ(merged.cols(), 46);
    EXPECT_TRUE(merged.allFinite());
    EXPECT_THROW(rollout(ps, c, random_mat(2, c.P - 1, rng), 6, 0), InputTooShortError);
}

TEST(Rollout, MatchesManualLastTokenPrediction) {
    auto c = tiny();
    auto ps = perturbed(c, 8);
    std::mt19937_64 rng(6);
    const Mat ctx = random_mat(1, 49, rng);  // lead (49-25) mod 6 = 0
    const int N = signal::patch_count(49, c.P, c.S);
    diff::Graph g;
    backbone::Binder b(g, ps, false);
    backbone::ForwardOptions opt;
    opt.causal = true;
    auto feats = backbone::forward(b, c, signal::patchify_rows(ctx, c.P, c.S), N, {0}, opt);
    const Mat wave = backbone::prediction_heads(b, feats).wave.value();
    Mat r = rollout(ps, c, ctx, c.S, 0);
    EXPECT_LE((r.row(0) - wave.row(N - 1).tail(c.S)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForecastSegment, NormalizesWithContextStatistics) {
    auto c = tiny();
    auto ps = perturbed(c, 2);
    std::mt19937_64 rng(7);
    signal::TrialSegment seg;
    seg.data = (random_mat(2, 250, rng).array() * 3.0 + 10.0).matrix();
    auto r = forecast_segment(ps, c, seg, {204, 46});
    EXPECT_EQ(r.prediction.rows(), 2);
    EXPECT_EQ(r.prediction.cols(), 46);
    EXPECT_EQ(r.truth.cols(), 46);
    EXPECT_NEAR(r.context.row(0).mean(), 0.0, 1e-12);
    EXPECT_GE(r.normalized.mse, 0.0);
    EXPECT_GE(r.raw.mae, 0.0);
    EXPECT_THROW(forecast_segment(ps, c, seg, {204, 47}), RangeError);
}

TEST(Csv, LayoutsAndDeterminism) {
    auto c = tiny();
    auto ps = perturbed(c, 2);
    std::mt19937_64 rng(8);
    std::vector<signal::TrialSegment> segs(2);
    for (auto& s : segs) s.data = random_mat(2, 250, rng);
    auto ev = evaluate_ladder(ps, c, segs, {{204, 46}, {114, 136}});
    EXPECT_EQ(ev.rows.size(), 2u * 2u * 2u);
    EXPECT_EQ(ev.summary.size(), 2u);
    EXPECT_EQ(ev.examples.size(), 2u);
    auto csv = metrics_csv(ev.rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "segment,context,horizon,channel,mse,mae,raw_mse,raw_mae,baseline_mse,baseline_mae");
    EXPECT_EQ(csv, metrics_csv(evaluate_ladder(ps, c, segs, {{204, 46}, {114, 136}}).rows));
    auto ov = overlay_csv(ev.examples[0]);
    EXPECT_EQ(std::count(ov.begin(), ov.end(), '\n'), 1 + 2 * 250);
}

TEST(Spearman, Anchors) {
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
    EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
    EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {1, 4, 9, 16, 100}), 1.0, 1e-12);
    // Ties get average ranks: x ranks 1..4, y ranks 1.5,1.5,3,4.
    const double rho = spearman({1, 2, 3, 4}, {5, 5, 6, 7});
    EXPECT_NEAR(rho, 0.9486832980505138, 1e-12);
}
