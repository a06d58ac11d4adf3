#include "lblm/backbone/checkpoint.hpp"
#include "lblm/classify/classify.hpp"
#include "lblm/io.hpp"
#include "lblm/signal/preprocess.hpp"
#include "lblm/signal/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lblm;
using namespace lblm::classify;
using lblm::testing::random_mat;

namespace {

backbone::ModelConfig tiny_model(int subjects = 2) {
    backbone::ModelConfig c;
    c.d = 8;
    c.layers = 1;
    c.heads = 2;
    c.ffn_dim = 16;
    c.K_subjects = subjects;
    return c;
}

backbone::Checkpoint scratch(const backbone::ModelConfig& c, std::uint64_t seed) {
    return backbone::make_checkpoint(backbone::Stage::init, nlohmann::json{{"model", backbone::to_json(c)}},
                                     backbone::init_params(c, seed), {}, {});
}

std::vector<signal::TrialSegment> labeled_trials(int channels, int trials_per_session, std::uint64_t seed) {
    auto spec = signal::default_generator_spec();
    spec.channels = channels;
    spec.sessions = 3;
    spec.trials_per_session = trials_per_session;
    spec.signatures = signal::default_signatures(channels);
    std::vector<signal::TrialSegment> out;
    for (const auto& r : signal::synth_dataset(spec, seed)) {
        for (auto& s : signal::epoch_trials(r)) out.push_back(std::move(s));
    }
    return out;
}

// Exact two-sided binomial interval [lo, hi] holding at least `level` mass.
std::pair<int, int> binomial_interval(int n, double p, double level) {
    std::vector<double> pmf(n + 1);
    for (int k = 0; k <= n; ++k) {
        pmf[k] = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                          (n - k) * std::log1p(-p));
    }
    const double tail = (1.0 - level) / 2.0;
    int lo = 0;
    double acc = 0.0;
    while (lo < n && acc + pmf[lo] <= tail) acc += pmf[lo++];
    int hi = n;
    acc = 0.0;
    while (hi > 0 && acc + pmf[hi] <= tail) acc += pmf[hi--];
    return {lo, hi};
}

FinetuneConfig quick_finetune(Task task, int channels, std::uint64_t seed) {
    FinetuneConfig fc;
    fc.task = task;
    fc.epochs = 2;
    fc.batch = 8;
    fc.hyper.lr_base = 1e-2;
    fc.seed = seed;
    fc.classifier.num_classes = num_classes(task);
    fc.classifier.channels = channels;
    return fc;
}

}  // namespace

TEST(CrossEntropy, ConfidentCorrectLogitGivesNearZeroLoss) {
    diff::Graph g;
    Mat l = Mat::Zero(1, 6);
    l(0, 2) = 60.0;
    EXPECT_LT(diff::cross_entropy(g.constant(l), {2}).scalar(), 1e-12);
}

TEST(Softmax, ShiftInvariance) {
    std::mt19937_64 rng(3);
    Mat l = random_mat(20, 24, rng, 3.0);
    const Mat p = diff::softmax_rows(l);
    const Mat q = diff::softmax_rows((l.array() + 123.456).matrix());
    EXPECT_LE((p - q).cwiseAbs().maxCoeff(), 1e-9);
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
        Eigen::Index a, b;
        p.row(r).maxCoeff(&a);
        q.row(r).maxCoeff(&b);
        EXPECT_EQ(a, b);
        EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    }
}

TEST(Labels, SemanticGroupTable) {
    EXPECT_EQ(num_classes(Task::word24), 24);
    EXPECT_EQ(num_classes(Task::semantic6), 6);
    for (const auto& t : labeled_trials(4, 24, 5)) {
        ASSERT_TRUE(t.labeled());
        EXPECT_EQ(t.semantic, t.word / 4);
        EXPECT_EQ(task_label(t, Task::semantic6), signal::semantic_group(task_label(t, Task::word24)));
    }
    signal::TrialSegment unlabeled;
    EXPECT_THROW(task_label(unlabeled, Task::word24), ConfigError);
}

class ClassifierKinds : public ::testing::TestWithParam<ClassifierKind> {};

TEST_P(ClassifierKinds, LogitShapeAndGradients) {
    StClassifierConfig c;
    c.kind = GetParam();
    c.channels = 3;
    c.num_classes = 6;
    c.spatial_out_channels = 4;
    c.temporal_channels = 4;
    c.inception_kernels = {1, 3};
    c.temporal_kernel = 3;
    const int d = 5, tokens = 6, trials = 2;
    auto ps = init_classifier(c, d, 7);
    for (const auto& p : ps) EXPECT_EQ(p.name.rfind("cls.", 0), 0u) << p.name;
    std::mt19937_64 rng(11);
    const Mat feats = random_mat(trials * c.channels * tokens, d, rng);
    {
        diff::Graph g;
        backbone::Binder b(g, ps, false);
        auto out = st_forward(b, c, g.constant(feats), tokens);
        EXPECT_EQ(out.rows(), trials);
        EXPECT_EQ(out.cols(), 6);
        EXPECT_THROW(st_forward(b, c, g.constant(random_mat(2 * 4 * tokens + 1, d, rng)), tokens), ShapeError);
    }
    // Perturb the zero biases so every path carries gradient.
    for (auto& p : ps) p.value += random_mat(static_cast<int>(p.value.rows()), static_cast<int>(p.value.cols()), rng, 0.1);
    ps.add("features", {static_cast<int>(feats.rows()), d}, feats);
    auto loss_fn = [&](diff::ParamStore& store, bool grad) {
        diff::Graph g;
        backbone::Binder b(g, store, true);
        auto loss = diff::cross_entropy(st_forward(b, c, b("features"), tokens), {1, 4});
        if (grad) g.backward(loss);
        return loss.scalar();
    };
    auto report = diff::grad_check(loss_fn, ps);
    EXPECT_TRUE(report.passed()) << report.max_rel_error;
}

INSTANTIATE_TEST_SUITE_P(All, ClassifierKinds,
                         ::testing::Values(ClassifierKind::linear, ClassifierKind::convolutional,
                                           ClassifierKind::spatio_temporal));

TEST(ClassifierConfig, JsonRoundTripAndValidation) {
    StClassifierConfig c;
    c.kind = ClassifierKind::convolutional;
    c.num_classes = 24;
    EXPECT_EQ(to_json(classifier_config_from_json(to_json(c))), to_json(c));
    auto j = to_json(c);
    j["dropout"] = 0.1;
    EXPECT_THROW(classifier_config_from_json(j), ConfigError);
    c.num_classes = 7;
    EXPECT_THROW(c.validate(), ConfigError);
    c.num_classes = 6;
    c.temporal_channels = 15;  // not divisible by 4 branches
    EXPECT_THROW(c.validate(), ConfigError);

    FinetuneConfig f;
    f.backbone_lr_scale = 0.25;
    EXPECT_EQ(to_json(finetune_config_from_json(to_json(f))), to_json(f));
    auto fj = to_json(f);
    fj["momentum"] = 0.9;
    EXPECT_THROW(finetune_config_from_json(fj), ConfigError);
    f.task = Task::word24;  // classifier still 6-way
    EXPECT_THROW(f.validate(), ConfigError);
}

TEST(Split, DefaultRolesAndErrors) {
    auto plan = default_split(std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 5}, {1, 6}, {1, 7}});
    EXPECT_EQ(plan.role(0, 3), SplitPlan::Role::test);
    EXPECT_EQ(plan.role(0, 2), SplitPlan::Role::val);
    EXPECT_EQ(plan.role(0, 0), SplitPlan::Role::train);
    EXPECT_EQ(plan.role(0, 1), SplitPlan::Role::train);
    EXPECT_EQ(plan.role(1, 7), SplitPlan::Role::test);
    EXPECT_EQ(plan.role(1, 6), SplitPlan::Role::val);
    EXPECT_EQ(plan.role(1, 5), SplitPlan::Role::train);
    EXPECT_EQ(plan.role(2, 0), SplitPlan::Role::unused);
    EXPECT_THROW(default_split(std::vector<std::pair<int, int>>{{0, 0}, {0, 1}}), ConfigError);
    EXPECT_THROW(default_split(std::vector<std::pair<int, int>>{}), ConfigError);

    SplitPlan bad;
    bad.per_subject[0] = {{0, 1}, 1, 2};
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Report, ConfusionAndCoarsening) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> u(0, 23);
    std::vector<int> truth, pred;
    for (int i = 0; i < 500; ++i) {
        truth.push_back(i % 24);
        pred.push_back(i % 3 == 0 ? truth.back() : u(rng));
    }
    auto r = make_report(Task::word24, truth, pred);
    EXPECT_EQ(r.n_trials, 500);
    for (int k = 0; k < 24; ++k) {
        int row = 0;
        for (int v : r.confusion[k]) row += v;
        EXPECT_EQ(row, static_cast<int>(std::count(truth.begin(), truth.end(), k)));
    }
    EXPECT_GE(r.semantic_from_word, r.accuracy);
    auto perfect = make_report(Task::semantic6, {0, 1, 2, 3, 4, 5}, {0, 1, 2, 3, 4, 5});
    EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
    EXPECT_LT(perfect.semantic_from_word, 0.0);
    EXPECT_THROW(make_report(Task::semantic6, {0, 6}, {0, 0}), RangeError);
    auto j = to_json(r);
    for (const char* key : {"task", "accuracy", "per_class", "confusion", "n_trials", "checkpoint_hash"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
}

TEST(Evaluate, UntrainedWordAccuracyNearChance) {
    const auto trials = labeled_trials(4, 48, 21);
    const auto split = default_split(trials);
    auto mc = tiny_model();
    auto ck = scratch(mc, 4);
    // Attach an untrained classifier.
    StClassifierConfig cc;
    cc.num_classes = 24;
    cc.channels = 4;
    FinetuneConfig fc;
    fc.task = Task::word24;
    fc.classifier = cc;
    for (const auto& p : init_classifier(cc, mc.d, 5)) ck.params.add(p.name, p.shape, p.value);
    ck.config["classifier"] = to_json(cc);
    ck.config["finetune"] = to_json(fc);
    auto r = evaluate(ck, trials, split);
    ASSERT_EQ(r.n_trials, 2 * 48);
    const auto [lo, hi] = binomial_interval(r.n_trials, 1.0 / 24.0, 0.99);
    const int correct = static_cast<int>(std::lround(r.accuracy * r.n_trials));
    EXPECT_GE(correct, lo);
    EXPECT_LE(correct, hi);
    // Deterministic single pass.
    EXPECT_EQ(evaluate(ck, trials, split).confusion, r.confusion);
    EXPECT_GE(r.semantic_from_word, r.accuracy);
}

TEST(Evaluate, RequiresFinetunedCheckpoint) {
    const auto trials = labeled_trials(4, 24, 2);
    auto ck = scratch(tiny_model(), 1);
    EXPECT_THROW(evaluate(ck, trials, default_split(trials)), ConfigError);
}

TEST(Finetune, SelectsBestEpochAndIsDeterministic) {
    const auto trials = labeled_trials(4, 24, 8);
    const auto split = default_split(trials);
    const auto init = scratch(tiny_model(), 2);
    auto fc = quick_finetune(Task::semantic6, 4, 3);
    fc.epochs = 3;
    auto a = finetune(init, trials, split, fc);
    ASSERT_EQ(a.log.size(), 3u);
    double best = -1.0;
    for (const auto& e : a.log) best = std::max(best, e.val_accuracy);
    EXPECT_EQ(a.log[a.best_epoch].val_accuracy, best);
    for (int e = 0; e < a.best_epoch; ++e) EXPECT_LT(a.log[e].val_accuracy, best);
    EXPECT_EQ(a.checkpoint.stage, backbone::Stage::finetuned);
    EXPECT_EQ(a.checkpoint.metadata.at("ancestor_hash"), io::hex64(init.content_hash()));
    for (const auto& p : a.checkpoint.params) EXPECT_NE(p.name.rfind("head.", 0), 0u) << p.name;

    auto b = finetune(init, trials, split, fc);
    EXPECT_EQ(backbone::encode_checkpoint(a.checkpoint), backbone::encode_checkpoint(b.checkpoint));
    EXPECT_EQ(to_json(a.val), to_json(b.val));
    // The reported val accuracy is reproducible from the saved checkpoint.
    EXPECT_EQ(evaluate(a.checkpoint, trials, split, SplitPlan::Role::val).confusion, a.val.confusion);
}

TEST(Finetune, FrozenBackboneKeepsBackboneWeights) {
    const auto trials = labeled_trials(4, 24, 8);
    const auto init = scratch(tiny_model(), 2);
    auto fc = quick_finetune(Task::semantic6, 4, 1);
    fc.epochs = 1;
    fc.freeze_backbone = true;
    auto r = finetune(init, trials, default_split(trials), fc);
    for (const auto& p : init.params) {
        if (p.name.rfind("head.", 0) == 0) continue;
        EXPECT_EQ(r.checkpoint.params.get(p.name).value, p.value) << p.name;
    }
}

TEST(Finetune, RejectsEmptySplitAndChannelMismatch) {
    const auto trials = labeled_trials(4, 24, 8);
    const auto init = scratch(tiny_model(), 2);
    SplitPlan other;
    other.per_subject[9] = {{0}, 1, 2};
    EXPECT_THROW(finetune(init, trials, other, quick_finetune(Task::semantic6, 4, 0)), ConfigError);
    EXPECT_THROW(finetune(init, trials, default_split(trials), quick_finetune(Task::semantic6, 6, 0)), ShapeError);
}
