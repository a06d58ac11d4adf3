#include "lblm/classify/classify.hpp"

#include "lblm/io.hpp"
#include "lblm/signal/patch.hpp"
#include "lblm/signal/revin.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace lblm::classify {

using backbone::Binder;
using diff::Var;

std::string_view classifier_kind_name(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::linear: return "linear";
        case ClassifierKind::convolutional: return "convolutional";
        case ClassifierKind::spatio_temporal: return "spatio_temporal";
    }
    return "?";
}

ClassifierKind parse_classifier_kind(std::string_view s) {
    if (s == "linear") return ClassifierKind::linear;
    if (s == "convolutional") return ClassifierKind::convolutional;
    if (s == "spatio_temporal") return ClassifierKind::spatio_temporal;
    throw ConfigError("unknown classifier kind '" + std::string(s) + "'");
}

std::string_view task_name(Task t) { return t == Task::word24 ? "word24" : "semantic6"; }

Task parse_task(std::string_view s) {
    if (s == "word24") return Task::word24;
    if (s == "semantic6") return Task::semantic6;
    throw ConfigError("unknown task '" + std::string(s) + "'");
}

int num_classes(Task t) { return t == Task::word24 ? signal::kNumWords : signal::kNumGroups; }

int task_label(const signal::TrialSegment& s, Task t) {
    if (!s.labeled()) throw ConfigError("segment carries no label");
    return t == Task::word24 ? s.word : s.semantic;
}

void StClassifierConfig::validate() const {
    if (num_classes != 6 && num_classes != 24) throw ConfigError("num_classes must be 6 or 24");
    if (channels < 1) throw ConfigError("classifier channel count must be positive");
    if (inception_kernels.empty()) throw ConfigError("inception block needs at least one kernel");
    for (int k : inception_kernels) {
        if (k < 1 || k % 2 == 0) throw ConfigError("inception kernel sizes must be odd");
    }
    if (spatial_out_channels < 1 || temporal_channels < 1) throw ConfigError("classifier widths must be positive");
    if (temporal_channels % static_cast<int>(inception_kernels.size()) != 0) {
        throw ConfigError("temporal_channels must split evenly across inception branches");
    }
    if (temporal_kernel < 1 || temporal_kernel % 2 == 0) throw ConfigError("temporal kernel must be odd");
}

nlohmann::json to_json(const StClassifierConfig& c) {
    return {{"kind", std::string(classifier_kind_name(c.kind))},
            {"inception_kernels", c.inception_kernels},
            {"spatial_out_channels", c.spatial_out_channels},
            {"temporal_channels", c.temporal_channels},
            {"temporal_kernel", c.temporal_kernel},
            {"num_classes", c.num_classes},
            {"channels", c.channels}};
}

StClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {"kind", "inception_kernels", "spatial_out_channels",
                                                   "temporal_channels", "temporal_kernel", "num_classes", "channels"};
    if (!j.is_object()) throw ConfigError("classifier config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("unknown classifier key '" + k + "'");
        }
    }
    StClassifierConfig c;
    if (j.contains("kind")) c.kind = parse_classifier_kind(j.at("kind").get<std::string>());
    c.inception_kernels = j.value("inception_kernels", c.inception_kernels);
    c.spatial_out_channels = j.value("spatial_out_channels", c.spatial_out_channels);
    c.temporal_channels = j.value("temporal_channels", c.temporal_channels);
    c.temporal_kernel = j.value("temporal_kernel", c.temporal_kernel);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.channels = j.value("channels", c.channels);
    c.validate();
    return c;
}

namespace {

void dense_init(diff::ParamStore& ps, std::mt19937_64& rng, const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    ps.add(name + ".w", {in, out}, std::move(w));
    ps.add_zeros(name + ".b", {out});
}

Var dense(Binder& b, const std::string& name, Var x) { return diff::linear(x, b(name + ".w"), b(name + ".b")); }

// Full 1-D convolution along tokens: unfold then affine.
Var temporal_conv(Binder& b, const std::string& name, Var x, int kernel, int tokens) {
    return dense(b, name, kernel == 1 ? x : diff::unfold_time(x, kernel, tokens));
}

}  // namespace

diff::ParamStore init_classifier(const StClassifierConfig& c, int d, std::uint64_t seed) {
    c.validate();
    diff::ParamStore ps;
    std::mt19937_64 rng(seed);
    switch (c.kind) {
        case ClassifierKind::linear:
            dense_init(ps, rng, "cls.out", d, c.num_classes);
            break;
        case ClassifierKind::convolutional: {
            const double bound = 1.0 / std::sqrt(static_cast<double>(c.channels));
            std::uniform_real_distribution<double> u(-bound, bound);
            Mat w(c.channels, d);
            for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
            ps.add("cls.spatial_dw.w", {c.channels, d}, std::move(w));
            Mat k(7, d);
            std::uniform_real_distribution<double> uk(-1.0 / std::sqrt(7.0), 1.0 / std::sqrt(7.0));
            for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = uk(rng);
            ps.add("cls.temporal_dw.w", {7, d}, std::move(k));
            ps.add_zeros("cls.temporal_dw.b", {d});
            dense_init(ps, rng, "cls.pointwise", d, c.temporal_channels);
            dense_init(ps, rng, "cls.ffn1", c.temporal_channels, c.temporal_channels);
            dense_init(ps, rng, "cls.out", c.temporal_channels, c.num_classes);
            break;
        }
        case ClassifierKind::spatio_temporal: {
            dense_init(ps, rng, "cls.spatial", c.channels * d, c.spatial_out_channels);
            const int branch = c.temporal_channels / static_cast<int>(c.inception_kernels.size());
            for (int k : c.inception_kernels) {
                dense_init(ps, rng, "cls.inception" + std::to_string(k), k * c.spatial_out_channels, branch);
            }
            dense_init(ps, rng, "cls.temporal1", c.temporal_kernel * c.temporal_channels, c.temporal_channels);
            dense_init(ps, rng, "cls.temporal2", c.temporal_kernel * c.temporal_channels, c.temporal_channels);
            dense_init(ps, rng, "cls.out", c.temporal_channels, c.num_classes);
            break;
        }
    }
    return ps;
}

Var st_forward(Binder& b, const StClassifierConfig& c, Var features, int tokens) {
    const auto rows = features.rows();
    if (tokens <= 0 || rows % (static_cast<Eigen::Index>(c.channels) * tokens) != 0) {
        throw ShapeError("feature rows are not trials × " + std::to_string(c.channels) + " channels × tokens");
    }
    switch (c.kind) {
        case ClassifierKind::linear:
            return dense(b, "cls.out", diff::mean_groups(features, c.channels * tokens));
        case ClassifierKind::convolutional: {
            Var h = diff::spatial_depthwise(features, b("cls.spatial_dw.w"), c.channels, tokens);
            h = diff::depthwise_conv(h, b("cls.temporal_dw.w"), b("cls.temporal_dw.b"), tokens, false);
            h = diff::swish(dense(b, "cls.pointwise", h));
            h = diff::mean_groups(h, tokens);
            return dense(b, "cls.out", diff::swish(dense(b, "cls.ffn1", h)));
        }
        case ClassifierKind::spatio_temporal: {
            Var h = diff::channels_to_cols(features, c.channels, tokens);
            if (h.cols() != b.params().get("cls.spatial.w").value.rows()) {
                throw ShapeError("feature width does not match the trained spatial weights");
            }
            h = diff::swish(dense(b, "cls.spatial", h));
            std::vector<Var> branches;
            for (int k : c.inception_kernels) {
                branches.push_back(temporal_conv(b, "cls.inception" + std::to_string(k), h, k, tokens));
            }
            h = diff::swish(diff::concat_cols(branches));
            Var t = diff::swish(temporal_conv(b, "cls.temporal1", h, c.temporal_kernel, tokens));
            t = temporal_conv(b, "cls.temporal2", t, c.temporal_kernel, tokens);
            h = diff::swish(diff::add(h, t));
            return dense(b, "cls.out", diff::mean_groups(h, tokens));
        }
    }
    throw ConfigError("unknown classifier kind");
}

Mat st_probabilities(Binder& b, const StClassifierConfig& c, Var features, int tokens) {
    return diff::softmax_rows(st_forward(b, c, features, tokens).value());
}

void SplitPlan::validate() const {
    if (per_subject.empty()) throw ConfigError("split plan is empty");
    for (const auto& [subj, s] : per_subject) {
        if (s.train.empty()) throw ConfigError("subject " + std::to_string(subj) + " has no training session");
        if (s.val < 0 || s.test < 0 || s.val == s.test) {
            throw ConfigError("subject " + std::to_string(subj) + " needs distinct val and test sessions");
        }
        for (int t : s.train) {
            if (t == s.val || t == s.test) throw ConfigError("held-out session also listed for training");
        }
    }
}

SplitPlan::Role SplitPlan::role(int subject, int session) const {
    auto it = per_subject.find(subject);
    if (it == per_subject.end()) return Role::unused;
    const auto& s = it->second;
    if (session == s.val) return Role::val;
    if (session == s.test) return Role::test;
    if (std::find(s.train.begin(), s.train.end(), session) != s.train.end()) return Role::train;
    return Role::unused;
}

SplitPlan default_split(const std::vector<std::pair<int, int>>& subject_sessions) {
    std::map<int, std::set<int>> sessions;
    for (auto [subj, sess] : subject_sessions) sessions[subj].insert(sess);
    SplitPlan plan;
    for (const auto& [subj, set] : sessions) {
        if (set.size() < 3) {
            throw ConfigError("subject " + std::to_string(subj) + " has fewer than 3 sessions; cannot hold out val and test");
        }
        std::vector<int> v(set.begin(), set.end());
        SplitPlan::Sessions s;
        s.test = v.back();
        s.val = v[v.size() - 2];
        s.train.assign(v.begin(), v.end() - 2);
        plan.per_subject[subj] = s;
    }
    plan.validate();
    return plan;
}

SplitPlan default_split(const std::vector<signal::TrialSegment>& segments) {
    std::vector<std::pair<int, int>> ss;
    for (const auto& s : segments) ss.emplace_back(s.subject_id, s.session_id);
    return default_split(ss);
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j{{"task", std::string(task_name(r.task))},
                     {"accuracy", r.accuracy},
                     {"per_class", r.per_class},
                     {"confusion", r.confusion},
                     {"n_trials", r.n_trials},
                     {"checkpoint_hash", r.checkpoint_hash}};
    if (r.semantic_from_word >= 0) j["semantic_accuracy_from_word"] = r.semantic_from_word;
    return j;
}

EvalReport make_report(Task task, const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
    const int K = num_classes(task);
    EvalReport r;
    r.task = task;
    r.n_trials = static_cast<int>(truth.size());
    r.confusion.assign(K, std::vector<int>(K, 0));
    int correct = 0, sem_correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= K || predicted[i] < 0 || predicted[i] >= K) throw RangeError("label out of range");
        r.confusion[truth[i]][predicted[i]]++;
        correct += truth[i] == predicted[i];
        if (task == Task::word24) {
            sem_correct += signal::semantic_group(truth[i]) == signal::semantic_group(predicted[i]);
        }
    }
    r.per_class.assign(K, 0.0);
    for (int k = 0; k < K; ++k) {
        int n = 0;
        for (int v : r.confusion[k]) n += v;
        r.per_class[k] = n > 0 ? static_cast<double>(r.confusion[k][k]) / n : 0.0;
    }
    r.accuracy = r.n_trials > 0 ? static_cast<double>(correct) / r.n_trials : 0.0;
    if (task == Task::word24) r.semantic_from_word = r.n_trials > 0 ? static_cast<double>(sem_correct) / r.n_trials : 0.0;
    return r;
}

void FinetuneConfig::validate() const {
    if (epochs < 1 || batch < 1) throw ConfigError("finetune epochs and batch must be positive");
    if (!(backbone_lr_scale >= 0)) throw ConfigError("backbone_lr_scale must be non-negative");
    if (head_warmup_epochs < 0 || head_warmup_epochs > epochs) throw ConfigError("head_warmup_epochs must lie in [0, epochs]");
    diff::TrainHyper h = hyper;
    h.total_steps = std::max(1, h.total_steps);
    h.validate();
    if (classifier.num_classes != num_classes(task)) throw ConfigError("classifier num_classes does not match the task");
    classifier.validate();
}

nlohmann::json to_json(const FinetuneConfig& c) {
    return {{"task", std::string(task_name(c.task))},
            {"epochs", c.epochs},
            {"batch", c.batch},
            {"lr_base", c.hyper.lr_base},
            {"lr_min", c.hyper.lr_min},
            {"weight_decay", c.hyper.weight_decay},
            {"clip_norm", c.hyper.clip_norm},
            {"beta1", c.hyper.beta1},
            {"beta2", c.hyper.beta2},
            {"eps_opt", c.hyper.eps_opt},
            {"freeze_backbone", c.freeze_backbone},
            {"backbone_lr_scale", c.backbone_lr_scale},
            {"head_warmup_epochs", c.head_warmup_epochs},
            {"revin_eps", c.revin_eps},
            {"seed", c.seed},
            {"classifier", to_json(c.classifier)}};
}

FinetuneConfig finetune_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {"task",  "epochs", "batch",   "lr_base",         "lr_min",
                                                   "weight_decay", "clip_norm", "beta1", "beta2", "eps_opt",
                                                   "freeze_backbone", "backbone_lr_scale", "head_warmup_epochs", "revin_eps", "seed", "classifier"};
    if (!j.is_object()) throw ConfigError("finetune config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("unknown finetune key '" + k + "'");
        }
    }
    FinetuneConfig c;
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.hyper.lr_base = j.value("lr_base", c.hyper.lr_base);
    c.hyper.lr_min = j.value("lr_min", c.hyper.lr_min);
    c.hyper.weight_decay = j.value("weight_decay", c.hyper.weight_decay);
    c.hyper.clip_norm = j.value("clip_norm", c.hyper.clip_norm);
    c.hyper.beta1 = j.value("beta1", c.hyper.beta1);
    c.hyper.beta2 = j.value("beta2", c.hyper.beta2);
    c.hyper.eps_opt = j.value("eps_opt", c.hyper.eps_opt);
    c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
    c.backbone_lr_scale = j.value("backbone_lr_scale", c.backbone_lr_scale);
    c.head_warmup_epochs = j.value("head_warmup_epochs", c.head_warmup_epochs);
    c.revin_eps = j.value("revin_eps", c.revin_eps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("classifier")) {
        c.classifier = classifier_config_from_json(j.at("classifier"));
    } else {
        c.classifier.num_classes = num_classes(c.task);
    }
    c.validate();
    return c;
}

namespace {

struct Batch {
    Mat patches;
    std::vector<int> subjects;
    int tokens = 0;
};

Batch make_batch(const std::vector<const signal::TrialSegment*>& trials, const backbone::ModelConfig& mc, double eps) {
    Batch b;
    const int C = trials.front()->channels();
    const int L = trials.front()->length();
    b.tokens = signal::patch_count(L, mc.P, mc.S);
    if (b.tokens == 0) throw InputTooShortError("trial segments shorter than one patch");
    const Eigen::Index per = static_cast<Eigen::Index>(C) * b.tokens;
    b.patches.resize(static_cast<Eigen::Index>(trials.size()) * per, mc.P);
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& t = *trials[i];
        if (t.channels() != C || t.length() != L) throw ShapeError("trial segments differ in shape");
        auto [norm, stats] = signal::revin_normalize(t.data, eps);
        b.patches.middleRows(static_cast<Eigen::Index>(i) * per, per) = signal::patchify_rows(norm, mc.P, mc.S);
        for (int c = 0; c < C; ++c) b.subjects.push_back(t.subject_id);
    }
    return b;
}

diff::ParamStore split_params(const diff::ParamStore& all, bool classifier) {
    diff::ParamStore out;
    for (const auto& p : all) {
        const bool is_cls = p.name.rfind("cls.", 0) == 0;
        const bool is_head = p.name.rfind("head.", 0) == 0;
        if (classifier ? is_cls : (!is_cls && !is_head)) out.add(p.name, p.shape, p.value);
    }
    return out;
}

diff::ParamStore merge_params(const diff::ParamStore& a, const diff::ParamStore& b) {
    diff::ParamStore out;
    for (const auto* ps : {&a, &b})
        for (const auto& p : *ps) out.add(p.name, p.shape, p.value);
    return out;
}

std::vector<int> argmax_rows(const Mat& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index k;
        logits.row(r).maxCoeff(&k);
        out[static_cast<std::size_t>(r)] = static_cast<int>(k);
    }
    return out;
}

std::vector<int> predict_with(diff::ParamStore& bb, diff::ParamStore& cls, const backbone::ModelConfig& mc,
                              const StClassifierConfig& cc, const std::vector<const signal::TrialSegment*>& trials,
                              double eps) {
    std::vector<int> out;
    const std::size_t chunk = 16;
    for (std::size_t i = 0; i < trials.size(); i += chunk) {
        std::vector<const signal::TrialSegment*> part(trials.begin() + i,
                                                      trials.begin() + std::min(trials.size(), i + chunk));
        auto batch = make_batch(part, mc, eps);
        diff::Graph g;
        Binder bb_bind(g, bb, false);
        Binder cls_bind(g, cls, false);
        Var feats = backbone::forward(bb_bind, mc, batch.patches, batch.tokens, batch.subjects);
        auto pred = argmax_rows(st_forward(cls_bind, cc, feats, batch.tokens).value());
        out.insert(out.end(), pred.begin(), pred.end());
    }
    return out;
}

std::vector<const signal::TrialSegment*> select(const std::vector<signal::TrialSegment>& trials, const SplitPlan& split,
                                                SplitPlan::Role role) {
    std::vector<const signal::TrialSegment*> out;
    for (const auto& t : trials) {
        if (t.labeled() && split.role(t.subject_id, t.session_id) == role) out.push_back(&t);
    }
    return out;
}

}  // namespace

FinetuneResult finetune(const backbone::Checkpoint& init, const std::vector<signal::TrialSegment>& trials,
                        const SplitPlan& split, const FinetuneConfig& cfg) {
    cfg.validate();
    split.validate();
    const auto mc = init.model_config();
    const auto train = select(trials, split, SplitPlan::Role::train);
    const auto val = select(trials, split, SplitPlan::Role::val);
    if (train.empty() || val.empty()) throw ConfigError("split leaves no training or no validation trials");
    if (train.front()->channels() != cfg.classifier.channels) {
        throw ShapeError("trials have " + std::to_string(train.front()->channels()) + " channels, classifier expects " +
                         std::to_string(cfg.classifier.channels));
    }

    diff::ParamStore bb = split_params(init.params, false);
    diff::ParamStore cls = init.config.contains("classifier") &&
                                   to_json(classifier_config_from_json(init.config.at("classifier"))) ==
                                       to_json(cfg.classifier)
                               ? split_params(init.params, true)
                               : init_classifier(cfg.classifier, mc.d, io::fnv1a("classifier", cfg.seed));

    const int n = static_cast<int>(train.size());
    const int steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    diff::TrainHyper hyper = cfg.hyper;
    hyper.total_steps = cfg.epochs * steps_per_epoch;
    auto bb_opt = diff::OptimState::for_params(bb);
    auto cls_opt = diff::OptimState::for_params(cls);
    std::mt19937_64 rng(io::fnv1a("finetune-order", cfg.seed));

    std::vector<int> val_truth;
    for (const auto* t : val) val_truth.push_back(task_label(*t, cfg.task));

    FinetuneResult result;
    diff::ParamStore best_bb = bb, best_cls = cls;
    double best_acc = -1.0;
    std::vector<const signal::TrialSegment*> order = train;
    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        double lr = 0.0;
        for (int b0 = 0; b0 < n; b0 += cfg.batch) {
            std::vector<const signal::TrialSegment*> part(order.begin() + b0,
                                                          order.begin() + std::min(n, b0 + cfg.batch));
            auto batch = make_batch(part, mc, cfg.revin_eps);
            std::vector<int> labels;
            for (const auto* t : part) labels.push_back(task_label(*t, cfg.task));

            bb.zero_grad();
            cls.zero_grad();
            diff::Graph g;
            const bool train_bb = !cfg.freeze_backbone && epoch >= cfg.head_warmup_epochs;
            Binder bb_bind(g, bb, train_bb);
            Binder cls_bind(g, cls, true);
            Var feats = backbone::forward(bb_bind, mc, batch.patches, batch.tokens, batch.subjects);
            Var loss = diff::cross_entropy(st_forward(cls_bind, cfg.classifier, feats, batch.tokens), labels);
            if (!std::isfinite(loss.scalar())) throw NumericError("non-finite finetuning loss");
            g.backward(loss);
            lr = diff::cosine_lr(step, hyper);
            if (!train_bb) {
                diff::clip_grad_norm(cls, hyper.clip_norm);
            } else {
                // One global norm across backbone and classifier.
                const double nb = diff::clip_grad_norm(bb, std::numeric_limits<double>::infinity());
                const double nc = diff::clip_grad_norm(cls, std::numeric_limits<double>::infinity());
                const double norm = std::sqrt(nb * nb + nc * nc);
                if (norm > hyper.clip_norm) {
                    const double s = hyper.clip_norm / norm;
                    for (auto& p : bb) p.grad *= s;
                    for (auto& p : cls) p.grad *= s;
                }
                diff::lamb_step(bb, bb_opt, hyper, lr * cfg.backbone_lr_scale);
            }
            diff::lamb_step(cls, cls_opt, hyper, lr);
            ++step;
            loss_sum += loss.scalar() * static_cast<double>(part.size());
        }
        const auto pred = predict_with(bb, cls, mc, cfg.classifier, val, cfg.revin_eps);
        const auto report = make_report(cfg.task, val_truth, pred);
        result.log.push_back({epoch, lr, loss_sum / n, report.accuracy});
        if (report.accuracy > best_acc) {
            best_acc = report.accuracy;
            best_bb = bb;
            best_cls = cls;
            result.best_epoch = epoch;
            result.val = report;
        }
    }

    nlohmann::json config{{"model", backbone::to_json(mc)},
                          {"classifier", to_json(cfg.classifier)},
                          {"finetune", to_json(cfg)}};
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : result.log) {
        log.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
    }
    nlohmann::json meta{{"config_hash", io::hex64(io::fnv1a(config.dump()))},
                        {"ancestor_hash", io::hex64(init.content_hash())},
                        {"ancestor_stage", std::string(backbone::stage_name(init.stage))},
                        {"best_epoch", result.best_epoch},
                        {"finetune_log", log},
                        {"seed", cfg.seed}};
    result.checkpoint = backbone::make_checkpoint(backbone::Stage::finetuned, std::move(config),
                                                  merge_params(best_bb, best_cls), {}, std::move(meta));
    // Report on the stored (float32-rounded) parameters so that evaluate() on the checkpoint agrees.
    result.val = evaluate(result.checkpoint, trials, split, SplitPlan::Role::val);
    return result;
}

std::vector<int> predict(backbone::Checkpoint& ckpt, const std::vector<const signal::TrialSegment*>& trials) {
    if (!ckpt.config.contains("classifier")) throw ConfigError("checkpoint has no classifier; finetune it first");
    if (trials.empty()) return {};
    const auto mc = ckpt.model_config();
    const auto cc = classifier_config_from_json(ckpt.config.at("classifier"));
    double eps = 1e-5;
    if (ckpt.config.contains("finetune")) eps = ckpt.config.at("finetune").value("revin_eps", eps);
    auto bb = split_params(ckpt.params, false);
    auto cls = split_params(ckpt.params, true);
    return predict_with(bb, cls, mc, cc, trials, eps);
}

EvalReport evaluate(backbone::Checkpoint& ckpt, const std::vector<signal::TrialSegment>& trials, const SplitPlan& split,
                    SplitPlan::Role role) {
    if (!ckpt.config.contains("finetune")) throw ConfigError("checkpoint has no task; finetune it first");
    const Task task = parse_task(ckpt.config.at("finetune").at("task").get<std::string>());
    const auto chosen = select(trials, split, role);
    std::vector<int> truth;
    for (const auto* t : chosen) truth.push_back(task_label(*t, task));
    auto report = make_report(task, truth, predict(ckpt, chosen));
    report.checkpoint_hash = io::hex64(ckpt.content_hash());
    return report;
}

}  // namespace lblm::classify
