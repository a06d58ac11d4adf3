#include "lblm/pretrain/pretrain.hpp"

#include "lblm/io.hpp"
#include "lblm/signal/patch.hpp"
#include "lblm/signal/spectrum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lblm::pretrain {

using backbone::Binder;
using backbone::ModelConfig;
using backbone::Stage;
using diff::Var;

const std::vector<WindowRow>& default_ladder() {
    static const std::vector<WindowRow> ladder = {{204, 46}, {180, 70}, {156, 94}, {132, 118}, {114, 136}};
    return ladder;
}

void PretrainConfig::validate() const {
    if (stage != Stage::mstp && stage != Stage::astp) throw ConfigError("pretraining stage must be mstp or astp");
    if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be positive");
    if (lambda1 < 0 || lambda2 < 0) throw ConfigError("loss weights must be non-negative");
    if (!(delta > 0)) throw ConfigError("Huber delta must be positive");
    if (!(mask_ratio > 0 && mask_ratio < 1)) throw ConfigError("mask ratio must lie in (0, 1)");
    if (stage == Stage::astp && windows.empty()) throw ConfigError("astp needs a window table");
    if (!(revin_eps > 0)) throw ConfigError("revin_eps must be positive");
    diff::TrainHyper h = hyper;
    h.total_steps = std::max(1, h.total_steps);
    h.validate();
}

nlohmann::json to_json(const PretrainConfig& c) {
    nlohmann::json win = nlohmann::json::array();
    for (const auto& w : c.windows) win.push_back({w.context, w.target});
    return {{"stage", std::string(backbone::stage_name(c.stage))},
            {"epochs", c.epochs},
            {"batch", c.batch},
            {"lambda1", c.lambda1},
            {"lambda2", c.lambda2},
            {"delta", c.delta},
            {"mask_ratio", c.mask_ratio},
            {"windows", win},
            {"revin_eps", c.revin_eps},
            {"lr_base", c.hyper.lr_base},
            {"lr_min", c.hyper.lr_min},
            {"weight_decay", c.hyper.weight_decay},
            {"clip_norm", c.hyper.clip_norm},
            {"beta1", c.hyper.beta1},
            {"beta2", c.hyper.beta2},
            {"eps_opt", c.hyper.eps_opt},
            {"seed", c.seed},
            {"allow_unordered", c.allow_unordered}};
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "stage", "epochs",  "batch",        "lambda1", "lambda2", "delta", "mask_ratio", "windows", "revin_eps",
        "lr_base", "lr_min", "weight_decay", "clip_norm", "beta1",  "beta2", "eps_opt",    "seed",    "allow_unordered"};
    if (!j.is_object()) throw ConfigError("pretrain config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("unknown pretrain key '" + k + "'");
        }
    }
    PretrainConfig c;
    if (j.contains("stage")) c.stage = backbone::parse_stage(j.at("stage").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.delta = j.value("delta", c.delta);
    c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
    if (j.contains("windows")) {
        c.windows.clear();
        for (const auto& w : j.at("windows")) c.windows.push_back({w.at(0).get<int>(), w.at(1).get<int>()});
    }
    c.revin_eps = j.value("revin_eps", c.revin_eps);
    c.hyper.lr_base = j.value("lr_base", c.hyper.lr_base);
    c.hyper.lr_min = j.value("lr_min", c.hyper.lr_min);
    c.hyper.weight_decay = j.value("weight_decay", c.hyper.weight_decay);
    c.hyper.clip_norm = j.value("clip_norm", c.hyper.clip_norm);
    c.hyper.beta1 = j.value("beta1", c.hyper.beta1);
    c.hyper.beta2 = j.value("beta2", c.hyper.beta2);
    c.hyper.eps_opt = j.value("eps_opt", c.hyper.eps_opt);
    c.seed = j.value("seed", c.seed);
    c.allow_unordered = j.value("allow_unordered", c.allow_unordered);
    c.validate();
    return c;
}

MaskPlan sample_mask(int N, double r, std::mt19937_64& rng) {
    if (!(r > 0 && r < 1)) throw ConfigError("mask ratio must lie in (0, 1)");
    if (N < 1) throw ConfigError("cannot mask an empty sequence");
    MaskPlan plan;
    plan.N = N;
    plan.r = r;
    const int k = std::max(1, static_cast<int>(std::lround(r * N)));
    std::vector<int> all(static_cast<std::size_t>(N));
    std::iota(all.begin(), all.end(), 0);
    // Partial Fisher-Yates: the first k entries are a uniform sample.
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, N - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    plan.indices.assign(all.begin(), all.begin() + k);
    std::sort(plan.indices.begin(), plan.indices.end());
    return plan;
}

WindowPlan sample_window(int segment_len, const std::vector<WindowRow>& table, std::mt19937_64& rng) {
    if (table.empty()) throw ConfigError("window table is empty");
    for (const auto& row : table) {
        if (row.context < 1 || row.target < 1 || row.context + row.target > segment_len) {
            throw ConfigError("window row (" + std::to_string(row.context) + ", " + std::to_string(row.target) +
                              ") does not fit a segment of " + std::to_string(segment_len) + " samples");
        }
    }
    std::uniform_int_distribution<std::size_t> pick_row(0, table.size() - 1);
    const auto& row = table[pick_row(rng)];
    std::uniform_int_distribution<int> pick_off(0, segment_len - row.context - row.target);
    return {row.context, row.target, pick_off(rng)};
}

AstpLayout astp_layout(int context, int target, int P, int S) {
    if (context < P) throw InputTooShortError("ASTP context shorter than one patch");
    if (target < P) throw ConfigError("ASTP target shorter than one patch");
    if (S > P) throw ConfigError("ASTP needs stride <= patch length");
    AstpLayout a;
    a.lead = signal::end_aligned_lead(context, P, S);
    a.n_ctx = signal::patch_count(context - a.lead, P, S);
    a.m = target / S;
    return a;
}

namespace {

// Standardizes x in place with mean/std taken over its first `stat_len` samples.
void normalize_prefix(Eigen::Ref<RowVec> x, int stat_len, double eps) {
    const auto head = x.head(stat_len);
    const double mu = head.mean();
    const double sd = std::max(std::sqrt((head.array() - mu).square().mean()), eps);
    x = (x.array() - mu) / sd;
}

Var gathered_total(diff::Graph&, Var w, Var a, Var p, const PretrainConfig& pc) {
    return diff::add(diff::add(w, diff::scale(a, pc.lambda1)), diff::scale(p, pc.lambda2));
}

}  // namespace

LossTerms spectro_loss(diff::Graph& g, const backbone::HeadOutputs& heads, const std::vector<int>& rows,
                       const Mat& targets, const PretrainConfig& pc) {
    if (rows.empty()) throw ConfigError("no positions contribute to the loss");
    if (static_cast<Eigen::Index>(rows.size()) != targets.rows()) throw ShapeError("one target patch per row needed");
    Mat amp, phase;
    signal::fft_components_rows(targets, amp, phase);
    Var w = diff::huber_mean(diff::gather_rows(heads.wave, rows), targets, pc.delta);
    Var a = diff::huber_mean(diff::gather_rows(heads.amp, rows), amp, pc.delta);
    Var p = diff::huber_mean(diff::gather_rows(heads.phase, rows), phase, pc.delta);
    LossTerms t;
    t.total = gathered_total(g, w, a, p, pc);
    t.wave = w.scalar();
    t.amp = a.scalar();
    t.phase = p.scalar();
    t.heads = heads;
    return t;
}

LossTerms mstp_loss(Binder& b, const ModelConfig& cfg, const Mat& raw, const std::vector<int>& subjects,
                    const std::vector<MaskPlan>& masks, const PretrainConfig& pc) {
    const int L = static_cast<int>(raw.cols());
    const int N = signal::patch_count(L, cfg.P, cfg.S);
    if (N == 0) throw InputTooShortError("segment shorter than one patch");
    const auto nseq = raw.rows();
    if (static_cast<Eigen::Index>(masks.size()) != nseq) throw ShapeError("one mask plan per sequence needed");

    Mat patches(nseq * N, cfg.P);
    std::vector<char> mask(static_cast<std::size_t>(nseq * N), 0);
    std::vector<int> rows;
    for (Eigen::Index s = 0; s < nseq; ++s) {
        RowVec x = raw.row(s);
        normalize_prefix(x, L, pc.revin_eps);
        patches.middleRows(s * N, N) = signal::patchify(std::span<const double>(x.data(), L), cfg.P, cfg.S).patches;
        const auto& mp = masks[s];
        if (mp.N != N) throw ShapeError("mask plan was drawn for a different token count");
        if (mp.indices.empty()) throw ConfigError("empty mask");
        for (int i : mp.indices) {
            if (i < 0 || i >= N) throw RangeError("mask index out of range");
            mask[s * N + i] = 1;
            rows.push_back(static_cast<int>(s * N + i));
        }
    }
    backbone::ForwardOptions opt;
    opt.mask = &mask;
    Var feats = backbone::forward(b, cfg, patches, N, subjects, opt);
    auto heads = backbone::prediction_heads(b, feats);
    Mat targets(static_cast<Eigen::Index>(rows.size()), cfg.P);
    for (std::size_t i = 0; i < rows.size(); ++i) targets.row(static_cast<Eigen::Index>(i)) = patches.row(rows[i]);
    return spectro_loss(b.graph(), heads, rows, targets, pc);
}

LossTerms astp_loss(Binder& b, const ModelConfig& cfg, const Mat& windows, const std::vector<int>& subjects,
                    int context, int target, const PretrainConfig& pc) {
    if (windows.cols() != context + target) throw ShapeError("window rows must hold context + target samples");
    const auto lay = astp_layout(context, target, cfg.P, cfg.S);
    const int G = lay.inputs();
    const int total_patches = lay.n_ctx + lay.m;
    const auto nseq = windows.rows();

    Mat inputs(nseq * G, cfg.P);
    Mat targets(nseq * lay.m, cfg.P);
    std::vector<int> rows;
    for (Eigen::Index s = 0; s < nseq; ++s) {
        RowVec x = windows.row(s);
        normalize_prefix(x, context, pc.revin_eps);
        for (int j = 0; j < total_patches; ++j) {
            auto patch = x.segment(lay.lead + j * cfg.S, cfg.P);
            if (j < G) inputs.row(s * G + j) = patch;
            if (j >= lay.n_ctx) targets.row(s * lay.m + (j - lay.n_ctx)) = patch;
        }
        for (int j = lay.n_ctx - 1; j < G; ++j) rows.push_back(static_cast<int>(s * G + j));
    }
    backbone::ForwardOptions opt;
    opt.causal = true;
    Var feats = backbone::forward(b, cfg, inputs, G, subjects, opt);
    auto heads = backbone::prediction_heads(b, feats);
    return spectro_loss(b.graph(), heads, rows, targets, pc);
}

namespace {

LossValue finish(diff::Graph& g, const LossTerms& t, bool backward) {
    if (backward) g.backward(t.total);
    return {t.value(), t.wave, t.amp, t.phase};
}

}  // namespace

LossValue mstp_loss(diff::ParamStore& ps, const ModelConfig& cfg, const Mat& segment, int subject,
                    const MaskPlan& mask, const PretrainConfig& pc, bool backward) {
    diff::Graph g;
    Binder b(g, ps, backward);
    std::vector<int> subjects(static_cast<std::size_t>(segment.rows()), subject);
    std::vector<MaskPlan> masks(static_cast<std::size_t>(segment.rows()), mask);
    return finish(g, mstp_loss(b, cfg, segment, subjects, masks, pc), backward);
}

LossValue astp_loss(diff::ParamStore& ps, const ModelConfig& cfg, const Mat& segment, int subject,
                    const WindowPlan& plan, const PretrainConfig& pc, bool backward) {
    const int span = plan.context_len + plan.target_len;
    if (plan.offset < 0 || plan.offset + span > segment.cols()) throw RangeError("window plan exceeds the segment");
    diff::Graph g;
    Binder b(g, ps, backward);
    std::vector<int> subjects(static_cast<std::size_t>(segment.rows()), subject);
    Mat windows = segment.middleCols(plan.offset, span);
    return finish(g, astp_loss(b, cfg, windows, subjects, plan.context_len, plan.target_len, pc), backward);
}

PretrainResult run_pretrain(const PretrainConfig& pc, const ModelConfig& model,
                            const std::vector<signal::TrialSegment>& segments, const backbone::Checkpoint* init) {
    pc.validate();
    model.validate();
    if (pc.stage == Stage::astp && !pc.allow_unordered && (init == nullptr || init->stage < Stage::mstp)) {
        throw ConfigError("astp pretraining needs an mstp checkpoint as init (stage ordering mstp -> astp)");
    }
    if (segments.empty()) throw ConfigError("pretraining corpus is empty");
    const int L = segments.front().length();
    for (const auto& s : segments) {
        if (s.length() != L) throw ShapeError("pretraining segments must share one length");
        if (s.subject_id < 0 || s.subject_id >= model.K_subjects) throw RangeError("segment subject outside model range");
    }
    if (pc.stage == Stage::astp) {
        for (const auto& w : pc.windows) {
            astp_layout(w.context, w.target, model.P, model.S);
            if (w.context + w.target > L) throw ConfigError("window row longer than the pretraining segments");
        }
    } else if (L < model.P) {
        throw InputTooShortError("segments shorter than one patch");
    }

    diff::ParamStore params;
    if (init != nullptr) {
        if (backbone::to_json(init->model_config()) != backbone::to_json(model)) {
            throw ConfigError("init checkpoint was trained with a different model config");
        }
        params = init->params;
    } else {
        params = backbone::init_params(model, pc.seed);
    }

    std::vector<std::pair<int, int>> seqs;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        for (int c = 0; c < segments[i].channels(); ++c) seqs.emplace_back(static_cast<int>(i), c);
    }
    const int nseq = static_cast<int>(seqs.size());
    const int steps_per_epoch = (nseq + pc.batch - 1) / pc.batch;
    diff::TrainHyper hyper = pc.hyper;
    hyper.total_steps = pc.epochs * steps_per_epoch;

    std::mt19937_64 order_rng(io::fnv1a("order", pc.seed));
    std::mt19937_64 sample_rng(io::fnv1a("sample", pc.seed));
    auto optim = diff::OptimState::for_params(params);
    diff::ParamStore last_good = params;
    diff::OptimState last_good_optim = optim;

    PretrainResult result;
    int step = 0;
    const auto t0 = std::chrono::steady_clock::now();
    const int N = signal::patch_count(L, model.P, model.S);

    for (int epoch = 0; epoch < pc.epochs && !result.aborted; ++epoch) {
        std::shuffle(seqs.begin(), seqs.end(), order_rng);
        LossValue sum;
        double lr = 0.0;
        for (int b0 = 0; b0 < nseq; b0 += pc.batch) {
            const int bn = std::min(pc.batch, nseq - b0);
            std::vector<int> subjects(static_cast<std::size_t>(bn));
            for (int i = 0; i < bn; ++i) subjects[i] = segments[seqs[b0 + i].first].subject_id;

            params.zero_grad();
            diff::Graph g;
            Binder binder(g, params, true);
            LossTerms terms;
            if (pc.stage == Stage::mstp) {
                Mat raw(bn, L);
                std::vector<MaskPlan> masks;
                for (int i = 0; i < bn; ++i) {
                    raw.row(i) = segments[seqs[b0 + i].first].data.row(seqs[b0 + i].second);
                    masks.push_back(sample_mask(N, pc.mask_ratio, sample_rng));
                }
                terms = mstp_loss(binder, model, raw, subjects, masks, pc);
            } else {
                const auto plan = sample_window(L, pc.windows, sample_rng);
                const int span = plan.context_len + plan.target_len;
                std::uniform_int_distribution<int> off(0, L - span);
                Mat win(bn, span);
                for (int i = 0; i < bn; ++i) {
                    const int o = i == 0 ? plan.offset : off(sample_rng);
                    win.row(i) = segments[seqs[b0 + i].first].data.row(seqs[b0 + i].second).segment(o, span);
                }
                terms = astp_loss(binder, model, win, subjects, plan.context_len, plan.target_len, pc);
            }
            if (!std::isfinite(terms.value())) {
                result.aborted = true;
                result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step);
                break;
            }
            g.backward(terms.total);
            diff::clip_grad_norm(params, hyper.clip_norm);
            lr = diff::cosine_lr(step, hyper);
            try {
                diff::lamb_step(params, optim, hyper, lr);
            } catch (const NumericError& e) {
                result.aborted = true;
                result.abort_reason = e.what();
                break;
            }
            ++step;
            sum.total += terms.value() * bn;
            sum.wave += terms.wave * bn;
            sum.amp += terms.amp * bn;
            sum.phase += terms.phase * bn;
        }
        if (result.aborted) break;
        EpochLog row;
        row.stage = pc.stage;
        row.epoch = epoch;
        row.lr = lr;
        row.loss = {sum.total / nseq, sum.wave / nseq, sum.amp / nseq, sum.phase / nseq};
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);
        last_good = params;
        last_good_optim = optim;
    }

    nlohmann::json config{{"model", backbone::to_json(model)}, {"pretrain", to_json(pc)}};
    nlohmann::json losses = nlohmann::json::array();
    for (const auto& r : result.log) {
        losses.push_back({{"epoch", r.epoch},
                          {"lr", r.lr},
                          {"loss_total", r.loss.total},
                          {"loss_wave", r.loss.wave},
                          {"loss_amp", r.loss.amp},
                          {"loss_phase", r.loss.phase}});
    }
    nlohmann::json meta{{"config_hash", io::hex64(io::fnv1a(config.dump()))},
                        {"seed", pc.seed},
                        {"loss_log", losses},
                        {"ancestor_hash", nullptr},
                        {"ancestor_stage", nullptr}};
    if (init != nullptr) {
        meta["ancestor_hash"] = io::hex64(init->content_hash());
        meta["ancestor_stage"] = std::string(backbone::stage_name(init->stage));
    }
    if (result.aborted) meta["aborted"] = result.abort_reason;
    result.checkpoint = backbone::make_checkpoint(pc.stage, std::move(config), std::move(last_good),
                                                  std::move(last_good_optim), std::move(meta));
    return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log, bool header) {
    std::ostringstream os;
    os.precision(10);
    if (header) os << "stage,epoch,lr,loss_total,loss_wave,loss_amp,loss_phase,wall_seconds\n";
    for (const auto& r : log) {
        os << backbone::stage_name(r.stage) << ',' << r.epoch << ',' << r.lr << ',' << r.loss.total << ','
           << r.loss.wave << ',' << r.loss.amp << ',' << r.loss.phase << ',' << r.wall_seconds << '\n';
    }
    return os.str();
}

}  // namespace lblm::pretrain
