#include "lblm/forecast/forecast.hpp"

#include "lblm/signal/patch.hpp"
#include "lblm/signal/revin.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace lblm::forecast {

const std::vector<LadderPair>& default_ladder() {
    static const std::vector<LadderPair> ladder = {{204, 46}, {180, 70}, {156, 94}, {132, 118}, {114, 136}};
    return ladder;
}

std::vector<LadderPair> parse_ladder(const std::string& s) {
    std::vector<LadderPair> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("ladder entry '" + item + "' is not ctx:target");
        LadderPair p;
        try {
            std::size_t used = 0;
            p.context = std::stoi(item.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument("trailing");
            const std::string t = item.substr(colon + 1);
            p.target = std::stoi(t, &used);
            if (used != t.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError("ladder entry '" + item + "' is not ctx:target");
        }
        if (p.context < 1 || p.target < 1) throw ConfigError("ladder lengths must be positive");
        out.push_back(p);
    }
    if (out.empty()) throw ConfigError("empty horizon ladder");
    return out;
}

std::string ladder_to_string(const std::vector<LadderPair>& ladder) {
    std::string s;
    for (const auto& p : ladder) {
        if (!s.empty()) s += ',';
        s += std::to_string(p.context) + ':' + std::to_string(p.target);
    }
    return s;
}

std::string_view rollout_mode_name(RolloutMode m) { return m == RolloutMode::merged ? "merged" : "last_patch"; }

RolloutMode parse_rollout_mode(std::string_view s) {
    if (s == "last_patch") return RolloutMode::last_patch;
    if (s == "merged") return RolloutMode::merged;
    throw ConfigError("unknown rollout mode '" + std::string(s) + "'");
}

namespace {

// Wave-head prediction of the patch after each channel's last token.
Mat next_patches(diff::ParamStore& ps, const backbone::ModelConfig& cfg, const Mat& seq, int subject) {
    const int L = static_cast<int>(seq.cols());
    const int lead = signal::end_aligned_lead(L, cfg.P, cfg.S);
    int N = signal::patch_count(L - lead, cfg.P, cfg.S);
    int skip = 0;
    if (N > cfg.n_max) {
        skip = N - cfg.n_max;
        N = cfg.n_max;
    }
    const Mat window = seq.rightCols(L - lead - skip * cfg.S);
    const Mat patches = signal::patchify_rows(window, cfg.P, cfg.S);
    diff::Graph g;
    backbone::Binder b(g, ps, false);
    backbone::ForwardOptions opt;
    opt.causal = true;
    std::vector<int> subjects(static_cast<std::size_t>(seq.rows()), subject);
    auto feats = backbone::forward(b, cfg, patches, N, subjects, opt);
    const Mat wave = backbone::prediction_heads(b, feats).wave.value();
    Mat out(seq.rows(), cfg.P);
    for (Eigen::Index c = 0; c < seq.rows(); ++c) out.row(c) = wave.row(c * N + N - 1);
    return out;
}

}  // namespace

Mat rollout(diff::ParamStore& ps, const backbone::ModelConfig& cfg, const Mat& context, int T, int subject,
            RolloutMode mode, RolloutStats* stats) {
    const int P = cfg.P;
    const int S = cfg.S;
    const int L0 = static_cast<int>(context.cols());
    if (L0 < P) throw InputTooShortError("forecast context of " + std::to_string(L0) + " samples is shorter than one patch");
    if (T < 1) throw ConfigError("forecast horizon must be positive");
    const int calls = (T + S - 1) / S;
    const int C = static_cast<int>(context.rows());
    Mat seq(C, L0 + calls * S);
    seq.leftCols(L0) = context;
    Mat sum = Mat::Zero(C, calls * S);
    Vec count = Vec::Zero(calls * S);
    int L = L0;
    for (int k = 0; k < calls; ++k) {
        const Mat next = next_patches(ps, cfg, seq.leftCols(L), subject);
        // The predicted patch covers [L - P + S, L + S).
        if (mode == RolloutMode::last_patch) {
            seq.middleCols(L, S) = next.rightCols(S);
        } else {
            const int first = L - P + S;
            for (int j = 0; j < P; ++j) {
                const int pos = first + j - L0;
                if (pos < 0) continue;
                sum.col(pos) += next.col(j);
                count(pos) += 1.0;
            }
            const int lo = std::max(0, first - L0);
            for (int pos = lo; pos < L + S - L0; ++pos) seq.col(L0 + pos) = sum.col(pos) / count(pos);
        }
        L += S;
    }
    if (stats) {
        stats->model_calls = calls;
        stats->generated = calls * S;
    }
    return seq.middleCols(L0, T);
}

Vec merge_overlaps(const Mat& patches, int S) {
    const auto N = patches.rows();
    const auto P = patches.cols();
    if (N < 1) throw ConfigError("merge_overlaps needs at least one patch");
    if (S < 1) throw ConfigError("stride must be positive");
    const Eigen::Index len = (N - 1) * S + P;
    Vec sum = Vec::Zero(len);
    Vec count = Vec::Zero(len);
    for (Eigen::Index i = 0; i < N; ++i) {
        sum.segment(i * S, P) += patches.row(i).transpose();
        count.segment(i * S, P).array() += 1.0;
    }
    // Gaps (S > P) are left at zero.
    return (count.array() > 0).select(sum.array() / count.array().max(1.0), 0.0);
}

Metrics forecast_metrics(const Mat& prediction, const Mat& truth) {
    if (prediction.rows() != truth.rows() || prediction.cols() != truth.cols()) {
        throw ShapeError("prediction and truth shapes differ");
    }
    if (truth.size() == 0) throw ShapeError("empty forecast");
    const Mat diff = prediction - truth;
    return {diff.array().square().mean(), diff.array().abs().mean()};
}

Mat persistence_baseline(const Mat& context, int T) {
    if (context.cols() < 1) throw InputTooShortError("persistence baseline needs at least one context sample");
    if (T < 1) throw ConfigError("forecast horizon must be positive");
    return context.col(context.cols() - 1).replicate(1, T);
}

ForecastResult forecast_segment(diff::ParamStore& ps, const backbone::ModelConfig& cfg,
                                const signal::TrialSegment& seg, const LadderPair& pair, RolloutMode mode,
                                double revin_eps) {
    if (pair.context + pair.target > seg.length()) {
        throw RangeError("segment of " + std::to_string(seg.length()) + " samples cannot hold " +
                         std::to_string(pair.context) + "+" + std::to_string(pair.target));
    }
    ForecastResult r;
    r.context_len = pair.context;
    r.target_len = pair.target;
    auto [ctx, stats] = signal::revin_normalize(seg.data.leftCols(pair.context), revin_eps);
    const Mat raw_truth = seg.data.middleCols(pair.context, pair.target);
    r.truth.resize(raw_truth.rows(), raw_truth.cols());
    for (Eigen::Index c = 0; c < raw_truth.rows(); ++c) {
        r.truth.row(c) = (raw_truth.row(c).array() - stats.mu(c)) / stats.sigma(c);
    }
    r.prediction = rollout(ps, cfg, ctx, pair.target, seg.subject_id, mode);
    r.context = std::move(ctx);
    r.normalized = forecast_metrics(r.prediction, r.truth);
    r.raw = forecast_metrics(signal::revin_denormalize(r.prediction, stats), raw_truth);
    r.baseline = forecast_metrics(persistence_baseline(r.context, pair.target), r.truth);
    return r;
}

LadderEvaluation evaluate_ladder(diff::ParamStore& ps, const backbone::ModelConfig& cfg,
                                 const std::vector<signal::TrialSegment>& segments,
                                 const std::vector<LadderPair>& ladder, RolloutMode mode) {
    if (segments.empty()) throw ConfigError("no segments to forecast");
    LadderEvaluation ev;
    for (const auto& pair : ladder) {
        LadderSummary s;
        s.pair = pair;
        double n = 0.0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            auto r = forecast_segment(ps, cfg, segments[i], pair, mode);
            for (Eigen::Index c = 0; c < r.truth.rows(); ++c) {
                MetricRow row;
                row.segment = static_cast<int>(i);
                row.context = pair.context;
                row.horizon = pair.target;
                row.channel = static_cast<int>(c);
                const auto m = forecast_metrics(r.prediction.row(c), r.truth.row(c));
                const auto b = forecast_metrics(persistence_baseline(r.context.row(c), pair.target), r.truth.row(c));
                row.mse = m.mse;
                row.mae = m.mae;
                row.baseline_mse = b.mse;
                row.baseline_mae = b.mae;
                ev.rows.push_back(row);
            }
            // Raw-scale metrics are per segment; spread them over the channel rows.
            const auto raw = r.raw;
            for (auto it = ev.rows.end() - r.truth.rows(); it != ev.rows.end(); ++it) {
                it->raw_mse = raw.mse;
                it->raw_mae = raw.mae;
            }
            s.model.mse += r.normalized.mse;
            s.model.mae += r.normalized.mae;
            s.baseline.mse += r.baseline.mse;
            s.baseline.mae += r.baseline.mae;
            s.raw.mse += r.raw.mse;
            s.raw.mae += r.raw.mae;
            n += 1.0;
            if (i == 0) ev.examples.push_back(std::move(r));
        }
        for (auto* m : {&s.model, &s.baseline, &s.raw}) {
            m->mse /= n;
            m->mae /= n;
        }
        ev.summary.push_back(s);
    }
    return ev;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string out = "segment,context,horizon,channel,mse,mae,raw_mse,raw_mae,baseline_mse,baseline_mae\n";
    for (const auto& r : rows) {
        out += std::to_string(r.segment) + ',' + std::to_string(r.context) + ',' + std::to_string(r.horizon) + ',' +
               std::to_string(r.channel) + ',' + fmt(r.mse) + ',' + fmt(r.mae) + ',' + fmt(r.raw_mse) + ',' +
               fmt(r.raw_mae) + ',' + fmt(r.baseline_mse) + ',' + fmt(r.baseline_mae) + '\n';
    }
    return out;
}

std::string summary_csv(const std::vector<LadderSummary>& summary) {
    std::string out = "context,horizon,mse,mae,raw_mse,raw_mae,baseline_mse,baseline_mae\n";
    for (const auto& s : summary) {
        out += std::to_string(s.pair.context) + ',' + std::to_string(s.pair.target) + ',' + fmt(s.model.mse) + ',' +
               fmt(s.model.mae) + ',' + fmt(s.raw.mse) + ',' + fmt(s.raw.mae) + ',' + fmt(s.baseline.mse) + ',' +
               fmt(s.baseline.mae) + '\n';
    }
    return out;
}

std::string overlay_csv(const ForecastResult& r) {
    std::string out = "t,channel,truth,prediction,is_forecast\n";
    for (Eigen::Index c = 0; c < r.context.rows(); ++c) {
        for (Eigen::Index t = 0; t < r.context.cols(); ++t) {
            out += std::to_string(t) + ',' + std::to_string(c) + ',' + fmt(r.context(c, t)) + ",,0\n";
        }
        for (Eigen::Index t = 0; t < r.truth.cols(); ++t) {
            out += std::to_string(r.context_len + t) + ',' + std::to_string(c) + ',' + fmt(r.truth(c, t)) + ',' +
                   fmt(r.prediction(c, t)) + ",1\n";
        }
    }
    return out;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman needs two equal-length samples of size >= 2");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace lblm::forecast
