#pragma once

#include "lblm/backbone/model.hpp"
#include "lblm/signal/types.hpp"

#include <string>
#include <vector>

namespace lblm::forecast {

struct LadderPair {
    int context = 204;
    int target = 46;

    bool operator==(const LadderPair&) const = default;
};

// (204, 46), (180, 70), (156, 94), (132, 118), (114, 136).
const std::vector<LadderPair>& default_ladder();
// "ctx:target,ctx:target,..."
std::vector<LadderPair> parse_ladder(const std::string& s);
std::string ladder_to_string(const std::vector<LadderPair>& ladder);

enum class RolloutMode {
    last_patch,  // append the last token's S-sample tail
    merged,      // average every generated patch over the samples it covers
};
std::string_view rollout_mode_name(RolloutMode m);
RolloutMode parse_rollout_mode(std::string_view s);

struct RolloutStats {
    int model_calls = 0;
    int generated = 0;  // before trimming to T
};

// context: C×L_ctx, already normalized. Runs the backbone causally on the
// end-aligned patches of the growing sequence, ceil(T/S) times. Returns C×T.
Mat rollout(diff::ParamStore& ps, const backbone::ModelConfig& cfg, const Mat& context, int T, int subject,
            RolloutMode mode = RolloutMode::last_patch, RolloutStats* stats = nullptr);

// Mean of all patch values covering each sample: length (N-1)·S + P.
Vec merge_overlaps(const Mat& patches, int S);

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};
Metrics forecast_metrics(const Mat& prediction, const Mat& truth);

// Repeats each channel's last context sample T times.
Mat persistence_baseline(const Mat& context, int T);

struct ForecastResult {
    int context_len = 0;
    int target_len = 0;
    Mat context;     // normalized scale
    Mat prediction;  // normalized scale, C×T
    Mat truth;       // normalized scale, C×T
    Metrics normalized;
    Metrics raw;
    Metrics baseline;  // persistence, normalized scale
};

// Forecasts samples [ctx, ctx+T) of a segment from samples [0, ctx). Context
// statistics normalize both context and truth; raw metrics undo it.
ForecastResult forecast_segment(diff::ParamStore& ps, const backbone::ModelConfig& cfg,
                                const signal::TrialSegment& seg, const LadderPair& pair,
                                RolloutMode mode = RolloutMode::last_patch, double revin_eps = 1e-5);

// One row per (segment, horizon, channel).
struct MetricRow {
    int segment = 0;
    int context = 0;
    int horizon = 0;
    int channel = 0;
    double mse = 0.0;
    double mae = 0.0;
    double raw_mse = 0.0;
    double raw_mae = 0.0;
    double baseline_mse = 0.0;
    double baseline_mae = 0.0;
};

struct LadderSummary {
    LadderPair pair;
    Metrics model;
    Metrics baseline;
    Metrics raw;
};

struct LadderEvaluation {
    std::vector<MetricRow> rows;
    std::vector<LadderSummary> summary;  // means over segments and channels
    std::vector<ForecastResult> examples;  // first segment at each horizon
};

LadderEvaluation evaluate_ladder(diff::ParamStore& ps, const backbone::ModelConfig& cfg,
                                 const std::vector<signal::TrialSegment>& segments,
                                 const std::vector<LadderPair>& ladder, RolloutMode mode = RolloutMode::last_patch);

std::string metrics_csv(const std::vector<MetricRow>& rows);
std::string summary_csv(const std::vector<LadderSummary>& summary);
// Columns: t, channel, truth, prediction, is_forecast. Context samples carry an
// empty prediction.
std::string overlay_csv(const ForecastResult& r);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lblm::forecast
