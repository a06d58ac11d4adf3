#pragma once

#include "lblm/backbone/checkpoint.hpp"
#include "lblm/backbone/model.hpp"
#include "lblm/diff/optim.hpp"
#include "lblm/signal/types.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <random>
#include <vector>

namespace lblm::pretrain {

struct WindowRow {
    int context = 204;
    int target = 46;

    bool operator==(const WindowRow&) const = default;
};

// (204,46) (180,70) (156,94) (132,118) (114,136): every pair spans 250 samples.
const std::vector<WindowRow>& default_ladder();

struct PretrainConfig {
    backbone::Stage stage = backbone::Stage::mstp;
    int epochs = 10;
    int batch = 32;  // channel sequences per optimizer step
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double delta = 1.0;
    double mask_ratio = 0.1;
    std::vector<WindowRow> windows = default_ladder();
    double revin_eps = 1e-5;
    diff::TrainHyper hyper;  // total_steps is derived by run_pretrain
    std::uint64_t seed = 0;
    // Permits astp without an mstp ancestor.
    bool allow_unordered = false;

    void validate() const;
};

nlohmann::json to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct MaskPlan {
    int N = 0;
    double r = 0.1;
    std::vector<int> indices;  // sorted, distinct
};

// Uniform sample without replacement of max(1, round(r·N)) token indices.
MaskPlan sample_mask(int N, double r, std::mt19937_64& rng);

struct WindowPlan {
    int context_len = 0;
    int target_len = 0;
    int offset = 0;
};

// Checks every row (context >= P is checked by the loss), picks one uniformly
// and draws offset uniformly from [0, segment_len - context - target].
WindowPlan sample_window(int segment_len, const std::vector<WindowRow>& table, std::mt19937_64& rng);

// Token layout of one ASTP window: patches are aligned so the last context
// patch ends at the context boundary; `lead` samples at the front are unused.
// Tokens 0..n_ctx-1 lie in the context; target patches n_ctx..n_ctx+m-1 each
// end S samples after their predecessor, m = floor(T / S). The model sees
// tokens 0..n_ctx+m-2 and token j predicts patch j+1.
struct AstpLayout {
    int lead = 0;
    int n_ctx = 0;
    int m = 0;
    int inputs() const { return n_ctx + m - 1; }
};
AstpLayout astp_layout(int context, int target, int P, int S);

struct LossTerms {
    diff::Var total;
    double wave = 0.0;
    double amp = 0.0;
    double phase = 0.0;
    backbone::HeadOutputs heads;  // on every input token

    double value() const { return total.scalar(); }
};

// Huber wave + λ1 amplitude + λ2 phase between head outputs at `rows` and the
// spectro-temporal targets of `targets` (one patch per entry of rows).
LossTerms spectro_loss(diff::Graph& g, const backbone::HeadOutputs& heads, const std::vector<int>& rows,
                       const Mat& targets, const PretrainConfig& pc);

// Batched MSTP. raw has one channel sequence per row (length L); each row is
// RevIN-normalized, patchified and masked with masks[row].
LossTerms mstp_loss(backbone::Binder& b, const backbone::ModelConfig& cfg, const Mat& raw,
                    const std::vector<int>& subjects, const std::vector<MaskPlan>& masks, const PretrainConfig& pc);

// Single-segment MSTP with one mask shared by all channels. Accumulates
// gradients into ps when backward is true. Returns the breakdown.
struct LossValue {
    double total = 0.0;
    double wave = 0.0;
    double amp = 0.0;
    double phase = 0.0;
};
LossValue mstp_loss(diff::ParamStore& ps, const backbone::ModelConfig& cfg, const Mat& segment, int subject,
                    const MaskPlan& mask, const PretrainConfig& pc, bool backward);

// Batched ASTP. windows has one row per channel sequence holding exactly
// context + target samples; each row is normalized with its context's
// statistics. Causal attention and convolution throughout.
LossTerms astp_loss(backbone::Binder& b, const backbone::ModelConfig& cfg, const Mat& windows,
                    const std::vector<int>& subjects, int context, int target, const PretrainConfig& pc);

LossValue astp_loss(diff::ParamStore& ps, const backbone::ModelConfig& cfg, const Mat& segment, int subject,
                    const WindowPlan& plan, const PretrainConfig& pc, bool backward);

struct EpochLog {
    backbone::Stage stage;
    int epoch = 0;
    double lr = 0.0;
    LossValue loss;
    double wall_seconds = 0.0;
};

struct PretrainResult {
    backbone::Checkpoint checkpoint;
    std::vector<EpochLog> log;
    bool aborted = false;
    std::string abort_reason;
};

// Two-stage driver. Without init the model starts from init_params(model, seed).
// astp requires an init at stage mstp or later unless allow_unordered is set.
// A non-finite loss stops training and returns the last finished epoch's
// parameters with aborted = true.
PretrainResult run_pretrain(const PretrainConfig& pc, const backbone::ModelConfig& model,
                            const std::vector<signal::TrialSegment>& segments,
                            const backbone::Checkpoint* init = nullptr);

// stage,epoch,lr,loss_total,loss_wave,loss_amp,loss_phase,wall_seconds
std::string training_log_csv(const std::vector<EpochLog>& log, bool header = true);

}  // namespace lblm::pretrain
