#pragma once

#include "lblm/diff/graph.hpp"
#include "lblm/diff/param.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace lblm::backbone {

enum class BackboneKind { transformer, conformer, gated_conformer };
std::string_view backbone_kind_name(BackboneKind k);
BackboneKind parse_backbone_kind(std::string_view s);

struct ModelConfig {
    int d = 64;
    int layers = 4;
    int heads = 4;
    int ffn_dim = 64;
    int conv_kernel = 7;
    int P = 25;
    int S = 6;
    int K_subjects = 1;
    int n_max = 512;  // rows in the positional table
    BackboneKind kind = BackboneKind::gated_conformer;

    int num_freq_bins() const { return P / 2 + 1; }
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
// Missing keys keep their defaults; unknown keys throw ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Creates every backbone and head parameter. Weights are uniform in
// ±1/sqrt(fan_in), biases and the gate's zero_conv are zero, layer-norm gains
// are one, the subject table is all ones.
diff::ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

// Closed-form parameter count for a configuration.
std::size_t analytic_param_count(const ModelConfig& cfg);

// Sinusoidal table: even columns sin(pos / 10000^(i/d)), odd columns cos of the same angle (i rounded down to even).
Mat positional_table(int n, int d);

// Binds parameters to graph leaves on first use. With trainable=false
// parameters enter as constants and no gradients are tracked.
class Binder {
public:
    Binder(diff::Graph& g, diff::ParamStore& ps, bool trainable = true) : g_(g), ps_(ps), trainable_(trainable) {}

    diff::Var operator()(const std::string& name);
    diff::Graph& graph() { return g_; }
    diff::ParamStore& params() { return ps_; }

private:
    diff::Graph& g_;
    diff::ParamStore& ps_;
    bool trainable_;
    std::unordered_map<std::string, diff::Var> bound_;
};

// Per-layer intermediate values, filled when requested.
struct BlockTrace {
    std::vector<Mat> inputs;
    std::vector<Mat> inner;
    std::vector<Mat> gates;  // rows×1, empty for ungated kinds
};

struct ForwardOptions {
    bool causal = false;
    // One entry per patch row; nonzero rows are replaced by the mask token.
    const std::vector<char>* mask = nullptr;
    // Replaces every gate value (gated kind only).
    std::optional<double> gate_override;
    BlockTrace* trace = nullptr;
};

// Batched forward pass. patches has one row per token with rows ordered
// (sequence, token); every sequence holds `group` tokens. subjects gives one
// subject id per sequence. Returns rows×d features.
diff::Var forward(Binder& b, const ModelConfig& cfg, const Mat& patches, int group, const std::vector<int>& subjects,
                  const ForwardOptions& opt = {});

// Token embedding only: (proj(patch) or mask_token, + pe) ⊙ se.
diff::Var embed_patches(Binder& b, const ModelConfig& cfg, const Mat& patches, int group,
                        const std::vector<int>& subjects, const std::vector<char>* mask);

// Sub-modules of a block; `name` is the parameter prefix, e.g. "block0.attn".
// Both include their pre-layer-norm.
diff::Var mhsa(Binder& b, const ModelConfig& cfg, const std::string& name, diff::Var x, int group, bool causal);
// pointwise d->2d, GLU, depthwise conv, swish, pointwise d->d.
diff::Var conv_module(Binder& b, const std::string& name, diff::Var x, int group, bool causal);

diff::Var block_forward(Binder& b, const ModelConfig& cfg, int layer, diff::Var x, int group,
                        const ForwardOptions& opt);

struct HeadOutputs {
    diff::Var wave;   // rows×P
    diff::Var amp;    // rows×K
    diff::Var phase;  // rows×K, confined to (-pi, pi) by pi·tanh
};
HeadOutputs prediction_heads(Binder& b, diff::Var features);

// Convenience: patchify a C×L segment channel by channel and return the
// (C·N)×d feature matrix, channel-major. No gradients.
Mat forward_segment(diff::ParamStore& ps, const ModelConfig& cfg, const Mat& segment, int subject, bool causal);

}  // namespace lblm::backbone
