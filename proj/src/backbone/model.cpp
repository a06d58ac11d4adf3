#include "lblm/backbone/model.hpp"

#include "lblm/signal/patch.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lblm::backbone {

using diff::Var;

std::string_view backbone_kind_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::transformer: return "transformer";
        case BackboneKind::conformer: return "conformer";
        case BackboneKind::gated_conformer: return "gated_conformer";
    }
    return "?";
}

BackboneKind parse_backbone_kind(std::string_view s) {
    if (s == "transformer") return BackboneKind::transformer;
    if (s == "conformer") return BackboneKind::conformer;
    if (s == "gated_conformer") return BackboneKind::gated_conformer;
    throw ConfigError("unknown backbone kind '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
    if (d <= 0 || layers < 0 || heads <= 0 || ffn_dim <= 0) throw ConfigError("model widths must be positive");
    if (d % heads != 0) throw ConfigError("d must be divisible by heads");
    if (conv_kernel <= 0 || conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
    if (P < 2 || S < 1) throw ConfigError("patch length must be >= 2 and stride >= 1");
    if (K_subjects < 1) throw ConfigError("K_subjects must be positive");
    if (n_max < 1) throw ConfigError("n_max must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"d", c.d},
            {"layers", c.layers},
            {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},
            {"conv_kernel", c.conv_kernel},
            {"P", c.P},
            {"S", c.S},
            {"K_subjects", c.K_subjects},
            {"n_max", c.n_max},
            {"backbone_kind", std::string(backbone_kind_name(c.kind))}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {"d", "layers", "heads", "ffn_dim", "conv_kernel",
                                                   "P", "S", "K_subjects", "n_max", "backbone_kind"};
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown model key '" + k + "'");
    }
    ModelConfig c;
    c.d = j.value("d", c.d);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
    c.P = j.value("P", c.P);
    c.S = j.value("S", c.S);
    c.K_subjects = j.value("K_subjects", c.K_subjects);
    c.n_max = j.value("n_max", c.n_max);
    if (j.contains("backbone_kind")) c.kind = parse_backbone_kind(j.at("backbone_kind").get<std::string>());
    c.validate();
    return c;
}

namespace {

struct Init {
    diff::ParamStore& ps;
    std::mt19937_64 rng;

    void dense(const std::string& name, int in, int out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Mat w(in, out);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
        ps.add(name + ".w", {in, out}, std::move(w));
        ps.add_zeros(name + ".b", {out});
    }
    void norm(const std::string& name, int d) {
        ps.add(name + ".g", {d}, Mat::Ones(1, d));
        ps.add_zeros(name + ".b", {d});
    }
    void ffn(const std::string& name, int d, int hidden) {
        norm(name + ".ln", d);
        dense(name + ".fc1", d, hidden);
        dense(name + ".fc2", hidden, d);
    }
};

std::string blk(int l) { return "block" + std::to_string(l); }

}  // namespace

diff::ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    diff::ParamStore ps;
    Init in{ps, std::mt19937_64(seed)};
    const int d = cfg.d, K = cfg.num_freq_bins();

    in.dense("embed.proj", cfg.P, d);
    ps.add("embed.subject", {cfg.K_subjects, d}, Mat::Ones(cfg.K_subjects, d));
    {
        std::normal_distribution<double> n(0.0, 0.02);
        Mat tok(1, d);
        for (Eigen::Index i = 0; i < d; ++i) tok(0, i) = n(in.rng);
        ps.add("embed.mask_token", {d}, std::move(tok));
    }

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = blk(l);
        in.ffn(p + ".ffn1", d, cfg.ffn_dim);
        in.norm(p + ".attn.ln", d);
        in.dense(p + ".attn.q", d, d);
        in.dense(p + ".attn.k", d, d);
        in.dense(p + ".attn.v", d, d);
        in.dense(p + ".attn.o", d, d);
        if (cfg.kind != BackboneKind::transformer) {
            in.norm(p + ".conv.ln", d);
            in.dense(p + ".conv.pw1", d, 2 * d);
            {
                const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel));
                std::uniform_real_distribution<double> u(-bound, bound);
                Mat w(cfg.conv_kernel, d);
                for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(in.rng);
                ps.add(p + ".conv.dw.w", {cfg.conv_kernel, d}, std::move(w));
                ps.add_zeros(p + ".conv.dw.b", {d});
            }
            in.dense(p + ".conv.pw2", d, d);
        }
        in.ffn(p + ".ffn2", d, cfg.ffn_dim);
        in.norm(p + ".final_ln", d);
        if (cfg.kind == BackboneKind::gated_conformer) {
            ps.add_zeros(p + ".gate.zero_conv.w", {d, d});
            ps.add_zeros(p + ".gate.zero_conv.b", {d});
            in.dense(p + ".gate.proj", d, 1);
        }
    }

    in.dense("head.wave", d, cfg.P);
    in.dense("head.amp", d, K);
    in.dense("head.phase", d, K);
    return ps;
}

std::size_t analytic_param_count(const ModelConfig& cfg) {
    const std::size_t d = cfg.d, f = cfg.ffn_dim, k = cfg.conv_kernel, P = cfg.P, K = cfg.num_freq_bins();
    const std::size_t ln = 2 * d;
    const std::size_t ffn = ln + (d * f + f) + (f * d + d);
    const std::size_t attn = ln + 4 * (d * d + d);
    const std::size_t conv = ln + (d * 2 * d + 2 * d) + (k * d + d) + (d * d + d);
    const std::size_t gate = (d * d + d) + (d + 1);
    std::size_t block = 2 * ffn + attn + ln;
    if (cfg.kind != BackboneKind::transformer) block += conv;
    if (cfg.kind == BackboneKind::gated_conformer) block += gate;
    const std::size_t embed = (P * d + d) + static_cast<std::size_t>(cfg.K_subjects) * d + d;
    const std::size_t heads = (d * P + P) + 2 * (d * K + K);
    return embed + cfg.layers * block + heads;
}

Mat positional_table(int n, int d) {
    Mat pe(n, d);
    for (int pos = 0; pos < n; ++pos) {
        for (int i = 0; i < d; ++i) {
            const int even = i - (i % 2);
            const double angle = pos / std::pow(10000.0, static_cast<double>(even) / d);
            pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Var Binder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto& p = ps_.get(name);
    Var v = trainable_ ? g_.param(p) : g_.constant(p.value);
    bound_.emplace(name, v);
    return v;
}

namespace {

Var dense(Binder& b, const std::string& name, Var x) { return diff::linear(x, b(name + ".w"), b(name + ".b")); }

Var norm(Binder& b, const std::string& name, Var x) { return diff::layer_norm(x, b(name + ".g"), b(name + ".b")); }

Var ffn(Binder& b, const std::string& name, Var x) {
    Var h = norm(b, name + ".ln", x);
    return dense(b, name + ".fc2", diff::swish(dense(b, name + ".fc1", h)));
}

}  // namespace

Var mhsa(Binder& b, const ModelConfig& cfg, const std::string& name, Var x, int group, bool causal) {
    Var h = norm(b, name + ".ln", x);
    Var q = dense(b, name + ".q", h);
    Var k = dense(b, name + ".k", h);
    Var v = dense(b, name + ".v", h);
    return dense(b, name + ".o", diff::attention(q, k, v, group, cfg.heads, causal));
}

Var conv_module(Binder& b, const std::string& name, Var x, int group, bool causal) {
    Var h = norm(b, name + ".ln", x);
    h = diff::glu(dense(b, name + ".pw1", h));
    h = diff::depthwise_conv(h, b(name + ".dw.w"), b(name + ".dw.b"), group, causal);
    return dense(b, name + ".pw2", diff::swish(h));
}

Var embed_patches(Binder& b, const ModelConfig& cfg, const Mat& patches, int group, const std::vector<int>& subjects,
                  const std::vector<char>* mask) {
    if (patches.cols() != cfg.P) throw ShapeError("patch width does not match model P");
    if (group <= 0 || patches.rows() % group != 0) throw ShapeError("patch rows are not a multiple of the group size");
    if (group > cfg.n_max) throw RangeError("sequence longer than the positional table");
    const auto nseq = static_cast<std::size_t>(patches.rows() / group);
    if (subjects.size() != nseq) throw ShapeError("need one subject id per sequence");
    auto& g = b.graph();

    Var tok = dense(b, "embed.proj", g.constant(patches));
    if (mask != nullptr) {
        if (mask->size() != static_cast<std::size_t>(patches.rows())) throw ShapeError("mask length mismatch");
        tok = diff::replace_rows(tok, *mask, b("embed.mask_token"));
    }
    const Mat table = positional_table(group, cfg.d);
    Mat pe(patches.rows(), cfg.d);
    for (std::size_t s = 0; s < nseq; ++s) pe.middleRows(static_cast<Eigen::Index>(s) * group, group) = table;
    tok = diff::add(tok, g.constant(std::move(pe)));

    std::vector<int> idx(static_cast<std::size_t>(patches.rows()));
    for (std::size_t s = 0; s < nseq; ++s) {
        if (subjects[s] < 0 || subjects[s] >= cfg.K_subjects) {
            throw RangeError("subject id " + std::to_string(subjects[s]) + " outside [0, " +
                             std::to_string(cfg.K_subjects) + ")");
        }
        std::fill_n(idx.begin() + static_cast<std::ptrdiff_t>(s * group), group, subjects[s]);
    }
    return diff::mul(tok, diff::gather_rows(b("embed.subject"), std::move(idx)));
}

Var block_forward(Binder& b, const ModelConfig& cfg, int layer, Var x, int group, const ForwardOptions& opt) {
    const std::string p = blk(layer);
    Var h = diff::add(x, diff::scale(ffn(b, p + ".ffn1", x), 0.5));
    h = diff::add(h, mhsa(b, cfg, p + ".attn", h, group, opt.causal));
    if (cfg.kind != BackboneKind::transformer) h = diff::add(h, conv_module(b, p + ".conv", h, group, opt.causal));
    h = diff::add(h, diff::scale(ffn(b, p + ".ffn2", h), 0.5));
    Var inner = norm(b, p + ".final_ln", h);

    if (opt.trace != nullptr) {
        opt.trace->inputs.push_back(x.value());
        opt.trace->inner.push_back(inner.value());
    }
    if (cfg.kind != BackboneKind::gated_conformer) return inner;

    Var gate;
    if (opt.gate_override) {
        gate = b.graph().constant(Mat::Constant(x.rows(), 1, *opt.gate_override));
    } else {
        gate = diff::sigmoid(dense(b, p + ".gate.proj", dense(b, p + ".gate.zero_conv", x)));
    }
    if (opt.trace != nullptr) opt.trace->gates.push_back(gate.value());
    return diff::blend_rows(gate, inner, x);
}

Var forward(Binder& b, const ModelConfig& cfg, const Mat& patches, int group, const std::vector<int>& subjects,
            const ForwardOptions& opt) {
    Var x = embed_patches(b, cfg, patches, group, subjects, opt.mask);
    for (int l = 0; l < cfg.layers; ++l) x = block_forward(b, cfg, l, x, group, opt);
    return x;
}

HeadOutputs prediction_heads(Binder& b, Var features) {
    HeadOutputs h;
    h.wave = dense(b, "head.wave", features);
    h.amp = dense(b, "head.amp", features);
    h.phase = diff::scale(diff::tanh(dense(b, "head.phase", features)), kPi);
    return h;
}

Mat forward_segment(diff::ParamStore& ps, const ModelConfig& cfg, const Mat& segment, int subject, bool causal) {
    const Mat patches = signal::patchify_rows(segment, cfg.P, cfg.S);
    const int N = static_cast<int>(patches.rows() / segment.rows());
    diff::Graph g;
    Binder b(g, ps, false);
    ForwardOptions opt;
    opt.causal = causal;
    std::vector<int> subjects(static_cast<std::size_t>(segment.rows()), subject);
    return forward(b, cfg, patches, N, subjects, opt).value();
}

}  // namespace lblm::backbone
