#include "lblm/backbone/checkpoint.hpp"

#include "lblm/io.hpp"

namespace lblm::backbone {

std::string_view stage_name(Stage s) {
    switch (s) {
        case Stage::init: return "init";
        case Stage::mstp: return "mstp";
        case Stage::astp: return "astp";
        case Stage::finetuned: return "finetuned";
    }
    return "?";
}

Stage parse_stage(std::string_view s) {
    if (s == "init") return Stage::init;
    if (s == "mstp") return Stage::mstp;
    if (s == "astp") return Stage::astp;
    if (s == "finetuned") return Stage::finetuned;
    throw ConfigError("unknown stage '" + std::string(s) + "'");
}

namespace {

void round_mat(Mat& m) { m = m.cast<float>().cast<double>(); }

void put_floats(io::ByteWriter& w, const Mat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put<float>(static_cast<float>(m.data()[i]));
}

void get_floats(io::ByteReader& r, Mat& m, std::string_view what) {
    const auto at = r.offset();
    if (static_cast<std::size_t>(m.size()) > r.remaining() / sizeof(float)) throw FormatError("truncated " + std::string(what), at);
    std::vector<float> buf(static_cast<std::size_t>(m.size()));
    r.read_floats(buf.data(), buf.size(), what);
    for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = buf[i];
}

void write_tensors(io::ByteWriter& w, const diff::ParamStore& ps) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ps.size()));
    for (const auto& p : ps) {
        w.put_string(p.name);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(p.shape.size()));
        for (int dim : p.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
        put_floats(w, p.value);
    }
}

}  // namespace

void round_to_float(diff::ParamStore& ps) {
    for (auto& p : ps) round_mat(p.value);
}

ModelConfig Checkpoint::model_config() const {
    if (!config.contains("model")) throw ConfigError("checkpoint config has no model section");
    return model_config_from_json(config.at("model"));
}

std::uint64_t Checkpoint::content_hash() const {
    io::ByteWriter w;
    w.put<std::uint8_t>(static_cast<std::uint8_t>(stage));
    w.put_string(config.dump());
    write_tensors(w, params);
    const auto& b = w.bytes();
    return io::fnv1a(std::string_view(b.data(), b.size()));
}

Checkpoint make_checkpoint(Stage stage, nlohmann::json config, diff::ParamStore params, diff::OptimState optim,
                           nlohmann::json metadata) {
    Checkpoint c;
    c.stage = stage;
    c.config = std::move(config);
    c.metadata = std::move(metadata);
    c.params = std::move(params);
    round_to_float(c.params);
    for (auto& p : c.params) p.grad.setZero();
    c.optim = std::move(optim);
    for (auto& m : c.optim.moments) {
        round_mat(m.m);
        round_mat(m.v);
    }
    return c;
}

std::vector<char> encode_checkpoint(const Checkpoint& c) {
    io::ByteWriter w;
    w.put_bytes("LBLC");
    w.put<std::uint16_t>(kCheckpointVersion);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.stage));
    w.put_string(c.config.dump());
    w.put_string(c.metadata.dump());
    write_tensors(w, c.params);
    w.put<std::uint64_t>(c.optim.step_count);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.optim.moments.size()));
    for (const auto& m : c.optim.moments) {
        w.put_string(m.name);
        w.put<std::uint64_t>(static_cast<std::uint64_t>(m.m.size()));
        put_floats(w, m.m);
        put_floats(w, m.v);
    }
    return w.bytes();
}

Checkpoint decode_checkpoint(std::vector<char> bytes) {
    io::ByteReader r(std::move(bytes));
    if (r.remaining() < 4 || r.get_bytes(4, "magic") != "LBLC") throw FormatError("bad magic, expected \"LBLC\"", 0);
    const auto ver_at = r.offset();
    const auto ver = r.get<std::uint16_t>("version");
    if (ver != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(ver), ver_at);
    Checkpoint c;
    const auto stage_at = r.offset();
    const auto st = r.get<std::uint8_t>("stage");
    if (st > 3) throw FormatError("invalid stage tag", stage_at);
    c.stage = static_cast<Stage>(st);
    try {
        const auto cfg_at = r.offset();
        auto cfg = r.get_string("config");
        c.config = nlohmann::json::parse(cfg, nullptr, false);
        if (c.config.is_discarded()) throw FormatError("config block is not valid JSON", cfg_at);
        const auto meta_at = r.offset();
        auto meta = r.get_string("metadata");
        c.metadata = nlohmann::json::parse(meta, nullptr, false);
        if (c.metadata.is_discarded()) throw FormatError("metadata block is not valid JSON", meta_at);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(e.what(), r.offset());
    }
    const auto n = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto at = r.offset();
        std::string name = r.get_string("tensor name");
        const auto rank = r.get<std::uint8_t>("tensor rank");
        std::vector<int> shape;
        for (int k = 0; k < rank; ++k) {
            const auto dim = r.get<std::uint32_t>("tensor dim");
            if (dim == 0 || dim > (1u << 30)) throw FormatError("invalid tensor dimension", at);
            shape.push_back(static_cast<int>(dim));
        }
        if (shape.empty()) throw FormatError("tensor of rank 0", at);
        if (c.params.contains(name)) throw FormatError("duplicate tensor '" + name + "'", at);
        auto& p = c.params.add_zeros(name, shape);
        get_floats(r, p.value, "tensor data");
    }
    c.optim.step_count = r.get<std::uint64_t>("optimizer step");
    const auto nm = r.get<std::uint32_t>("moment count");
    for (std::uint32_t i = 0; i < nm; ++i) {
        const auto at = r.offset();
        diff::Moments m;
        m.name = r.get_string("moment name");
        const auto count = r.get<std::uint64_t>("moment size");
        const auto* p = c.params.find(m.name);
        if (p == nullptr || p->size() != count) throw FormatError("moment '" + m.name + "' has no matching tensor", at);
        m.m = Mat::Zero(p->value.rows(), p->value.cols());
        m.v = Mat::Zero(p->value.rows(), p->value.cols());
        get_floats(r, m.m, "first moment");
        get_floats(r, m.v, "second moment");
        c.optim.moments.push_back(std::move(m));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.offset());
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace lblm::backbone
