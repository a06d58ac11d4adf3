#include "lblm/signal/dataset_io.hpp"

#include "lblm/io.hpp"

#include <limits>

namespace lblm::signal {

namespace {

template <typename T>
T checked_narrow(std::int64_t v, const char* what) {
    if (v < 0 || v > static_cast<std::int64_t>(std::numeric_limits<T>::max())) {
        throw ConfigError(std::string(what) + " does not fit the file format");
    }
    return static_cast<T>(v);
}

void put_samples(io::ByteWriter& w, const Mat& data) {
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
        for (Eigen::Index t = 0; t < data.cols(); ++t) w.put<float>(static_cast<float>(data(c, t)));
    }
}

Mat get_samples(io::ByteReader& r, std::size_t C, std::size_t T) {
    const auto at = r.offset();
    if (T != 0 && C > r.remaining() / sizeof(float) / T) throw FormatError("truncated sample payload", at);
    std::vector<float> buf(C * T);
    r.read_floats(buf.data(), buf.size(), "sample payload");
    Mat m(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(T));
    for (std::size_t i = 0; i < buf.size(); ++i) m.data()[i] = buf[i];
    return m;
}

void check_header(io::ByteReader& r, std::string_view magic, std::uint16_t version) {
    if (r.remaining() < 4 || r.get_bytes(4, "magic") != magic) {
        throw FormatError("bad magic, expected \"" + std::string(magic) + "\"", 0);
    }
    const auto at = r.offset();
    const auto v = r.get<std::uint16_t>("version");
    if (v != version) {
        throw FormatError("unsupported version " + std::to_string(v) + " (expected " + std::to_string(version) + ")",
                          at);
    }
}

}  // namespace

std::vector<char> encode_dataset(const std::vector<EegRecording>& recs) {
    io::ByteWriter w;
    w.put_bytes("LBLD");
    w.put<std::uint16_t>(kDatasetVersion);
    w.put<std::uint32_t>(checked_narrow<std::uint32_t>(static_cast<std::int64_t>(recs.size()), "record count"));
    for (const auto& rec : recs) {
        rec.validate();
        w.put<std::uint16_t>(checked_narrow<std::uint16_t>(rec.subject_id, "subject id"));
        w.put<std::uint16_t>(checked_narrow<std::uint16_t>(rec.session_id, "session id"));
        w.put<std::uint16_t>(checked_narrow<std::uint16_t>(rec.data.rows(), "channel count"));
        w.put<std::uint64_t>(static_cast<std::uint64_t>(rec.data.cols()));
        w.put<float>(static_cast<float>(rec.fs));
        w.put<std::uint32_t>(checked_narrow<std::uint32_t>(static_cast<std::int64_t>(rec.trial_marks.size()),
                                                           "trial count"));
        for (const auto& m : rec.trial_marks) {
            w.put<std::uint64_t>(m.start);
            w.put<std::uint8_t>(m.word);
            w.put<std::uint8_t>(m.semantic);
            w.put<std::uint8_t>(static_cast<std::uint8_t>(m.condition));
        }
        put_samples(w, rec.data);
    }
    return w.bytes();
}

std::vector<EegRecording> decode_dataset(std::vector<char> bytes) {
    io::ByteReader r(std::move(bytes));
    check_header(r, "LBLD", kDatasetVersion);
    const auto count = r.get<std::uint32_t>("record count");
    std::vector<EegRecording> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto rec_at = r.offset();
        EegRecording rec;
        rec.subject_id = r.get<std::uint16_t>("subject id");
        rec.session_id = r.get<std::uint16_t>("session id");
        const auto C = r.get<std::uint16_t>("channel count");
        const auto T = r.get<std::uint64_t>("sample count");
        rec.fs = r.get<float>("sampling rate");
        const auto n_trials = r.get<std::uint32_t>("trial count");
        if (static_cast<std::uint64_t>(n_trials) * 11 > r.remaining()) {
            throw FormatError("truncated trial table", r.offset());
        }
        for (std::uint32_t k = 0; k < n_trials; ++k) {
            TrialMark m;
            m.start = r.get<std::uint64_t>("trial start");
            m.word = r.get<std::uint8_t>("word label");
            m.semantic = r.get<std::uint8_t>("semantic label");
            const auto cond_at = r.offset();
            const auto cond = r.get<std::uint8_t>("condition");
            if (cond > 2) throw FormatError("invalid condition code " + std::to_string(cond), cond_at);
            m.condition = static_cast<Condition>(cond);
            rec.trial_marks.push_back(m);
        }
        rec.data = get_samples(r, C, static_cast<std::size_t>(T));
        try {
            rec.validate();
        } catch (const ConfigError& e) {
            throw FormatError(std::string("invalid record: ") + e.what(), rec_at);
        }
        out.push_back(std::move(rec));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last record", r.offset());
    return out;
}

void write_dataset(const std::vector<EegRecording>& recs, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_dataset(recs));
}

std::vector<EegRecording> read_dataset(const std::filesystem::path& path) {
    return decode_dataset(io::read_file(path));
}

std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path) {
    auto p = dataset_path;
    p.replace_extension(".meta.json");
    return p;
}

void write_sidecar(const std::filesystem::path& dataset_path, const GeneratorSpec& spec, std::uint64_t seed,
                   const nlohmann::json& extra) {
    nlohmann::json j{{"generator", to_json(spec)}, {"seed", seed}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    io::write_text_atomic(sidecar_path(dataset_path), j.dump(2) + "\n");
}

std::vector<char> encode_segments(const std::vector<TrialSegment>& segs) {
    io::ByteWriter w;
    w.put_bytes("LBLS");
    w.put<std::uint16_t>(kSegmentFileVersion);
    w.put<std::uint32_t>(checked_narrow<std::uint32_t>(static_cast<std::int64_t>(segs.size()), "segment count"));
    for (const auto& s : segs) {
        w.put<std::uint16_t>(checked_narrow<std::uint16_t>(s.subject_id, "subject id"));
        w.put<std::uint16_t>(checked_narrow<std::uint16_t>(s.session_id, "session id"));
        w.put<std::uint16_t>(checked_narrow<std::uint16_t>(s.data.rows(), "channel count"));
        w.put<std::uint32_t>(checked_narrow<std::uint32_t>(s.data.cols(), "segment length"));
        w.put<float>(static_cast<float>(s.fs));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s.band));
        w.put<std::int8_t>(static_cast<std::int8_t>(s.word));
        w.put<std::int8_t>(static_cast<std::int8_t>(s.semantic));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(s.condition));
        put_samples(w, s.data);
    }
    return w.bytes();
}

std::vector<TrialSegment> decode_segments(std::vector<char> bytes) {
    io::ByteReader r(std::move(bytes));
    check_header(r, "LBLS", kSegmentFileVersion);
    const auto count = r.get<std::uint32_t>("segment count");
    std::vector<TrialSegment> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        TrialSegment s;
        s.subject_id = r.get<std::uint16_t>("subject id");
        s.session_id = r.get<std::uint16_t>("session id");
        const auto C = r.get<std::uint16_t>("channel count");
        const auto L = r.get<std::uint32_t>("segment length");
        s.fs = r.get<float>("sampling rate");
        const auto band_at = r.offset();
        const auto band = r.get<std::uint8_t>("band tag");
        if (band > 3) throw FormatError("invalid band tag " + std::to_string(band), band_at);
        s.band = static_cast<BandTag>(band);
        const auto label_at = r.offset();
        s.word = r.get<std::int8_t>("word label");
        s.semantic = r.get<std::int8_t>("semantic label");
        const bool unlabeled = s.word == -1 && s.semantic == -1;
        if (!unlabeled && (s.word < 0 || s.word >= kNumWords || s.semantic != semantic_group(s.word))) {
            throw FormatError("invalid label pair", label_at);
        }
        const auto cond_at = r.offset();
        const auto cond = r.get<std::uint8_t>("condition");
        if (cond > 2) throw FormatError("invalid condition code " + std::to_string(cond), cond_at);
        s.condition = static_cast<Condition>(cond);
        s.data = get_samples(r, C, L);
        out.push_back(std::move(s));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last segment", r.offset());
    return out;
}

void write_segments(const std::vector<TrialSegment>& segs, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_segments(segs));
}

std::vector<TrialSegment> read_segments(const std::filesystem::path& path) {
    return decode_segments(io::read_file(path));
}

}  // namespace lblm::signal
