#include "lblm/cli/pipeline.hpp"

#include "lblm/analysis/analysis.hpp"
#include "lblm/io.hpp"
#include "lblm/signal/dataset_io.hpp"
#include "lblm/signal/filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace lblm::cli {

namespace {

void check_keys(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& section) {
    if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("unknown key '" + k + "' in " + section);
        }
    }
}

// Stage seeds are owned by the top-level seed.
void forbid_seed(const nlohmann::json& j, const std::string& section) {
    if (j.is_object() && j.contains("seed")) {
        throw ConfigError("'seed' is only accepted at the top level (found in " + section + ")");
    }
}

PreprocessConfig preprocess_from_json(const nlohmann::json& j) {
    check_keys(j, {"band_lo", "band_hi", "notch_hz", "rereference", "target_fs", "window_s", "overlap_s", "multiband",
                   "condition_window_s"},
               "preprocess");
    PreprocessConfig p;
    p.band_lo = j.value("band_lo", p.band_lo);
    p.band_hi = j.value("band_hi", p.band_hi);
    if (j.contains("notch_hz")) {
        if (j.at("notch_hz").is_null()) {
            p.notch_hz.reset();
        } else {
            p.notch_hz = j.at("notch_hz").get<double>();
        }
    }
    p.rereference = j.value("rereference", p.rereference);
    p.target_fs = j.value("target_fs", p.target_fs);
    p.windows.window_s = j.value("window_s", p.windows.window_s);
    p.windows.overlap_s = j.value("overlap_s", p.windows.overlap_s);
    p.multiband = j.value("multiband", p.multiband);
    p.condition_window_s = j.value("condition_window_s", p.condition_window_s);
    if (!(p.band_lo > 0.0 && p.band_hi > p.band_lo)) throw ConfigError("preprocess band needs 0 < band_lo < band_hi");
    if (!(p.target_fs > 0.0)) throw ConfigError("preprocess target_fs must be positive");
    if (!(p.windows.window_s > 0.0) || p.windows.overlap_s < 0.0 || p.windows.overlap_s >= p.windows.window_s) {
        throw ConfigError("preprocess windows need 0 <= overlap_s < window_s");
    }
    if (!(p.condition_window_s > 0.0)) throw ConfigError("preprocess condition_window_s must be positive");
    return p;
}

nlohmann::json to_json(const PreprocessConfig& p) {
    return {{"band_lo", p.band_lo},
            {"band_hi", p.band_hi},
            {"notch_hz", p.notch_hz ? nlohmann::json(*p.notch_hz) : nlohmann::json(nullptr)},
            {"rereference", p.rereference},
            {"target_fs", p.target_fs},
            {"window_s", p.windows.window_s},
            {"overlap_s", p.windows.overlap_s},
            {"multiband", p.multiband},
            {"condition_window_s", p.condition_window_s}};
}

ForecastConfig forecast_from_json(const nlohmann::json& j) {
    check_keys(j, {"ladder", "mode", "max_segments"}, "forecast");
    ForecastConfig f;
    if (j.contains("ladder")) f.ladder = forecast::parse_ladder(j.at("ladder").get<std::string>());
    if (j.contains("mode")) f.mode = forecast::parse_rollout_mode(j.at("mode").get<std::string>());
    f.max_segments = j.value("max_segments", f.max_segments);
    if (f.max_segments < 1) throw ConfigError("forecast max_segments must be at least 1");
    return f;
}

pretrain::PretrainConfig stage_from_json(const nlohmann::json& j, backbone::Stage stage, const std::string& name) {
    if (j.contains("stage")) throw ConfigError("'stage' is implied by the section name in pretrain." + name);
    forbid_seed(j, "pretrain." + name);
    auto c = pretrain::pretrain_config_from_json(j);
    c.stage = stage;
    return c;
}

std::string hash_of(const RunConfig& c) { return config_hash(c); }

nlohmann::json meta_header(const RunConfig& c, const std::string& command) {
    return {{"config_hash", hash_of(c)}, {"seed", c.seed}, {"command", command}};
}

void write_segment_meta(const std::filesystem::path& out, const nlohmann::json& meta) {
    io::write_text_atomic(signal::sidecar_path(out), meta.dump(2) + "\n");
}

std::vector<signal::TrialSegment> read_segments_checked(const std::filesystem::path& in) {
    auto segs = signal::read_segments(in);
    if (segs.empty()) throw ConfigError("segment file '" + in.string() + "' holds no segments");
    return segs;
}

backbone::Checkpoint load_with_hash(const RunConfig& c, backbone::Checkpoint ck) {
    ck.metadata["config_hash"] = hash_of(c);
    return ck;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
    check_keys(j, {"seed", "data", "preprocess", "model", "pretrain", "finetune", "forecast"}, "run config");
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.mstp.stage = backbone::Stage::mstp;
    c.astp.stage = backbone::Stage::astp;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"generator", "path"}, "data");
        if (d.contains("generator") && d.contains("path")) {
            throw ConfigError("data takes either a generator or a path, not both");
        }
        if (d.contains("generator")) c.generator = signal::generator_spec_from_json(d.at("generator"));
        if (d.contains("path")) c.data_path = d.at("path").get<std::string>();
    }
    if (j.contains("preprocess")) c.preprocess = preprocess_from_json(j.at("preprocess"));
    if (j.contains("model")) {
        c.model = backbone::model_config_from_json(j.at("model"));
        c.model_given = true;
    }
    if (j.contains("pretrain")) {
        const auto& p = j.at("pretrain");
        check_keys(p, {"mstp", "astp"}, "pretrain");
        if (p.contains("mstp")) c.mstp = stage_from_json(p.at("mstp"), backbone::Stage::mstp, "mstp");
        if (p.contains("astp")) c.astp = stage_from_json(p.at("astp"), backbone::Stage::astp, "astp");
    }
    if (j.contains("finetune")) {
        forbid_seed(j.at("finetune"), "finetune");
        c.finetune = j.at("finetune");
        // Validate eagerly so a bad section fails before any work starts.
        classify::finetune_config_from_json(c.finetune);
    }
    if (j.contains("forecast")) c.forecast = forecast_from_json(j.at("forecast"));
    c.mstp.seed = c.seed;
    c.astp.seed = c.seed;
    return c;
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json data = nlohmann::json::object();
    if (c.generator) data["generator"] = signal::to_json(*c.generator);
    if (!c.data_path.empty()) data["path"] = c.data_path;
    auto ft = classify::to_json(classify::finetune_config_from_json(c.finetune));
    ft.erase("seed");
    auto mstp = pretrain::to_json(c.mstp);
    auto astp = pretrain::to_json(c.astp);
    for (auto* s : {&mstp, &astp}) {
        s->erase("seed");
        s->erase("stage");
    }
    return {{"seed", c.seed},
            {"data", data},
            {"preprocess", to_json(c.preprocess)},
            {"model", backbone::to_json(c.model)},
            {"pretrain", {{"mstp", mstp}, {"astp", astp}}},
            {"finetune", ft},
            {"forecast",
             {{"ladder", forecast::ladder_to_string(c.forecast.ladder)},
              {"mode", std::string(forecast::rollout_mode_name(c.forecast.mode))},
              {"max_segments", c.forecast.max_segments}}}};
}

std::string config_hash(const RunConfig& c) { return io::hex64(io::fnv1a(to_json(c).dump())); }

RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_flag) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        auto bytes = io::read_file(path);
        try {
            j = nlohmann::json::parse(bytes.begin(), bytes.end());
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
        }
    }
    std::optional<std::uint64_t> seed = seed_flag;
    if (!seed) {
        if (const char* env = std::getenv("LBLM_SEED"); env != nullptr && *env != '\0') {
            char* end = nullptr;
            unsigned long long v = std::strtoull(env, &end, 10);
            if (end == env || *end != '\0') throw ConfigError(std::string("LBLM_SEED is not an integer: ") + env);
            seed = v;
        }
    }
    if (seed) j["seed"] = *seed;
    return run_config_from_json(j);
}

SegmentKind parse_segment_kind(std::string_view s) {
    if (s == "windows") return SegmentKind::windows;
    if (s == "trials") return SegmentKind::trials;
    if (s == "conditions") return SegmentKind::conditions;
    throw ConfigError("unknown segment kind '" + std::string(s) + "' (windows, trials, conditions)");
}

SessionFilter parse_session_filter(std::string_view s) {
    if (s == "all") return SessionFilter::all;
    if (s == "pretrain") return SessionFilter::pretrain;
    if (s == "test") return SessionFilter::test;
    throw ConfigError("unknown session filter '" + std::string(s) + "' (all, pretrain, test)");
}

std::vector<signal::EegRecording> preprocess_recordings(const std::vector<signal::EegRecording>& recs,
                                                        const PreprocessConfig& pc) {
    std::vector<signal::EegRecording> out;
    out.reserve(recs.size());
    for (const auto& r : recs) {
        auto x = signal::fir_filter(r, signal::Bandpass{pc.band_lo, pc.band_hi});
        if (pc.notch_hz) x = signal::fir_filter(x, signal::Notch{*pc.notch_hz});
        if (pc.rereference) x = signal::average_rereference(x);
        if (std::abs(x.fs - pc.target_fs) > 1e-9) x = signal::downsample(x, pc.target_fs);
        out.push_back(std::move(x));
    }
    return out;
}

std::vector<signal::TrialSegment> make_segments(const std::vector<signal::EegRecording>& recs,
                                                const PreprocessConfig& pc, SegmentKind kind, SessionFilter sessions) {
    std::map<int, int> last_session;
    for (const auto& r : recs) {
        auto [it, fresh] = last_session.emplace(r.subject_id, r.session_id);
        if (!fresh) it->second = std::max(it->second, r.session_id);
    }
    std::vector<signal::TrialSegment> out;
    for (const auto& r : recs) {
        int last = last_session.at(r.subject_id);
        if (sessions == SessionFilter::pretrain && r.session_id >= last - 1) continue;
        if (sessions == SessionFilter::test && r.session_id != last) continue;
        std::vector<signal::TrialSegment> segs;
        switch (kind) {
            case SegmentKind::windows:
                segs = signal::epoch(r, pc.windows);
                break;
            case SegmentKind::trials:
                segs = signal::epoch_trials(r, pc.windows, signal::Condition::silent);
                break;
            case SegmentKind::conditions: {
                signal::EpochConfig ec{pc.condition_window_s, 0.0};
                for (auto cond : {signal::Condition::rest, signal::Condition::read, signal::Condition::silent}) {
                    auto part = signal::epoch_trials(r, ec, cond);
                    segs.insert(segs.end(), part.begin(), part.end());
                }
                break;
            }
        }
        out.insert(out.end(), segs.begin(), segs.end());
    }
    if (kind == SegmentKind::windows && pc.multiband) out = signal::multiband_mix(out);
    return out;
}

classify::FinetuneConfig resolve_finetune(const RunConfig& c, std::optional<classify::Task> task, int channels) {
    nlohmann::json j = c.finetune;
    if (task) j["task"] = std::string(classify::task_name(*task));
    auto t = classify::parse_task(j.value("task", std::string(classify::task_name(classify::Task::semantic6))));
    if (!j.contains("classifier")) j["classifier"] = nlohmann::json::object();
    auto& cls = j["classifier"];
    if (!cls.contains("num_classes")) cls["num_classes"] = classify::num_classes(t);
    if (!cls.contains("channels")) cls["channels"] = channels;
    j["seed"] = c.seed;
    auto fc = classify::finetune_config_from_json(j);
    if (fc.classifier.num_classes != classify::num_classes(fc.task)) {
        throw ConfigError("classifier num_classes does not match task " + std::string(classify::task_name(fc.task)));
    }
    return fc;
}

void run_synth(const RunConfig& c, const std::filesystem::path& out) {
    if (!c.generator) throw ConfigError("synth needs data.generator in the config");
    auto recs = signal::synth_dataset(*c.generator, c.seed);
    signal::write_dataset(recs, out);
    signal::write_sidecar(out, *c.generator, c.seed, meta_header(c, "synth"));
}

void run_preprocess(const RunConfig& c, const std::filesystem::path& in, const std::filesystem::path& out,
                    SegmentKind kind, SessionFilter sessions) {
    auto recs = preprocess_recordings(signal::read_dataset(in), c.preprocess);
    auto segs = make_segments(recs, c.preprocess, kind, sessions);
    if (segs.empty()) throw ConfigError("preprocessing produced no segments");
    signal::write_segments(segs, out);
    auto meta = meta_header(c, "preprocess");
    meta["source"] = in.string();
    meta["segments"] = segs.size();
    write_segment_meta(out, meta);
}

void run_pretrain_stage(const RunConfig& c, backbone::Stage stage, const std::filesystem::path& in,
                        const std::optional<std::filesystem::path>& init, const std::filesystem::path& out,
                        const std::optional<std::filesystem::path>& log) {
    if (stage != backbone::Stage::mstp && stage != backbone::Stage::astp) {
        throw ConfigError("pretrain stage must be mstp or astp");
    }
    const auto& pc = stage == backbone::Stage::mstp ? c.mstp : c.astp;
    if (stage == backbone::Stage::astp && !init && !pc.allow_unordered) {
        throw ConfigError("stage ordering: astp continues from an mstp checkpoint; pass --init");
    }
    auto segs = read_segments_checked(in);
    std::optional<backbone::Checkpoint> ck;
    backbone::ModelConfig model = c.model;
    if (init) {
        ck = backbone::load_checkpoint(*init);
        auto from = ck->model_config();
        if (c.model_given && backbone::to_json(from) != backbone::to_json(c.model)) {
            throw ConfigError("config model section differs from the --init checkpoint's model");
        }
        model = from;
    }
    auto r = pretrain::run_pretrain(pc, model, segs, ck ? &*ck : nullptr);
    if (r.aborted) throw NumericError("pretraining aborted: " + r.abort_reason);
    backbone::save_checkpoint(load_with_hash(c, std::move(r.checkpoint)), out);
    if (log) io::write_text_atomic(*log, with_hash_line(hash_of(c), pretrain::training_log_csv(r.log)));
}

void run_finetune(const RunConfig& c, classify::Task task, const std::filesystem::path& init,
                  const std::filesystem::path& in, const std::filesystem::path& out,
                  const std::filesystem::path& report, const std::optional<std::filesystem::path>& log) {
    auto trials = read_segments_checked(in);
    auto ck = backbone::load_checkpoint(init);
    auto fc = resolve_finetune(c, task, trials.front().channels());
    auto split = classify::default_split(trials);
    auto r = classify::finetune(ck, trials, split, fc);
    backbone::save_checkpoint(load_with_hash(c, std::move(r.checkpoint)), out);
    auto j = classify::to_json(r.val);
    j["role"] = "val";
    j["best_epoch"] = r.best_epoch;
    j["config_hash"] = hash_of(c);
    io::write_text_atomic(report, j.dump(2) + "\n");
    if (log) {
        std::ostringstream os;
        os << "epoch,lr,train_loss,val_accuracy\n";
        for (const auto& e : r.log) {
            os << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.train_loss) << ',' << fmt(e.val_accuracy) << '\n';
        }
        io::write_text_atomic(*log, with_hash_line(hash_of(c), os.str()));
    }
}

void run_eval(const RunConfig& c, const std::filesystem::path& checkpoint, std::optional<classify::Task> task,
              const std::filesystem::path& in, const std::filesystem::path& out) {
    auto trials = read_segments_checked(in);
    auto ck = backbone::load_checkpoint(checkpoint);
    if (ck.stage != backbone::Stage::finetuned) throw ConfigError("eval needs a finetuned checkpoint");
    auto trained = classify::parse_task(ck.config.at("finetune").at("task").get<std::string>());
    if (task && *task != trained) {
        throw ConfigError("checkpoint was finetuned for " + std::string(classify::task_name(trained)) + ", not " +
                          std::string(classify::task_name(*task)));
    }
    auto split = classify::default_split(trials);
    auto report = classify::evaluate(ck, trials, split);
    auto j = classify::to_json(report);
    j["role"] = "test";
    j["config_hash"] = hash_of(c);
    io::write_text_atomic(out, j.dump(2) + "\n");
}

void run_forecast(const RunConfig& c, const std::filesystem::path& checkpoint, const std::filesystem::path& in,
                  const std::vector<forecast::LadderPair>& ladder, const std::filesystem::path& out,
                  const std::optional<std::filesystem::path>& summary,
                  const std::optional<std::filesystem::path>& overlay) {
    auto all = read_segments_checked(in);
    std::vector<signal::TrialSegment> segs;
    for (auto& s : all) {
        if (s.band != signal::BandTag::raw) continue;
        if (static_cast<int>(segs.size()) == c.forecast.max_segments) break;
        segs.push_back(std::move(s));
    }
    if (segs.empty()) throw ConfigError("no raw-band segments to forecast");
    auto ck = backbone::load_checkpoint(checkpoint);
    auto cfg = ck.model_config();
    auto ev = forecast::evaluate_ladder(ck.params, cfg, segs, ladder, c.forecast.mode);
    const auto hash = hash_of(c);
    io::write_text_atomic(out, with_hash_line(hash, forecast::metrics_csv(ev.rows)));
    if (summary) io::write_text_atomic(*summary, with_hash_line(hash, forecast::summary_csv(ev.summary)));
    if (overlay) io::write_text_atomic(*overlay, with_hash_line(hash, forecast::overlay_csv(ev.examples.front())));
}

void run_analyze(const RunConfig& c, const std::filesystem::path& in,
                 const std::vector<std::pair<signal::Condition, signal::Condition>>& pairs,
                 const std::filesystem::path& out) {
    auto segs = read_segments_checked(in);
    std::vector<analysis::FRow> rows;
    for (auto [a, b] : pairs) {
        auto part = analysis::compare_conditions(segs, a, b);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    io::write_text_atomic(out, with_hash_line(hash_of(c), analysis::f_rows_csv(rows)));
}

std::vector<std::pair<signal::Condition, signal::Condition>> parse_pairs(const std::string& s) {
    std::vector<std::pair<signal::Condition, signal::Condition>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("condition pair '" + item + "' is not a:b");
        auto a = signal::parse_condition(item.substr(0, colon));
        auto b = signal::parse_condition(item.substr(colon + 1));
        if (a == b) throw ConfigError("condition pair '" + item + "' compares a condition with itself");
        out.emplace_back(a, b);
    }
    if (out.empty()) throw ConfigError("no condition pairs given");
    return out;
}

std::string with_hash_line(const std::string& hash, const std::string& csv) {
    return "# config_hash=" + hash + "\n" + csv;
}

std::string strip_comments(const std::string& csv) {
    std::istringstream is(csv);
    std::string line, out;
    while (std::getline(is, line)) {
        if (!line.empty() && line[0] == '#') continue;
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace lblm::cli
