#pragma once

#include "lblm/backbone/checkpoint.hpp"
#include "lblm/backbone/model.hpp"
#include "lblm/classify/classify.hpp"
#include "lblm/forecast/forecast.hpp"
#include "lblm/pretrain/pretrain.hpp"
#include "lblm/signal/preprocess.hpp"
#include "lblm/signal/synth.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Library side of the command-line tool: run configuration, seed resolution and
// one function per subcommand. Every function writes its outputs atomically.
namespace lblm::cli {

struct PreprocessConfig {
    double band_lo = 1.0;
    double band_hi = 75.0;
    std::optional<double> notch_hz = 50.0;
    bool rereference = true;
    double target_fs = 250.0;
    signal::EpochConfig windows;     // label-free windows and classification trials
    bool multiband = true;           // windows only
    double condition_window_s = 1.0; // per-condition epochs for analysis
};

struct ForecastConfig {
    std::vector<forecast::LadderPair> ladder = forecast::default_ladder();
    forecast::RolloutMode mode = forecast::RolloutMode::last_patch;
    int max_segments = 64;
};

// One JSON document. Sections: seed, data, preprocess, model, pretrain {mstp,
// astp}, finetune, forecast. Missing keys keep defaults, unknown keys throw
// ConfigError. Seeds live only at the top level: every stage derives from it.
struct RunConfig {
    std::uint64_t seed = 0;
    std::optional<signal::GeneratorSpec> generator;
    std::string data_path;
    PreprocessConfig preprocess;
    backbone::ModelConfig model;
    bool model_given = false;
    pretrain::PretrainConfig mstp;
    pretrain::PretrainConfig astp;
    nlohmann::json finetune = nlohmann::json::object();  // resolved lazily: task and channels come from the command
    ForecastConfig forecast;
};

RunConfig run_config_from_json(const nlohmann::json& j);
// Fully resolved document; defaults included.
nlohmann::json to_json(const RunConfig& c);
std::string config_hash(const RunConfig& c);

// Reads a config file (or defaults when path is empty) and applies the seed
// precedence: flag, then LBLM_SEED, then the file.
RunConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_flag);

enum class SegmentKind { windows, trials, conditions };
SegmentKind parse_segment_kind(std::string_view s);
enum class SessionFilter { all, pretrain, test };
SessionFilter parse_session_filter(std::string_view s);

// Filter chain, re-reference and downsampling on continuous recordings.
std::vector<signal::EegRecording> preprocess_recordings(const std::vector<signal::EegRecording>& recs,
                                                        const PreprocessConfig& pc);
// Cuts segments after preprocess_recordings. pretrain keeps every session but
// each subject's last two (the default val and test sessions); test keeps only the last.
std::vector<signal::TrialSegment> make_segments(const std::vector<signal::EegRecording>& recs,
                                                const PreprocessConfig& pc, SegmentKind kind, SessionFilter sessions);

classify::FinetuneConfig resolve_finetune(const RunConfig& c, std::optional<classify::Task> task, int channels);

// Subcommands. Each embeds config_hash(c) in what it writes.
void run_synth(const RunConfig& c, const std::filesystem::path& out);
void run_preprocess(const RunConfig& c, const std::filesystem::path& in, const std::filesystem::path& out,
                    SegmentKind kind, SessionFilter sessions);
// astp without init throws ConfigError.
void run_pretrain_stage(const RunConfig& c, backbone::Stage stage, const std::filesystem::path& in,
                        const std::optional<std::filesystem::path>& init, const std::filesystem::path& out,
                        const std::optional<std::filesystem::path>& log);
void run_finetune(const RunConfig& c, classify::Task task, const std::filesystem::path& init,
                  const std::filesystem::path& in, const std::filesystem::path& out,
                  const std::filesystem::path& report, const std::optional<std::filesystem::path>& log);
void run_eval(const RunConfig& c, const std::filesystem::path& checkpoint, std::optional<classify::Task> task,
              const std::filesystem::path& in, const std::filesystem::path& out);
void run_forecast(const RunConfig& c, const std::filesystem::path& checkpoint, const std::filesystem::path& in,
                  const std::vector<forecast::LadderPair>& ladder, const std::filesystem::path& out,
                  const std::optional<std::filesystem::path>& summary,
                  const std::optional<std::filesystem::path>& overlay);
void run_analyze(const RunConfig& c, const std::filesystem::path& in,
                 const std::vector<std::pair<signal::Condition, signal::Condition>>& pairs,
                 const std::filesystem::path& out);
// Renders an overlay, training-log or forecast-summary CSV, picked by header.
void run_plot(const std::filesystem::path& in, const std::filesystem::path& out, int channel = 0);

std::vector<std::pair<signal::Condition, signal::Condition>> parse_pairs(const std::string& s);

// "# config_hash=<hex>\n" followed by body.
std::string with_hash_line(const std::string& hash, const std::string& csv);
// Drops leading '#' lines.
std::string strip_comments(const std::string& csv);

}  // namespace lblm::cli
