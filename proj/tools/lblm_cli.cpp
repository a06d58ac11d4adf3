// lblm: synthesize, preprocess, pretrain, finetune, evaluate, forecast, analyze, plot.
#include "lblm/cli/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>
#include <optional>

namespace {

using lblm::cli::RunConfig;
namespace fs = std::filesystem;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "overrides LBLM_SEED and the config seed");
}

RunConfig resolve(const Common& c, const std::string& command) {
    auto rc = lblm::cli::load_run_config(c.config, c.seed);
    nlohmann::json line{{"event", "config"},
                        {"command", command},
                        {"config_hash", lblm::cli::config_hash(rc)},
                        {"config", lblm::cli::to_json(rc)}};
    std::cerr << line.dump() << "\n";
    return rc;
}

std::optional<fs::path> opt_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

int report_error(const std::string& command, const std::string& kind, const std::string& message, int code) {
    nlohmann::json err{{"error", {{"command", command}, {"type", kind}, {"message", message}}}};
    std::cerr << err.dump() << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Silent-speech EEG pretraining, decoding and forecasting"};
    app.require_subcommand(1);

    Common c_synth, c_pre, c_pt, c_ft, c_eval, c_fc, c_an;
    std::string out, in, init, log, report, checkpoint, task, stage, kind = "windows", sessions = "all",
                 ladder, summary, overlay, pairs = "rest:silent,read:silent";
    int channel = 0;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and its sidecar");
    add_common(synth, c_synth);
    synth->add_option("--out", out, "dataset file")->required();

    auto* pre = app.add_subcommand("preprocess", "filter, re-reference, downsample and cut segments");
    add_common(pre, c_pre);
    pre->add_option("--in", in, "dataset file (defaults to data.path)");
    pre->add_option("--out", out, "segment file")->required();
    pre->add_option("--kind", kind, "windows | trials | conditions")->capture_default_str();
    pre->add_option("--sessions", sessions, "all | pretrain | test")->capture_default_str();

    auto* pt = app.add_subcommand("pretrain", "run one pretraining stage");
    add_common(pt, c_pt);
    pt->add_option("--stage", stage, "mstp | astp")->required();
    pt->add_option("--in", in, "segment file")->required();
    pt->add_option("--init", init, "checkpoint to continue from");
    pt->add_option("--out", out, "checkpoint file")->required();
    pt->add_option("--log", log, "training log CSV");

    auto* ft = app.add_subcommand("finetune", "train the classifier and write the val report");
    add_common(ft, c_ft);
    ft->add_option("--task", task, "word24 | semantic6")->required();
    ft->add_option("--init", init, "checkpoint at any stage")->required();
    ft->add_option("--in", in, "trial segment file")->required();
    ft->add_option("--out", out, "finetuned checkpoint")->required();
    ft->add_option("--report", report, "val report JSON")->required();
    ft->add_option("--log", log, "finetuning log CSV");

    auto* ev = app.add_subcommand("eval", "evaluate a finetuned checkpoint on the test sessions");
    add_common(ev, c_eval);
    ev->add_option("--checkpoint", checkpoint, "finetuned checkpoint")->required();
    ev->add_option("--task", task, "word24 | semantic6 (must match the checkpoint)");
    ev->add_option("--in", in, "trial segment file")->required();
    ev->add_option("--out", out, "test report JSON")->required();

    auto* fc = app.add_subcommand("forecast", "autoregressive rollout over a context/target ladder");
    add_common(fc, c_fc);
    fc->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
    fc->add_option("--in", in, "window segment file")->required();
    fc->add_option("--ladder", ladder, "ctx:target,... (defaults to the config's ladder)");
    fc->add_option("--out", out, "per-segment metrics CSV")->required();
    fc->add_option("--summary", summary, "per-horizon summary CSV");
    fc->add_option("--overlay", overlay, "overlay data for the first segment at the first horizon");

    auto* an = app.add_subcommand("analyze", "band-power F-scores between conditions");
    add_common(an, c_an);
    an->add_option("--in", in, "condition segment file")->required();
    an->add_option("--pairs", pairs, "a:b,... over rest, read, silent")->capture_default_str();
    an->add_option("--out", out, "F-score CSV")->required();

    auto* pl = app.add_subcommand("plot", "render an overlay, training log or forecast summary CSV as SVG");
    pl->add_option("--in", in, "CSV file")->required()->check(CLI::ExistingFile);
    pl->add_option("--out", out, "SVG file")->required();
    pl->add_option("--channel", channel, "overlay channel")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return report_error(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(),
                            "UsageError", e.what(), 2);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        using namespace lblm;
        if (*synth) {
            cli::run_synth(resolve(c_synth, command), out);
        } else if (*pre) {
            auto rc = resolve(c_pre, command);
            fs::path src = in.empty() ? fs::path(rc.data_path) : fs::path(in);
            if (src.empty()) throw ConfigError("preprocess needs --in or data.path in the config");
            cli::run_preprocess(rc, src, out, cli::parse_segment_kind(kind), cli::parse_session_filter(sessions));
        } else if (*pt) {
            cli::run_pretrain_stage(resolve(c_pt, command), backbone::parse_stage(stage), in, opt_path(init), out,
                                    opt_path(log));
        } else if (*ft) {
            cli::run_finetune(resolve(c_ft, command), classify::parse_task(task), init, in, out, report,
                              opt_path(log));
        } else if (*ev) {
            std::optional<classify::Task> t;
            if (!task.empty()) t = classify::parse_task(task);
            cli::run_eval(resolve(c_eval, command), checkpoint, t, in, out);
        } else if (*fc) {
            auto rc = resolve(c_fc, command);
            auto lad = ladder.empty() ? rc.forecast.ladder : forecast::parse_ladder(ladder);
            cli::run_forecast(rc, checkpoint, in, lad, out, opt_path(summary), opt_path(overlay));
        } else if (*an) {
            cli::run_analyze(resolve(c_an, command), in, cli::parse_pairs(pairs), out);
        } else if (*pl) {
            cli::run_plot(in, out, channel);
        }
    } catch (const lblm::ConfigError& e) {
        return report_error(command, "ConfigError", e.what(), 2);
    } catch (const lblm::FormatError& e) {
        return report_error(command, "FormatError", e.what(), 3);
    } catch (const lblm::Error& e) {
        return report_error(command, "Error", e.what(), 4);
    } catch (const nlohmann::json::exception& e) {
        return report_error(command, "ConfigError", e.what(), 2);
    } catch (const std::exception& e) {
        return report_error(command, "InternalError", e.what(), 1);
    }
    return 0;
}
