#include "lblm/cli/pipeline.hpp"
#include "lblm/io.hpp"
#include "lblm/signal/dataset_io.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <unistd.h>

using namespace lblm;
using namespace lblm::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("lblm_cli_test_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// Small enough to run the whole chain in a couple of seconds.
nlohmann::json tiny_run() {
    return nlohmann::json::parse(R"({
      "seed": 3,
      "data": {"generator": {"subjects": 2, "sessions": 3, "trials_per_session": 6, "channels": 4, "snr": 2.0}},
      "preprocess": {"multiband": false},
      "model": {"d": 8, "layers": 1, "heads": 2, "ffn_dim": 16, "K_subjects": 2},
      "pretrain": {"mstp": {"epochs": 1, "lr_base": 0.01}, "astp": {"epochs": 1, "lr_base": 0.01}},
      "finetune": {"epochs": 1, "batch": 8, "lr_base": 0.01}
    })");
}

}  // namespace

TEST(RunConfig, DefaultsRoundtripAndHash) {
    auto c = run_config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.forecast.ladder, forecast::default_ladder());
    EXPECT_EQ(c.mstp.stage, backbone::Stage::mstp);
    EXPECT_EQ(c.astp.stage, backbone::Stage::astp);
    auto again = run_config_from_json(to_json(c));
    EXPECT_EQ(to_json(again), to_json(c));
    EXPECT_EQ(config_hash(again), config_hash(c));
    auto other = nlohmann::json{{"seed", 9}};
    EXPECT_NE(config_hash(run_config_from_json(other)), config_hash(c));
}

TEST(RunConfig, RejectsUnknownKeysEverywhere) {
    EXPECT_THROW(run_config_from_json({{"sede", 1}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"data", {{"generatr", nlohmann::json::object()}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"preprocess", {{"notch", 50}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"model", {{"depth", 2}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"pretrain", {{"fstp", nlohmann::json::object()}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"pretrain", {{"mstp", {{"epoch", 2}}}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"finetune", {{"task", "word25"}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"forecast", {{"ladder", "204-46"}}}}), ConfigError);
}

TEST(RunConfig, SeedsOnlyAtTopLevel) {
    EXPECT_THROW(run_config_from_json({{"pretrain", {{"mstp", {{"seed", 1}}}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"finetune", {{"seed", 1}}}}), ConfigError);
    EXPECT_THROW(run_config_from_json({{"pretrain", {{"astp", {{"stage", "mstp"}}}}}}), ConfigError);
    auto c = run_config_from_json({{"seed", 42}});
    EXPECT_EQ(c.mstp.seed, 42u);
    EXPECT_EQ(c.astp.seed, 42u);
    EXPECT_EQ(resolve_finetune(c, classify::Task::word24, 8).seed, 42u);
}

TEST(RunConfig, SeedPrecedenceFlagEnvConfig) {
    TempDir dir;
    auto path = dir.path / "cfg.json";
    io::write_text_atomic(path, R"({"seed": 5})");
    ::unsetenv("LBLM_SEED");
    EXPECT_EQ(load_run_config(path, std::nullopt).seed, 5u);
    ::setenv("LBLM_SEED", "17", 1);
    EXPECT_EQ(load_run_config(path, std::nullopt).seed, 17u);
    EXPECT_EQ(load_run_config(path, 99).seed, 99u);
    ::setenv("LBLM_SEED", "x1", 1);
    EXPECT_THROW(load_run_config(path, std::nullopt), ConfigError);
    ::unsetenv("LBLM_SEED");
    io::write_text_atomic(path, "{not json");
    EXPECT_THROW(load_run_config(path, std::nullopt), ConfigError);
}

TEST(RunConfig, FinetuneResolution) {
    auto c = run_config_from_json(nlohmann::json::object());
    auto w = resolve_finetune(c, classify::Task::word24, 5);
    EXPECT_EQ(w.classifier.num_classes, 24);
    EXPECT_EQ(w.classifier.channels, 5);
    auto s = resolve_finetune(c, classify::Task::semantic6, 5);
    EXPECT_EQ(s.classifier.num_classes, 6);
    auto bad = run_config_from_json({{"finetune", {{"classifier", {{"num_classes", 6}}}}}});
    EXPECT_THROW(resolve_finetune(bad, classify::Task::word24, 5), ConfigError);
}

TEST(Pairs, ParseAndReject) {
    auto p = parse_pairs("rest:silent,read:silent");
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].first, signal::Condition::rest);
    EXPECT_EQ(p[1].first, signal::Condition::read);
    EXPECT_THROW(parse_pairs("rest-silent"), ConfigError);
    EXPECT_THROW(parse_pairs("rest:rest"), ConfigError);
    EXPECT_THROW(parse_pairs(""), ConfigError);
}

TEST(HashLine, PrefixAndStrip) {
    auto s = with_hash_line("abc", "a,b\n1,2\n");
    EXPECT_EQ(s, "# config_hash=abc\na,b\n1,2\n");
    EXPECT_EQ(strip_comments(s), "a,b\n1,2\n");
}

TEST(Segments, SessionFilters) {
    auto c = run_config_from_json(tiny_run());
    auto recs = signal::synth_dataset(*c.generator, 1);
    std::set<int> pre, test;
    for (const auto& s : make_segments(recs, c.preprocess, SegmentKind::windows, SessionFilter::pretrain)) pre.insert(s.session_id);
    for (const auto& s : make_segments(recs, c.preprocess, SegmentKind::windows, SessionFilter::test)) test.insert(s.session_id);
    EXPECT_EQ(pre, std::set<int>{0});
    EXPECT_EQ(test, std::set<int>{2});
    std::map<signal::Condition, int> n;
    for (const auto& s : make_segments(recs, c.preprocess, SegmentKind::conditions, SessionFilter::all)) {
        n[s.condition]++;
        EXPECT_EQ(s.length(), 250);
    }
    EXPECT_EQ(n[signal::Condition::rest], 2 * 3 * 6);
    EXPECT_EQ(n[signal::Condition::silent], 2 * 3 * 6);
    c.preprocess.multiband = true;
    auto mixed = make_segments(recs, c.preprocess, SegmentKind::windows, SessionFilter::test);
    EXPECT_EQ(mixed.size(), 4 * make_segments(recs, run_config_from_json(tiny_run()).preprocess, SegmentKind::windows,
                                              SessionFilter::test).size());
}

TEST(Pipeline, ChainEmbedsHashAndRefusesUnorderedAstp) {
    TempDir dir;
    auto c = run_config_from_json(tiny_run());
    const auto hash = config_hash(c);
    auto p = [&](const char* n) { return dir.path / n; };
    run_synth(c, p("d.lbld"));
    EXPECT_EQ(nlohmann::json::parse(io::read_file(p("d.meta.json"))).at("config_hash"), hash);
    run_preprocess(c, p("d.lbld"), p("w.lbls"), SegmentKind::windows, SessionFilter::pretrain);
    run_preprocess(c, p("d.lbld"), p("t.lbls"), SegmentKind::trials, SessionFilter::all);
    EXPECT_EQ(nlohmann::json::parse(io::read_file(p("w.meta.json"))).at("config_hash"), hash);

    EXPECT_THROW(run_pretrain_stage(c, backbone::Stage::astp, p("w.lbls"), std::nullopt, p("a.lblc"), std::nullopt),
                 ConfigError);
    EXPECT_FALSE(fs::exists(p("a.lblc")));

    run_pretrain_stage(c, backbone::Stage::mstp, p("w.lbls"), std::nullopt, p("m.lblc"), p("m.csv"));
    run_pretrain_stage(c, backbone::Stage::astp, p("w.lbls"), p("m.lblc"), p("a.lblc"), std::nullopt);
    auto a = backbone::load_checkpoint(p("a.lblc"));
    EXPECT_EQ(a.stage, backbone::Stage::astp);
    EXPECT_EQ(a.metadata.at("config_hash"), hash);
    auto log = io::read_file(p("m.csv"));
    EXPECT_EQ(std::string(log.begin(), log.end()).rfind("# config_hash=" + hash + "\n", 0), 0u);

    run_finetune(c, classify::Task::semantic6, p("a.lblc"), p("t.lbls"), p("f.lblc"), p("val.json"), std::nullopt);
    EXPECT_EQ(nlohmann::json::parse(io::read_file(p("val.json"))).at("role"), "val");
    EXPECT_THROW(run_eval(c, p("f.lblc"), classify::Task::word24, p("t.lbls"), p("test.json")), ConfigError);
    EXPECT_THROW(run_eval(c, p("a.lblc"), std::nullopt, p("t.lbls"), p("test.json")), ConfigError);
    run_eval(c, p("f.lblc"), classify::Task::semantic6, p("t.lbls"), p("test.json"));
    auto report = nlohmann::json::parse(io::read_file(p("test.json")));
    EXPECT_EQ(report.at("config_hash"), hash);
    EXPECT_EQ(report.at("role"), "test");
}

TEST(Plot, RendersOverlayWithStartMarker) {
    TempDir dir;
    std::string csv = "# config_hash=feed\nt,channel,truth,prediction,is_forecast\n";
    for (int t = 0; t < 10; ++t) csv += std::to_string(t) + ",0," + std::to_string(t * 0.1) + ",,0\n";
    for (int t = 10; t < 14; ++t) csv += std::to_string(t) + ",0,1,0.9,1\n";
    io::write_text_atomic(dir.path / "o.csv", csv);
    run_plot(dir.path / "o.csv", dir.path / "o.svg");
    auto svg = io::read_file(dir.path / "o.svg");
    std::string s(svg.begin(), svg.end());
    EXPECT_EQ(s.rfind("<svg", 0), 0u);
    EXPECT_NE(s.find("prediction start"), std::string::npos);
    EXPECT_NE(s.find("config_hash=feed"), std::string::npos);
    EXPECT_THROW(run_plot(dir.path / "o.csv", dir.path / "x.svg", 3), ConfigError);
    io::write_text_atomic(dir.path / "bad.csv", "a,b\n1,2\n");
    EXPECT_THROW(run_plot(dir.path / "bad.csv", dir.path / "bad.svg"), FormatError);
    EXPECT_FALSE(fs::exists(dir.path / "bad.svg"));
}
