#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "experiment/config.hpp"
#include "experiment/pipeline.hpp"
#include "experiment/report.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "support/mini_config.hpp"

using namespace fiplab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("config loader accepts the mini config and applies env override") {
    const fs::path dir = fresh_dir("fiplab_cfg_ok");
    const fs::path path = testcfg::write_mini_config(dir);
    experiment::ExperimentConfig cfg = experiment::load_config(path);
    CHECK(cfg.dataset.synthetic.has_value());
    CHECK(cfg.dataset.validation.fraction == 0.05);
    CHECK(cfg.attack.poison_rate == 0.1);
    CHECK(cfg.train.hidden == std::vector<int>{24, 12});
    CHECK(cfg.defense.mode == experiment::DefenseMode::fip);
    CHECK(cfg.report.output_dir == dir / "out");

    setenv("FIPLAB_OUTPUT_ROOT", (dir / "elsewhere").c_str(), 1);
    experiment::ExperimentConfig cfg2 = experiment::load_config(path);
    CHECK(cfg2.report.output_dir == dir / "elsewhere");
    unsetenv("FIPLAB_OUTPUT_ROOT");
}

TEST_CASE("config loader rejects unknown keys with a JSON pointer") {
    const fs::path dir = fresh_dir("fiplab_cfg_unknown");
    std::string text = testcfg::mini_config_text((dir / "out").string());
    text.replace(text.find("\"eta_f\""), 7, "\"eta_F_typo\"");
    write_text(dir / "bad.json", text);
    try {
        experiment::load_config(dir / "bad.json");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
        CHECK(std::string(e.what()).find("/defense/fip/eta_F_typo") != std::string::npos);
    }
}

TEST_CASE("config loader demands explicit seeds") {
    const fs::path dir = fresh_dir("fiplab_cfg_seed");
    std::string text = testcfg::mini_config_text((dir / "out").string());
    const auto pos = text.find("\"batch_seed\": 99,");
    text.erase(pos, std::string("\"batch_seed\": 99,").size());
    write_text(dir / "bad.json", text);
    try {
        experiment::load_config(dir / "bad.json");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
        CHECK(std::string(e.what()).find("batch_seed") != std::string::npos);
    }
}

TEST_CASE("config loader checks referenced idx files") {
    const fs::path dir = fresh_dir("fiplab_cfg_idx");
    std::string text = testcfg::mini_config_text((dir / "out").string());
    const std::string synth_start = "\"synthetic\": {";
    const auto a = text.find(synth_start);
    const auto b = text.find("},", a);
    text.replace(a, b + 1 - a,
                 "\"idx\": {\"train_images\": \"missing.idx\", \"train_labels\": \"missing.idx\","
                 " \"test_images\": \"missing.idx\", \"test_labels\": \"missing.idx\"}");
    write_text(dir / "bad.json", text);
    try {
        experiment::load_config(dir / "bad.json");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
        CHECK(std::string(e.what()).find("does not exist") != std::string::npos);
    }
}

TEST_CASE("stage parsing and ordering") {
    auto stages = experiment::parse_stages("train,gen-data");
    REQUIRE(stages.size() == 2);
    CHECK(stages[0] == experiment::Stage::gen_data);
    CHECK(stages[1] == experiment::Stage::train);
    CHECK(experiment::parse_stages("all").size() == 5);
    CHECK_THROWS_AS(experiment::parse_stages("nonsense"), Error);
}

TEST_CASE("report stage without prerequisites names the missing stage") {
    const fs::path dir = fresh_dir("fiplab_prereq");
    const fs::path path = testcfg::write_mini_config(dir);
    experiment::ExperimentConfig cfg = experiment::load_config(path);
    try {
        experiment::run(cfg, {experiment::Stage::report}, false);
        FAIL("expected a prerequisite error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::prerequisite);
        CHECK(std::string(e.what()).find("gen-data") != std::string::npos);
    }
}

TEST_CASE("full mini pipeline produces a report and caches cleanly") {
    const fs::path dir = fresh_dir("fiplab_pipeline");
    const fs::path path = testcfg::write_mini_config(dir);
    experiment::ExperimentConfig cfg = experiment::load_config(path);

    auto summary = experiment::run(cfg, experiment::parse_stages("all"), false);
    REQUIRE(summary.outcomes.size() == 5);
    for (const auto& o : summary.outcomes) {
        CHECK(!o.cached);
    }
    REQUIRE(!summary.report_path.empty());

    const json& report = summary.report;
    CHECK(report.at("schema_version").get<int>() == experiment::kReportSchemaVersion);
    CHECK(report.at("metrics").contains("benign"));
    CHECK(report.at("metrics").contains("backdoor"));
    CHECK(report.at("metrics").contains("purified"));
    CHECK(report.at("smoothness").contains("benign"));
    CHECK(report.at("smoothness").contains("backdoor"));
    CHECK(report.at("smoothness").contains("purified"));
    CHECK(report.at("smoothness").at("benign_vs_backdoor").contains("verdict"));
    CHECK(report.at("tunable_params").at("spectral_shift_weights").get<int>() ==
          std::min(256, 24) + std::min(24, 12) + std::min(12, 3));
    CHECK(report.at("stage_seconds").contains("train"));
    // Both smoothness rows carry their provenance.
    CHECK(report.at("smoothness").at("backdoor").at("probes").get<int>() == 8);
    CHECK(report.at("smoothness").at("backdoor").at("label_mode").get<std::string>() ==
          "ground-truth");

    const auto paths = experiment::artifact_paths(cfg);
    const std::uint64_t report_hash = hash::fnv1a64_file(paths.report_json());

    // Cached rerun: no stage recomputes, the report file stays bit-identical.
    auto again = experiment::run(cfg, experiment::parse_stages("all"), false);
    for (const auto& o : again.outcomes) {
        CHECK(o.cached);
        CHECK(o.seconds == 0.0);
    }
    CHECK(hash::fnv1a64_file(paths.report_json()) == report_hash);

    // The validation artifact is clean: no triggered pixels, balanced classes.
    data::LabeledDataset val = data::load_idx(paths.val_images(), paths.val_labels());
    CHECK(val.size() == 9);  // ceil(0.05 * 60) = 3 per class
    data::LabeledDataset train_poisoned =
        data::load_idx(paths.train_poisoned_images(), paths.train_poisoned_labels());
    auto bk = experiment::load_bookkeeping(paths.train_bookkeeping());
    CHECK(bk.records.size() == 17);  // round(0.1 * 171)

    // Hessian batch restores ground-truth labels.
    nn::Batch hb = experiment::load_hessian_batch(cfg, paths);
    CHECK(hb.size() == 40);
    CHECK(hb.class_count == 3);
}

TEST_CASE("config change is detected against cached artifacts") {
    const fs::path dir = fresh_dir("fiplab_stale");
    const fs::path path = testcfg::write_mini_config(dir);
    experiment::ExperimentConfig cfg = experiment::load_config(path);
    experiment::run(cfg, {experiment::Stage::gen_data}, false);

    std::string text = testcfg::mini_config_text((dir / "out").string());
    text.replace(text.find("\"poison_rate\": 0.1"), std::string("\"poison_rate\": 0.1").size(),
                 "\"poison_rate\": 0.2");
    write_text(path, text);
    experiment::ExperimentConfig changed = experiment::load_config(path);
    CHECK_THROWS_AS(experiment::run(changed, {experiment::Stage::train}, false), Error);
    // --force regenerates instead.
    auto summary = experiment::run(changed, {experiment::Stage::gen_data}, true);
    CHECK(!summary.outcomes[0].cached);
}

TEST_CASE("diff of a report with itself is all zeros; drops match manual arithmetic") {
    // Hand-built fixture reports.
    json fixture{
        {"schema_version", experiment::kReportSchemaVersion},
        {"metrics",
         {{"benign", {{"acc", 0.97}}},
          {"backdoor", {{"acc", 0.95}, {"asr", 1.00}, {"lcr", 0.00}}},
          {"purified", {{"acc", 0.92}, {"asr", 0.0186}, {"lcr", 0.80}}}}},
        {"smoothness",
         {{"benign", {{"lambda_max", 1.0}, {"trace", 5.0}}},
          {"backdoor", {{"lambda_max", 10.0}, {"trace", 60.0}}},
          {"purified", {{"lambda_max", 0.5}, {"trace", 2.0}}}}},
    };
    const std::string same = experiment::diff_reports(fixture, fixture);
    CHECK(same.find("backdoor.asr: +0.00") != std::string::npos);
    // 100% -> 1.86%: an ASR drop of 98.14 points; ACC drop 95 - 92 = 3.
    CHECK(same.find("ASR drop 98.14") != std::string::npos);
    CHECK(same.find("ACC drop 3.00") != std::string::npos);

    json other = fixture;
    other["metrics"]["purified"]["asr"] = 0.0486;
    const std::string diff = experiment::diff_reports(fixture, other);
    CHECK(diff.find("purified.asr: +3.00") != std::string::npos);

    json wrong_schema = fixture;
    wrong_schema["schema_version"] = 99;
    CHECK_THROWS_AS(experiment::diff_reports(fixture, wrong_schema), Error);
}
