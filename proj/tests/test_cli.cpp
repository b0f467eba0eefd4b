#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "support/mini_config.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FIPLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WEXITSTATUS(raw);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("help and argument errors") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("gen-data") != 0);  // missing --config
}

TEST_CASE("exit codes: config=2, prerequisite=3, success=0") {
    const fs::path dir = fresh_dir("fiplab_cli_run");
    const fs::path cfg = testcfg::write_mini_config(dir);

    // Config error.
    std::ofstream bad(dir / "bad.json");
    bad << "{}";
    bad.close();
    CHECK(run_cli("gen-data -c " + (dir / "bad.json").string()) == 2);

    // Prerequisite: report before anything exists.
    CHECK(run_cli("report -c " + cfg.string()) == 3);

    // Stage-by-stage pipeline.
    CHECK(run_cli("gen-data -c " + cfg.string()) == 0);
    CHECK(run_cli("train -c " + cfg.string()) == 0);
    CHECK(run_cli("analyze -c " + cfg.string()) == 0);
    CHECK(run_cli("purify -c " + cfg.string()) == 0);
    CHECK(run_cli("report -c " + cfg.string()) == 0);

    const fs::path report = dir / "out" / "report" / "report.json";
    CHECK(fs::exists(report));
    CHECK(fs::exists(dir / "out" / "report" / "metrics.csv"));
    CHECK(fs::exists(dir / "out" / "report" / "smoothness.csv"));
    CHECK(fs::exists(dir / "out" / "report" / "density.csv"));
    CHECK(fs::exists(dir / "out" / "checkpoints" / "benign.ckpt"));
    CHECK(fs::exists(dir / "out" / "purify" / "purified.ckpt"));

    // Diff against itself succeeds.
    CHECK(run_cli("diff " + report.string() + " " + report.string()) == 0);
    fs::remove_all(dir);
}
