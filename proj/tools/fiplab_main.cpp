// Command-line front end. Everything goes through the C API of libfiplab;
// this translation unit holds no experiment logic of its own.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "fiplab.h"

namespace {

// Exit codes: 0 success, 2 config error, 3 prerequisite missing,
// 4 numerical failure, 1 anything else.
int exit_code_for(fiplab_status status) {
    switch (status) {
        case FIPLAB_OK:
            return 0;
        case FIPLAB_ERR_CONFIG:
            return 2;
        case FIPLAB_ERR_PREREQUISITE:
            return 3;
        case FIPLAB_ERR_NUMERIC:
            return 4;
        default:
            return 1;
    }
}

int run_stage(const std::string& config, const std::string& stage, bool force) {
    char* summary = nullptr;
    const fiplab_status status = fiplab_run(config.c_str(), stage.c_str(), force ? 1 : 0,
                                            &summary);
    if (status != FIPLAB_OK) {
        std::fprintf(stderr, "error: %s\n", fiplab_last_error());
        return exit_code_for(status);
    }
    if (summary) {
        std::printf("%s\n", summary);
        fiplab_string_free(summary);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fiplab: train, poison, analyze and purify small classifiers"};
    app.require_subcommand(1);

    std::string config;
    bool force = false;

    const auto add_stage = [&](const char* name, const char* desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("-c,--config", config, "experiment config (JSON)")->required();
        sub->add_flag("--force", force, "recompute even when artifacts exist");
        return sub;
    };

    CLI::App* gen = add_stage("gen-data", "generate or load datasets and build the poisoned splits");
    CLI::App* train = add_stage("train", "train the benign and backdoor models");
    CLI::App* analyze = add_stage("analyze", "estimate loss-Hessian smoothness of both models");
    CLI::App* purify = add_stage("purify", "purify the backdoor model per the defense config");
    CLI::App* report = add_stage("report", "assemble report.json and the CSV outputs");

    std::string report_a, report_b;
    CLI::App* diff = app.add_subcommand("diff", "compare two report.json files");
    diff->add_option("first", report_a, "first report.json")->required();
    diff->add_option("second", report_b, "second report.json")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        return run_stage(config, "gen-data", force);
    }
    if (train->parsed()) {
        return run_stage(config, "train", force);
    }
    if (analyze->parsed()) {
        return run_stage(config, "analyze", force);
    }
    if (purify->parsed()) {
        return run_stage(config, "purify", force);
    }
    if (report->parsed()) {
        return run_stage(config, "report", force);
    }
    if (diff->parsed()) {
        char* text = nullptr;
        const fiplab_status status =
            fiplab_diff_reports(report_a.c_str(), report_b.c_str(), &text);
        if (status != FIPLAB_OK) {
            std::fprintf(stderr, "error: %s\n", fiplab_last_error());
            return exit_code_for(status);
        }
        std::printf("%s", text);
        fiplab_string_free(text);
        return 0;
    }
    return 1;
}
