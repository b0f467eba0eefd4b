#include "experiment/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "experiment/pipeline.hpp"
#include "fip/spectral.hpp"
#include "smoothness/smoothness.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "train/trainer.hpp"

namespace fiplab::experiment {

using nlohmann::json;

namespace {

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        raise(ErrorCode::io, "cannot open " + path.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        raise(ErrorCode::format, "not valid JSON: " + path.string());
    }
    return doc;
}

json ratio_block(const json& first, const json& second) {
    const double l1 = first.at("lambda_max").get<double>();
    const double l2 = second.at("lambda_max").get<double>();
    const double t1 = first.at("trace").get<double>();
    const double t2 = second.at("trace").get<double>();
    const auto ratio = [](double num, double den) {
        return den == 0.0 ? (num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity())
                          : num / den;
    };
    const char* verdict = "MIXED";
    if (l2 > l1 && t2 > t1) {
        verdict = "SECOND_SHARPER";
    } else if (l1 > l2 && t1 > t2) {
        verdict = "FIRST_SHARPER";
    } else if (l1 == l2 && t1 == t2) {
        verdict = "EQUAL";
    }
    return json{{"lambda_ratio", ratio(l2, l1)}, {"trace_ratio", ratio(t2, t1)},
                {"verdict", verdict}};
}

void append_density(std::ofstream& out, const std::filesystem::path& src, const char* model) {
    std::ifstream in(src);
    if (!in) {
        return;
    }
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out << model << ',' << line << '\n';
        }
    }
}

}  // namespace

json assemble_report(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    nn::MlpModel benign = nn::load_checkpoint(paths.benign_ckpt());
    nn::MlpModel backdoor = nn::load_checkpoint(paths.backdoor_ckpt());
    nn::MlpModel purified = nn::load_checkpoint(paths.purified_ckpt());

    data::LabeledDataset test_clean =
        data::load_idx(paths.test_clean_images(), paths.test_clean_labels());
    data::LabeledDataset test_triggered =
        data::load_idx(paths.test_triggered_images(), paths.test_triggered_labels());
    test_triggered.class_count = test_clean.class_count;
    data::PoisonBookkeeping test_bk = load_bookkeeping(paths.test_bookkeeping());

    const auto metrics_of = [&](const nn::MlpModel& model) {
        return json{{"acc", train::evaluate_acc(model, test_clean)},
                    {"asr", train::evaluate_asr(model, test_triggered, test_bk)},
                    {"lcr", train::evaluate_lcr(model, test_triggered, test_bk)}};
    };

    json metrics;
    metrics["benign"] = {{"acc", train::evaluate_acc(benign, test_clean)}};
    metrics["backdoor"] = metrics_of(backdoor);
    metrics["purified"] = metrics_of(purified);

    json smoothness_block;
    smoothness_block["benign"] = read_json_file(paths.smoothness_benign());
    smoothness_block["backdoor"] = read_json_file(paths.smoothness_backdoor());
    smoothness_block["purified"] = read_json_file(paths.smoothness_purified());
    smoothness_block["benign_vs_backdoor"] =
        ratio_block(smoothness_block["benign"], smoothness_block["backdoor"]);
    smoothness_block["backdoor_vs_purified"] =
        ratio_block(smoothness_block["backdoor"], smoothness_block["purified"]);
    smoothness_block["hessian_batch"] = read_json_file(paths.hessian_batch());

    std::vector<std::pair<int, int>> layer_dims;
    for (const nn::Layer& layer : backdoor.layers()) {
        layer_dims.emplace_back(static_cast<int>(layer.weights.rows),
                                static_cast<int>(layer.weights.cols));
    }
    const std::size_t bias_params = backdoor.param_count() -
                                    fip::full_weight_param_count(layer_dims);
    json tunables{
        {"full_weights", fip::full_weight_param_count(layer_dims)},
        {"full_total", backdoor.param_count()},
        {"spectral_shift_weights", fip::spectral_shift_param_count(layer_dims)},
        {"spectral_shift_total", fip::spectral_shift_param_count(layer_dims) + bias_params},
    };

    json stage_seconds = json::object();
    if (std::filesystem::exists(paths.stage_times())) {
        json times = read_json_file(paths.stage_times());
        for (const char* name : {"gen-data", "train", "analyze", "purify"}) {
            if (times.contains(name)) {
                stage_seconds[name] = times[name];
            }
        }
    }

    json report{
        {"schema_version", kReportSchemaVersion},
        {"config_checksum", hash::to_hex(cfg.config_checksum)},
        {"defense_mode", defense_mode_name(cfg.defense.mode)},
        {"manifest", read_json_file(paths.manifest())},
        {"metrics", metrics},
        {"smoothness", smoothness_block},
        {"tunable_params", tunables},
        {"stage_seconds", stage_seconds},
    };

    {
        std::ofstream out(paths.report_json());
        if (!out) {
            raise(ErrorCode::io, "cannot write report: " + paths.report_json().string());
        }
        out << report.dump(2) << '\n';
    }
    {
        std::ofstream out(paths.metrics_csv());
        if (!out) {
            raise(ErrorCode::io, "cannot write metrics: " + paths.metrics_csv().string());
        }
        out << "model,acc,asr,lcr\n";
        char line[256];
        std::snprintf(line, sizeof(line), "benign,%.17g,,\n",
                      metrics["benign"]["acc"].get<double>());
        out << line;
        for (const char* name : {"backdoor", "purified"}) {
            std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g\n", name,
                          metrics[name]["acc"].get<double>(), metrics[name]["asr"].get<double>(),
                          metrics[name]["lcr"].get<double>());
            out << line;
        }
    }
    {
        std::ofstream out(paths.smoothness_csv());
        if (!out) {
            raise(ErrorCode::io, "cannot write smoothness csv");
        }
        out << "model,lambda_max,lambda_max_signed,trace,trace_stderr,probes,power_iters,"
               "residual,converged\n";
        char line[512];
        for (const char* name : {"benign", "backdoor", "purified"}) {
            const json& r = smoothness_block[name];
            std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g,%d\n", name,
                          r["lambda_max"].get<double>(), r["lambda_max_signed"].get<double>(),
                          r["trace"].get<double>(), r["trace_stderr"].get<double>(),
                          r["probes"].get<int>(), r["power_iters"].get<int>(),
                          r["residual"].get<double>(), r["converged"].get<bool>() ? 1 : 0);
            out << line;
        }
    }
    {
        std::ofstream out(paths.density_csv());
        if (out) {
            out << "model,node,weight\n";
            append_density(out, paths.density_benign(), "benign");
            append_density(out, paths.density_backdoor(), "backdoor");
            append_density(out, paths.density_purified(), "purified");
        }
    }
    return report;
}

std::string diff_reports(const json& a, const json& b) {
    if (a.at("schema_version").get<int>() != kReportSchemaVersion ||
        b.at("schema_version").get<int>() != kReportSchemaVersion) {
        raise(ErrorCode::invalid_argument, "report schema versions do not match");
    }

    std::ostringstream out;
    char line[256];
    const auto pct = [](double x) { return 100.0 * x; };

    out << "metric deltas (second - first), percentage points\n";
    const auto metric_delta = [&](const char* model, const char* key) {
        const json& ja = a.at("metrics").at(model);
        const json& jb = b.at("metrics").at(model);
        if (!ja.contains(key) || !jb.contains(key)) {
            return;
        }
        const double va = ja.at(key).get<double>();
        const double vb = jb.at(key).get<double>();
        std::snprintf(line, sizeof(line), "  %s.%s: %+.2f (%.2f -> %.2f)\n", model, key,
                      pct(vb - va), pct(va), pct(vb));
        out << line;
    };
    for (const char* model : {"benign", "backdoor", "purified"}) {
        for (const char* key : {"acc", "asr", "lcr"}) {
            metric_delta(model, key);
        }
    }

    out << "per-report drops vs the no-defense row\n";
    const auto drops = [&](const char* tag, const json& r) {
        const double asr_before = r.at("metrics").at("backdoor").at("asr").get<double>();
        const double asr_after = r.at("metrics").at("purified").at("asr").get<double>();
        const double acc_before = r.at("metrics").at("backdoor").at("acc").get<double>();
        const double acc_after = r.at("metrics").at("purified").at("acc").get<double>();
        std::snprintf(line, sizeof(line), "  %s: ASR drop %.2f, ACC drop %.2f\n", tag,
                      pct(asr_before - asr_after), pct(acc_before - acc_after));
        out << line;
    };
    drops("first", a);
    drops("second", b);

    out << "smoothness (lambda_max, trace)\n";
    for (const char* model : {"benign", "backdoor", "purified"}) {
        const json& ra = a.at("smoothness").at(model);
        const json& rb = b.at("smoothness").at(model);
        std::snprintf(line, sizeof(line), "  %s: lambda %.6g -> %.6g, trace %.6g -> %.6g\n", model,
                      ra.at("lambda_max").get<double>(), rb.at("lambda_max").get<double>(),
                      ra.at("trace").get<double>(), rb.at("trace").get<double>());
        out << line;
    }
    return out.str();
}

std::string diff_report_files(const std::filesystem::path& a, const std::filesystem::path& b) {
    return diff_reports(read_json_file(a), read_json_file(b));
}

}  // namespace fiplab::experiment
