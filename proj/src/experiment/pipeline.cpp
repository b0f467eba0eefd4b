#include "experiment/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

#include "experiment/report.hpp"
#include "nn/ops.hpp"
#include "smoothness/smoothness.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "support/rng.hpp"

namespace fiplab::experiment {

using nlohmann::json;

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::gen_data:
            return "gen-data";
        case Stage::train:
            return "train";
        case Stage::analyze:
            return "analyze";
        case Stage::purify:
            return "purify";
        case Stage::report:
            return "report";
    }
    return "unknown";
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::gen_data, Stage::train, Stage::analyze, Stage::purify, Stage::report}) {
        if (name == stage_name(s)) {
            return s;
        }
    }
    raise(ErrorCode::invalid_argument, "unknown stage: " + name);
}

std::vector<Stage> parse_stages(const std::string& csv) {
    std::vector<Stage> stages;
    if (csv == "all") {
        return {Stage::gen_data, Stage::train, Stage::analyze, Stage::purify, Stage::report};
    }
    std::size_t start = 0;
    while (start <= csv.size()) {
        const std::size_t comma = csv.find(',', start);
        const std::string token =
            csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!token.empty()) {
            stages.push_back(stage_from_name(token));
        }
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    if (stages.empty()) {
        raise(ErrorCode::invalid_argument, "no stages requested");
    }
    std::sort(stages.begin(), stages.end());
    stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
    return stages;
}

ArtifactPaths artifact_paths(const ExperimentConfig& cfg) {
    return ArtifactPaths{cfg.report.output_dir};
}

void save_bookkeeping(const data::PoisonBookkeeping& bk, const std::filesystem::path& path) {
    json records = json::array();
    for (const data::PoisonRecord& rec : bk.records) {
        records.push_back({rec.index, rec.original_label, rec.assigned_label});
    }
    json doc{{"realized_epsilon", bk.realized_epsilon}, {"records", records}};
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::io, "cannot write bookkeeping: " + path.string());
    }
    out << doc.dump(2) << '\n';
}

data::PoisonBookkeeping load_bookkeeping(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        raise(ErrorCode::io, "cannot open bookkeeping: " + path.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        raise(ErrorCode::format, "bookkeeping is not valid JSON: " + path.string());
    }
    data::PoisonBookkeeping bk;
    bk.realized_epsilon = doc.at("realized_epsilon").get<double>();
    for (const auto& rec : doc.at("records")) {
        bk.records.push_back({rec.at(0).get<std::size_t>(), rec.at(1).get<int>(),
                              rec.at(2).get<int>()});
    }
    return bk;
}

namespace {

using Clock = std::chrono::steady_clock;

bool all_exist(const std::vector<std::filesystem::path>& files) {
    for (const auto& f : files) {
        if (!std::filesystem::exists(f)) {
            return false;
        }
    }
    return true;
}

void require_stage_artifacts(const std::vector<std::filesystem::path>& files,
                             const char* missing_stage) {
    if (!all_exist(files)) {
        raise(ErrorCode::prerequisite,
              std::string("missing artifacts; run the '") + missing_stage + "' stage first");
    }
}

std::vector<std::filesystem::path> gen_data_outputs(const ArtifactPaths& p) {
    return {p.manifest(),
            p.train_clean_images(),
            p.train_clean_labels(),
            p.val_images(),
            p.val_labels(),
            p.test_clean_images(),
            p.test_clean_labels(),
            p.train_poisoned_images(),
            p.train_poisoned_labels(),
            p.test_triggered_images(),
            p.test_triggered_labels(),
            p.train_bookkeeping(),
            p.test_bookkeeping()};
}

std::vector<std::filesystem::path> train_outputs(const ArtifactPaths& p) {
    return {p.benign_ckpt(), p.backdoor_ckpt(), p.benign_trace(), p.backdoor_trace()};
}

std::vector<std::filesystem::path> analyze_outputs(const ArtifactPaths& p) {
    return {p.hessian_batch(), p.smoothness_benign(), p.smoothness_backdoor()};
}

std::vector<std::filesystem::path> purify_outputs(const ArtifactPaths& p) {
    return {p.purified_ckpt(), p.purify_trace(), p.fisher_bin(), p.fisher_sidecar(),
            p.smoothness_purified()};
}

std::vector<std::filesystem::path> report_outputs(const ArtifactPaths& p) {
    return {p.report_json(), p.metrics_csv(), p.smoothness_csv()};
}

// Manifest guards cached artifacts against config changes.
void check_manifest_matches(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    std::ifstream in(paths.manifest());
    if (!in) {
        return;
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("config_checksum")) {
        raise(ErrorCode::format, "manifest is unreadable: " + paths.manifest().string());
    }
    if (doc["config_checksum"].get<std::string>() != hash::to_hex(cfg.config_checksum)) {
        raise(ErrorCode::config,
              "output directory holds artifacts from a different config; rerun with --force "
              "or choose another report.output_dir");
    }
}

void run_gen_data(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    std::filesystem::create_directories(paths.data_dir());

    data::LabeledDataset train_full;
    data::LabeledDataset test_clean;
    if (cfg.dataset.synthetic) {
        const SyntheticSpec& syn = *cfg.dataset.synthetic;
        train_full = data::gen_synthetic(syn.class_count, syn.per_class_train, syn.image_size,
                                         syn.noise_level, syn.train_seed);
        test_clean = data::gen_synthetic(syn.class_count, syn.per_class_test, syn.image_size,
                                         syn.noise_level, syn.test_seed);
    } else {
        const IdxSpec& idx = *cfg.dataset.idx;
        train_full = data::load_idx(idx.train_images, idx.train_labels);
        test_clean = data::load_idx(idx.test_images, idx.test_labels);
    }

    // Clean validation data is carved out before any poisoning.
    data::SplitSpec split_spec;
    split_spec.fraction = cfg.dataset.validation.fraction;
    split_spec.per_class = cfg.dataset.validation.per_class;
    data::SplitResult split = data::split(train_full, split_spec, cfg.dataset.validation.seed);

    const data::PoisonPlan plan = make_poison_plan(cfg.attack, train_full.height, train_full.width);
    auto [train_poisoned, train_bk] = data::poison(split.train, plan);
    auto [test_triggered, test_bk] = data::make_triggered_eval_set(test_clean, plan);

    data::save_idx(split.train, paths.train_clean_images(), paths.train_clean_labels());
    data::save_idx(split.val, paths.val_images(), paths.val_labels());
    data::save_idx(test_clean, paths.test_clean_images(), paths.test_clean_labels());
    data::save_idx(train_poisoned, paths.train_poisoned_images(), paths.train_poisoned_labels());
    data::save_idx(test_triggered, paths.test_triggered_images(), paths.test_triggered_labels());
    save_bookkeeping(train_bk, paths.train_bookkeeping());
    save_bookkeeping(test_bk, paths.test_bookkeeping());

    json manifest{
        {"schema_version", kReportSchemaVersion},
        {"config_checksum", hash::to_hex(cfg.config_checksum)},
        {"train_size", split.train.size()},
        {"val_size", split.val.size()},
        {"test_size", test_clean.size()},
        {"class_count", train_full.class_count},
        {"image_height", train_full.height},
        {"image_width", train_full.width},
        {"poison_count", train_bk.records.size()},
        {"declared_epsilon", plan.trigger.epsilon},
        {"realized_epsilon", train_bk.realized_epsilon},
        {"train_clean_checksum", hash::to_hex(data::dataset_checksum(split.train))},
        {"train_poisoned_checksum", hash::to_hex(data::dataset_checksum(train_poisoned))},
    };
    std::ofstream out(paths.manifest());
    if (!out) {
        raise(ErrorCode::io, "cannot write manifest: " + paths.manifest().string());
    }
    out << manifest.dump(2) << '\n';
}

void run_train(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    require_stage_artifacts(gen_data_outputs(paths), "gen-data");
    std::filesystem::create_directories(paths.checkpoint_dir());
    std::filesystem::create_directories(paths.trace_dir());

    data::LabeledDataset train_clean =
        data::load_idx(paths.train_clean_images(), paths.train_clean_labels());
    data::LabeledDataset train_poisoned =
        data::load_idx(paths.train_poisoned_images(), paths.train_poisoned_labels());
    data::LabeledDataset test_clean =
        data::load_idx(paths.test_clean_images(), paths.test_clean_labels());
    data::LabeledDataset test_triggered =
        data::load_idx(paths.test_triggered_images(), paths.test_triggered_labels());
    data::PoisonBookkeeping test_bk = load_bookkeeping(paths.test_bookkeeping());
    // Class counts are inferred from labels on load; force the configured one
    // so eval sets missing a class (e.g. all2one-triggered) still line up.
    const int class_count = train_clean.class_count;
    test_triggered.class_count = class_count;

    std::vector<int> widths;
    widths.push_back(train_clean.height * train_clean.width);
    widths.insert(widths.end(), cfg.train.hidden.begin(), cfg.train.hidden.end());
    widths.push_back(class_count);

    train::EvalSets eval;
    eval.clean_test = &test_clean;
    eval.triggered_test = &test_triggered;
    eval.bookkeeping = &test_bk;

    nn::MlpModel benign_init = nn::MlpModel::init(widths, cfg.train.benign.init_seed);
    train::TrainResult benign = train::sgd_train(benign_init, train_clean, cfg.train.benign.sgd,
                                                 eval);
    nn::save_checkpoint(benign.model, paths.benign_ckpt());
    train::write_trace_csv(paths.benign_trace(), benign.trace);

    nn::MlpModel backdoor_init = nn::MlpModel::init(widths, cfg.train.backdoor.init_seed);
    train::TrainResult backdoor =
        train::sgd_train(backdoor_init, train_poisoned, cfg.train.backdoor.sgd, eval);
    nn::save_checkpoint(backdoor.model, paths.backdoor_ckpt());
    train::write_trace_csv(paths.backdoor_trace(), backdoor.trace);
}

}  // namespace

nn::Batch load_hessian_batch(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    data::LabeledDataset train_poisoned =
        data::load_idx(paths.train_poisoned_images(), paths.train_poisoned_labels());
    data::PoisonBookkeeping train_bk = load_bookkeeping(paths.train_bookkeeping());
    const std::vector<int> gt_labels = data::ground_truth_labels(train_poisoned, train_bk);

    const std::size_t n = train_poisoned.size();
    const std::size_t want = std::min<std::size_t>(cfg.analysis.batch_size, n);
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    rng::Xoshiro256pp gen(cfg.analysis.batch_seed);
    for (std::size_t i = 0; i < want && i + 1 < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(gen.below(n - i));
        std::swap(indices[i], indices[j]);
    }
    std::vector<std::size_t> chosen(indices.begin(), indices.begin() + want);
    std::sort(chosen.begin(), chosen.end());
    return data::to_batch(train_poisoned, chosen, &gt_labels);
}

namespace {

smoothness::SmoothnessOptions smoothness_options(const ExperimentConfig& cfg) {
    smoothness::SmoothnessOptions opt;
    opt.power_iters = cfg.analysis.power_iters;
    opt.power_tol = cfg.analysis.power_tol;
    opt.power_seed = cfg.analysis.power_seed;
    opt.probes = cfg.analysis.hutchinson_probes;
    opt.probe_seed = cfg.analysis.hutchinson_seed;
    return opt;
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::io, "cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
}

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

void analyze_one(const ExperimentConfig& cfg, const nn::MlpModel& model, const nn::Batch& batch,
                 const std::filesystem::path& report_path,
                 const std::filesystem::path& density_path) {
    smoothness::SmoothnessReport report =
        smoothness::analyze(model, batch, smoothness_options(cfg));
    write_json_file(smoothness::report_to_json(report), report_path);
    if (cfg.analysis.density) {
        smoothness::LinOp op = smoothness::hvp_operator(model, batch);
        smoothness::SpectralDensity density =
            smoothness::spectral_density(op, model.param_count(), cfg.analysis.density->steps,
                                         cfg.analysis.density->probes, cfg.analysis.density->seed);
        smoothness::write_density_csv(density_path, density);
    }
}

void run_analyze(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    require_stage_artifacts(gen_data_outputs(paths), "gen-data");
    require_stage_artifacts(train_outputs(paths), "train");
    std::filesystem::create_directories(paths.analysis_dir());

    nn::Batch batch = load_hessian_batch(cfg, paths);
    json batch_doc{{"batch_size", batch.size()},
                   {"batch_seed", cfg.analysis.batch_seed},
                   {"label_mode", "ground-truth"}};
    write_json_file(batch_doc, paths.hessian_batch());

    nn::MlpModel benign = nn::load_checkpoint(paths.benign_ckpt());
    nn::MlpModel backdoor = nn::load_checkpoint(paths.backdoor_ckpt());
    analyze_one(cfg, benign, batch, paths.smoothness_benign(), paths.density_benign());
    analyze_one(cfg, backdoor, batch, paths.smoothness_backdoor(), paths.density_backdoor());
}

void run_purify(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    require_stage_artifacts(gen_data_outputs(paths), "gen-data");
    require_stage_artifacts(train_outputs(paths), "train");
    require_stage_artifacts(analyze_outputs(paths), "analyze");
    std::filesystem::create_directories(paths.purify_dir());

    nn::MlpModel backdoor = nn::load_checkpoint(paths.backdoor_ckpt());
    data::LabeledDataset val = data::load_idx(paths.val_images(), paths.val_labels());

    fip::PurifyResult result;
    switch (cfg.defense.mode) {
        case DefenseMode::fip:
            result = fip::fip_purify(backdoor, val, cfg.defense.fip);
            break;
        case DefenseMode::ffip:
            result = fip::ffip_purify(backdoor, val, cfg.defense.fip);
            break;
        case DefenseMode::vanilla_ft: {
            fip::FipConfig vanilla = cfg.defense.fip;
            vanilla.eta_f = 0.0;
            vanilla.eta_r = 0.0;
            result = fip::fip_purify(backdoor, val, vanilla);
            break;
        }
    }

    nn::save_checkpoint(result.model, paths.purified_ckpt());
    fip::write_purify_trace_csv(paths.purify_trace(), result.trace);
    fip::save_fisher(result.fisher, paths.fisher_bin(), paths.fisher_sidecar());

    nn::Batch batch = load_hessian_batch(cfg, paths);
    analyze_one(cfg, result.model, batch, paths.smoothness_purified(), paths.density_purified());
}

void run_report(const ExperimentConfig& cfg, const ArtifactPaths& paths) {
    require_stage_artifacts(gen_data_outputs(paths), "gen-data");
    require_stage_artifacts(train_outputs(paths), "train");
    require_stage_artifacts(analyze_outputs(paths), "analyze");
    require_stage_artifacts(purify_outputs(paths), "purify");
    std::filesystem::create_directories(paths.report_dir());
    assemble_report(cfg, paths);
}

}  // namespace

json RunSummary::to_json() const {
    json stages = json::array();
    for (const StageOutcome& o : outcomes) {
        stages.push_back(
            {{"stage", stage_name(o.stage)}, {"cached", o.cached}, {"seconds", o.seconds}});
    }
    json doc{{"stages", stages}, {"output_dir", output_dir.string()}};
    if (!report_path.empty()) {
        doc["report_path"] = report_path.string();
        doc["report"] = report;
    }
    return doc;
}

RunSummary run(const ExperimentConfig& cfg, const std::vector<Stage>& stages, bool force) {
    ArtifactPaths paths = artifact_paths(cfg);
    std::filesystem::create_directories(paths.root);
    if (!force) {
        check_manifest_matches(cfg, paths);
    }

    RunSummary summary;
    summary.output_dir = paths.root;

    json times = std::filesystem::exists(paths.stage_times())
                     ? read_json_file(paths.stage_times())
                     : json::object();

    for (Stage stage : stages) {
        StageOutcome outcome;
        outcome.stage = stage;

        std::vector<std::filesystem::path> outputs;
        switch (stage) {
            case Stage::gen_data:
                outputs = gen_data_outputs(paths);
                break;
            case Stage::train:
                outputs = train_outputs(paths);
                break;
            case Stage::analyze:
                outputs = analyze_outputs(paths);
                break;
            case Stage::purify:
                outputs = purify_outputs(paths);
                break;
            case Stage::report:
                outputs = report_outputs(paths);
                break;
        }

        if (!force && all_exist(outputs)) {
            outcome.cached = true;
            summary.outcomes.push_back(outcome);
            continue;
        }

        const auto start = Clock::now();
        switch (stage) {
            case Stage::gen_data:
                run_gen_data(cfg, paths);
                break;
            case Stage::train:
                run_train(cfg, paths);
                break;
            case Stage::analyze:
                run_analyze(cfg, paths);
                break;
            case Stage::purify:
                run_purify(cfg, paths);
                break;
            case Stage::report:
                run_report(cfg, paths);
                break;
        }
        outcome.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        times[stage_name(stage)] = outcome.seconds;
        write_json_file(times, paths.stage_times());
        // The report embeds recorded stage times, so it must be rebuilt after
        // they change; rewrite it when the report stage already ran.
        if (stage != Stage::report && std::filesystem::exists(paths.report_json())) {
            std::filesystem::remove(paths.report_json());
        }
        summary.outcomes.push_back(outcome);
    }

    if (std::filesystem::exists(paths.report_json())) {
        summary.report_path = paths.report_json();
        summary.report = read_json_file(paths.report_json());
    }
    return summary;
}

RunSummary run(const std::filesystem::path& config_path, const std::string& stages_csv,
               bool force) {
    ExperimentConfig cfg = load_config(config_path);
    return run(cfg, parse_stages(stages_csv), force);
}

}  // namespace fiplab::experiment
