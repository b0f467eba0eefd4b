#pragma once

#include <string>
#include <vector>

#include "experiment/config.hpp"
#include "json.hpp"

namespace fiplab::experiment {

enum class Stage { gen_data, train, analyze, purify, report };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);
// Parses a comma-separated stage list ("gen-data,train"); "all" expands to
// every stage. The result is sorted into pipeline order.
std::vector<Stage> parse_stages(const std::string& csv);

struct StageOutcome {
    Stage stage;
    bool cached = false;
    double seconds = 0.0;
};

struct RunSummary {
    std::vector<StageOutcome> outcomes;
    std::filesystem::path output_dir;
    std::filesystem::path report_path;  // empty until the report stage ran
    nlohmann::json report;              // null until the report stage ran

    nlohmann::json to_json() const;
};

// Executes the requested stages in pipeline order. Completed stages are
// skipped unless `force` is set; a stage whose prerequisites are missing on
// disk raises ErrorCode::prerequisite naming the stage to run first.
RunSummary run(const ExperimentConfig& cfg, const std::vector<Stage>& stages, bool force);
RunSummary run(const std::filesystem::path& config_path, const std::string& stages_csv,
               bool force);

// Artifact locations under the configured output directory.
struct ArtifactPaths {
    std::filesystem::path root;

    std::filesystem::path manifest() const { return root / "manifest.json"; }
    std::filesystem::path stage_times() const { return root / "stage_times.json"; }

    std::filesystem::path data_dir() const { return root / "data"; }
    std::filesystem::path train_clean_images() const { return data_dir() / "train_clean_images.idx"; }
    std::filesystem::path train_clean_labels() const { return data_dir() / "train_clean_labels.idx"; }
    std::filesystem::path val_images() const { return data_dir() / "val_images.idx"; }
    std::filesystem::path val_labels() const { return data_dir() / "val_labels.idx"; }
    std::filesystem::path test_clean_images() const { return data_dir() / "test_clean_images.idx"; }
    std::filesystem::path test_clean_labels() const { return data_dir() / "test_clean_labels.idx"; }
    std::filesystem::path train_poisoned_images() const { return data_dir() / "train_poisoned_images.idx"; }
    std::filesystem::path train_poisoned_labels() const { return data_dir() / "train_poisoned_labels.idx"; }
    std::filesystem::path test_triggered_images() const { return data_dir() / "test_triggered_images.idx"; }
    std::filesystem::path test_triggered_labels() const { return data_dir() / "test_triggered_labels.idx"; }
    std::filesystem::path train_bookkeeping() const { return data_dir() / "train_bookkeeping.json"; }
    std::filesystem::path test_bookkeeping() const { return data_dir() / "test_bookkeeping.json"; }

    std::filesystem::path checkpoint_dir() const { return root / "checkpoints"; }
    std::filesystem::path benign_ckpt() const { return checkpoint_dir() / "benign.ckpt"; }
    std::filesystem::path backdoor_ckpt() const { return checkpoint_dir() / "backdoor.ckpt"; }
    std::filesystem::path trace_dir() const { return root / "traces"; }
    std::filesystem::path benign_trace() const { return trace_dir() / "train_benign.csv"; }
    std::filesystem::path backdoor_trace() const { return trace_dir() / "train_backdoor.csv"; }

    std::filesystem::path analysis_dir() const { return root / "analysis"; }
    std::filesystem::path hessian_batch() const { return analysis_dir() / "hessian_batch.json"; }
    std::filesystem::path smoothness_benign() const { return analysis_dir() / "smoothness_benign.json"; }
    std::filesystem::path smoothness_backdoor() const { return analysis_dir() / "smoothness_backdoor.json"; }
    std::filesystem::path density_benign() const { return analysis_dir() / "density_benign.csv"; }
    std::filesystem::path density_backdoor() const { return analysis_dir() / "density_backdoor.csv"; }

    std::filesystem::path purify_dir() const { return root / "purify"; }
    std::filesystem::path purified_ckpt() const { return purify_dir() / "purified.ckpt"; }
    std::filesystem::path purify_trace() const { return purify_dir() / "purify_trace.csv"; }
    std::filesystem::path fisher_bin() const { return purify_dir() / "fisher.bin"; }
    std::filesystem::path fisher_sidecar() const { return purify_dir() / "fisher.json"; }
    std::filesystem::path smoothness_purified() const { return purify_dir() / "smoothness_purified.json"; }
    std::filesystem::path density_purified() const { return purify_dir() / "density_purified.csv"; }

    std::filesystem::path report_dir() const { return root / "report"; }
    std::filesystem::path report_json() const { return report_dir() / "report.json"; }
    std::filesystem::path metrics_csv() const { return report_dir() / "metrics.csv"; }
    std::filesystem::path smoothness_csv() const { return report_dir() / "smoothness.csv"; }
    std::filesystem::path density_csv() const { return report_dir() / "density.csv"; }
};

ArtifactPaths artifact_paths(const ExperimentConfig& cfg);

// Deterministic ground-truth-labelled Hessian batch: seeded sample of the
// poisoned training set with original labels restored.
nn::Batch load_hessian_batch(const ExperimentConfig& cfg, const ArtifactPaths& paths);

data::PoisonBookkeeping load_bookkeeping(const std::filesystem::path& path);
void save_bookkeeping(const data::PoisonBookkeeping& bk, const std::filesystem::path& path);

}  // namespace fiplab::experiment
