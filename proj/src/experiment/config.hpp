#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "fip/purify.hpp"
#include "train/trainer.hpp"

namespace fiplab::experiment {

struct SyntheticSpec {
    int class_count = 3;
    int per_class_train = 500;
    int per_class_test = 200;
    int image_size = 16;
    double noise_level = 0.25;
    std::uint64_t train_seed = 0;
    std::uint64_t test_seed = 0;
};

struct IdxSpec {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;
};

struct ValidationSpec {
    double fraction = 0.0;  // exactly one of fraction/per_class is set
    int per_class = 0;
    std::uint64_t seed = 0;
};

struct DatasetSection {
    std::optional<SyntheticSpec> synthetic;
    std::optional<IdxSpec> idx;
    ValidationSpec validation;
};

struct TriggerConfig {
    data::TriggerKind kind = data::TriggerKind::patch;
    int row = 0;
    int col = 0;
    int size = 0;
    double value = 1.0;
    double alpha = 0.0;
    std::uint64_t pattern_seed = 0;
};

struct AttackSection {
    TriggerConfig trigger;
    data::LabelMapKind label_map = data::LabelMapKind::all2one;
    int target = 0;
    double poison_rate = 0.0;
    std::uint64_t seed = 0;
};

struct TrainEntry {
    train::TrainConfig sgd;
    std::uint64_t init_seed = 0;
};

struct TrainSection {
    std::vector<int> hidden{64, 32};
    TrainEntry benign;
    TrainEntry backdoor;
};

struct DensitySpec {
    int steps = 30;
    int probes = 4;
    std::uint64_t seed = 0;
};

struct AnalysisSection {
    int batch_size = 200;
    std::uint64_t batch_seed = 0;
    int power_iters = 200;
    double power_tol = 1e-6;
    std::uint64_t power_seed = 0;
    int hutchinson_probes = 100;
    std::uint64_t hutchinson_seed = 0;
    std::optional<DensitySpec> density;
};

enum class DefenseMode { fip, ffip, vanilla_ft };

struct DefenseSection {
    DefenseMode mode = DefenseMode::fip;
    fip::FipConfig fip;
};

struct ReportSection {
    std::filesystem::path output_dir;
};

struct ExperimentConfig {
    DatasetSection dataset;
    AttackSection attack;
    TrainSection train;
    AnalysisSection analysis;
    DefenseSection defense;
    ReportSection report;
    std::uint64_t config_checksum = 0;
    std::filesystem::path source_path;
};

// Loads and validates a config file. Unknown keys are rejected with the JSON
// pointer path of the offending key; all seeds must be explicit. The
// FIPLAB_OUTPUT_ROOT environment variable, when set, overrides
// report.output_dir.
ExperimentConfig load_config(const std::filesystem::path& path);

// Builds the runtime trigger (generating the blend pattern when needed).
data::TriggerSpec make_trigger(const TriggerConfig& cfg, int height, int width);
data::PoisonPlan make_poison_plan(const AttackSection& attack, int height, int width);

const char* defense_mode_name(DefenseMode mode);

}  // namespace fiplab::experiment
