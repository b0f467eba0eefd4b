#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nn/model.hpp"

namespace fiplab::data {

// Image classification dataset; pixels live in [0,1], images are h*w
// row-major vectors.
struct LabeledDataset {
    int height = 0;
    int width = 0;
    int class_count = 0;
    std::vector<std::vector<double>> images;
    std::vector<int> labels;
    std::string provenance;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

enum class TriggerKind { patch, blend };

struct TriggerSpec {
    TriggerKind kind = TriggerKind::patch;
    // patch: a size x size square at (row, col) set to `value`
    int row = 0;
    int col = 0;
    int size = 0;
    double value = 1.0;
    // blend: x_b = (1 - alpha) x + alpha pattern, clamped to [0,1]
    std::vector<double> blend_pattern;
    double alpha = 0.0;
    // declared max-norm bound on the induced perturbation
    double epsilon = 1.0;
};

// Uniform-noise blend pattern on the pixel grid (multiples of 1/255).
std::vector<double> make_noise_pattern(int height, int width, std::uint64_t seed);

enum class LabelMapKind { all2one, all2all };

struct PoisonPlan {
    TriggerSpec trigger;
    double poison_rate = 0.0;
    LabelMapKind label_map = LabelMapKind::all2one;
    int target = 0;  // all2one target class
    std::uint64_t seed = 0;
};

struct PoisonRecord {
    std::size_t index;
    int original_label;
    int assigned_label;
};

struct PoisonBookkeeping {
    std::vector<PoisonRecord> records;
    // Largest realized |x_b - x| over all poisoned samples.
    double realized_epsilon = 0.0;
};

// Procedural striped textures, one orientation/frequency pair per class,
// plus uniform pixel noise of the given amplitude. Pixels are quantized to
// the 1/255 grid so datasets survive an IDX round trip bit-exactly.
LabeledDataset gen_synthetic(int class_count, int per_class, int image_size, double noise_level,
                             std::uint64_t seed);

// Big-endian IDX containers (magic 0x00000803 for images, 0x00000801 for
// labels); pixel bytes are scaled by 1/255 on load.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path);
void save_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

std::vector<double> apply_trigger(const std::vector<double>& image, int height, int width,
                                  const TriggerSpec& trigger);

int mapped_label(const PoisonPlan& plan, int original, int class_count);

// Triggers and relabels round(rate * N) samples chosen without replacement.
std::pair<LabeledDataset, PoisonBookkeeping> poison(const LabeledDataset& ds,
                                                    const PoisonPlan& plan);

// Stratified split specification: either a validation fraction (ceil per
// class) or an absolute per-class count (per_class = 1 is the one-shot mode).
struct SplitSpec {
    double fraction = 0.0;
    int per_class = 0;
};

struct SplitResult {
    LabeledDataset train;
    LabeledDataset val;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

SplitResult split(const LabeledDataset& ds, const SplitSpec& spec, std::uint64_t seed);

// Triggered copy of a clean test set for attack-success evaluation. For
// all2one maps, samples whose ground truth already equals the target are
// excluded. Labels of the returned set are the assigned targets; originals
// stay in the bookkeeping.
std::pair<LabeledDataset, PoisonBookkeeping> make_triggered_eval_set(
    const LabeledDataset& clean_test, const PoisonPlan& plan);

// Ground-truth labels of a poisoned set (assigned labels undone).
std::vector<int> ground_truth_labels(const LabeledDataset& poisoned,
                                     const PoisonBookkeeping& bookkeeping);

nn::Batch to_batch(const LabeledDataset& ds);
nn::Batch to_batch(const LabeledDataset& ds, std::span<const std::size_t> indices,
                   const std::vector<int>* label_override = nullptr);

std::uint64_t dataset_checksum(const LabeledDataset& ds);

}  // namespace fiplab::data
