#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "linalg/matrix.hpp"

namespace fiplab::nn {

// One fully connected layer: weights are [out x in], row-major, one row per
// output unit.
struct Layer {
    linalg::Matrix weights;
    std::vector<double> bias;
};

// ReLU MLP with a softmax cross-entropy head. Hidden layers use ReLU; the
// last layer emits raw logits. All parameters are doubles.
class MlpModel {
  public:
    MlpModel() = default;

    // widths = {input, hidden..., classes}. Weights are initialised uniformly
    // in +-sqrt(6/(in+out)) from a xoshiro256++ stream (one stream per layer,
    // derived from `seed`); biases start at zero.
    static MlpModel init(const std::vector<int>& widths, std::uint64_t seed);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    int input_width() const;
    int class_count() const;
    std::size_t param_count() const;
    std::vector<int> widths() const;
    std::uint64_t init_seed() const { return seed_; }
    void set_init_seed(std::uint64_t s) { seed_ = s; }

    // Throws ErrorCode::invalid_argument when layer dimensions do not chain
    // or parameters are non-finite.
    void validate() const;

  private:
    std::vector<Layer> layers_;
    std::uint64_t seed_ = 0;
};

// Block descriptor of the flat parameter layout: for each layer, the weight
// block (rows x cols, row-major) followed by the bias block (rows x 1).
struct ParamBlock {
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    bool is_bias;
    std::size_t layer;
};

struct ParamVector {
    std::vector<double> values;
    std::vector<int> widths;

    std::size_t size() const { return values.size(); }
};

std::vector<ParamBlock> layout_blocks(const std::vector<int>& widths);
std::size_t param_count_for(const std::vector<int>& widths);

ParamVector flatten(const MlpModel& model);
MlpModel unflatten(const ParamVector& params);
// Replaces the parameters of an existing model (shape must match).
void set_params(MlpModel& model, std::span<const double> values);

// Batch of flattened images with integer labels.
struct Batch {
    linalg::Matrix inputs;  // [n x d]
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return inputs.rows; }
};

// Checkpoint container: magic "FIPCKPT1", little-endian u32 JSON header
// length, JSON header {version, layer_dims, class_count, seed}, then all
// parameters as little-endian binary64 in flatten() order.
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

std::uint64_t param_checksum(const MlpModel& model);

}  // namespace fiplab::nn
