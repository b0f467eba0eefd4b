#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "data/dataset.hpp"
#include "fip/fisher.hpp"
#include "nn/model.hpp"

namespace fiplab::fip {

struct FipConfig {
    double eta_f = 0.001;       // Fisher-trace penalty weight
    double eta_r = 5.0;         // clean-anchor penalty weight
    double lr = 0.01;
    int epochs = 50;
    double lr_decay_factor = 0.1;
    int lr_decay_period = 40;
    int trace_grad_period = 10;  // iterations between Fisher-trace gradient steps
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct PurifyIteration {
    long iteration = 0;
    int epoch = 0;
    double ce = 0.0;
    double trace_fim = 0.0;  // latest computed estimate; NaN until available
    double lr_value = 0.0;   // anchor penalty value
    double objective = 0.0;
    double theta_dist = 0.0;  // |theta - theta_bar|
};

struct PurifyResult {
    nn::MlpModel model;
    std::vector<PurifyIteration> trace;
    std::vector<double> epoch_seconds;
    std::vector<double> epoch_val_ce;
    double val_ce_start = 0.0;
    double val_ce_end = 0.0;
    std::uint64_t theta_bar_checksum_start = 0;
    std::uint64_t theta_bar_checksum_end = 0;
    std::uint64_t fisher_checksum_start = 0;
    std::uint64_t fisher_checksum_end = 0;
    FisherDiagonal fisher;
    std::size_t tunable_params = 0;   // parameters the optimizer touches
    std::size_t clamped_gates = 0;    // spectral-shift runs only
};

// Fine-tunes all parameters on the clean validation set under
//   CE + eta_f * Tr(F) + (eta_r / 2) * L_r.
// theta_bar and the Fisher diagonal are snapshotted once up front and stay
// frozen. The Tr(F) gradient is recomputed and applied only on iterations
// where iteration % trace_grad_period == 0; other iterations apply the CE
// and anchor gradients alone. With eta_f = eta_r = 0 this is vanilla
// fine-tuning, trajectory-identical to sgd_train with zero momentum and
// weight decay under equal seeds.
PurifyResult fip_purify(const nn::MlpModel& model, const data::LabeledDataset& val,
                        const FipConfig& cfg);

// Spectral-shift variant: weight matrices are factorised once, the singular
// vectors stay frozen, and only the per-layer singular-value shifts (plus
// biases) are fine-tuned. Weights are evaluated in factored form
// U diag(relu(sigma + delta)) V^T throughout; the penalty terms act on the
// reconstructed parameters and are pulled back through the same gate.
PurifyResult ffip_purify(const nn::MlpModel& model, const data::LabeledDataset& val,
                         const FipConfig& cfg);

void write_purify_trace_csv(const std::filesystem::path& path,
                            const std::vector<PurifyIteration>& trace);

}  // namespace fiplab::fip
