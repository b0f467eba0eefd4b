#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nn/model.hpp"
#include "nn/ops.hpp"

namespace fiplab::fip {

// Diagonal of the empirical Fisher information matrix: entry i is the mean
// over samples of the squared log-likelihood gradient coordinate i.
struct FisherDiagonal {
    std::vector<double> values;
    std::size_t sample_count = 0;
    std::uint64_t model_checksum = 0;
    std::uint64_t data_checksum = 0;
};

FisherDiagonal fim_diag(const nn::MlpModel& model, const nn::Batch& batch);

// Mean squared norm of the per-sample log-likelihood gradients. Defined as
// the sum of fim_diag on the same data, so the identity is exact.
double trace_fim(const nn::MlpModel& model, const nn::Batch& batch);

// Gradient of trace_fim. Uses the per-sample identity
// d|g_s|^2/dtheta = 2 H_s g_s, with H_s g_s computed matrix-free by central
// differences of the per-sample log-likelihood gradient.
nn::ParamVector grad_trace_fim(const nn::MlpModel& model, const nn::Batch& batch);

struct PenaltyEval {
    double value = 0.0;
    std::vector<double> grad;  // 2 * fisher_i * (theta_i - theta_bar_i)
};

// Fisher-weighted quadratic anchor sum_i fisher_i (theta_i - theta_bar_i)^2.
PenaltyEval lr_penalty(std::span<const double> theta, std::span<const double> theta_bar,
                       const FisherDiagonal& fisher);

// Binary values (little-endian binary64) plus a JSON sidecar carrying the
// provenance checksums and sample count.
void save_fisher(const FisherDiagonal& fisher, const std::filesystem::path& bin_path,
                 const std::filesystem::path& sidecar_path);
FisherDiagonal load_fisher(const std::filesystem::path& bin_path,
                           const std::filesystem::path& sidecar_path);

}  // namespace fiplab::fip
