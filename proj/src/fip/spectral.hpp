#pragma once

#include <span>
#include <utility>
#include <vector>

#include "linalg/jacobi_svd.hpp"
#include "nn/model.hpp"

namespace fiplab::fip {

// Thin SVD of one weight matrix, U [M x r], sigma [r] descending, V [N x r],
// r = min(M, N). Biases are not factorised.
struct LayerSpectralDecomposition {
    linalg::Matrix u;
    std::vector<double> sigma;
    linalg::Matrix v;

    std::size_t rank() const { return sigma.size(); }
};

std::vector<LayerSpectralDecomposition> svd_decompose(const nn::MlpModel& model);

// U diag(relu(sigma + delta)) V^T. The ReLU gate clamps shifted singular
// values at zero; the subgradient at exactly zero is taken as zero.
linalg::Matrix reconstruct_weights(const LayerSpectralDecomposition& layer,
                                   std::span<const double> delta);

// Model with every weight matrix rebuilt from its decomposition and shift;
// biases come from `biases` (one vector per layer).
nn::MlpModel reconstruct_model(const std::vector<LayerSpectralDecomposition>& decomposition,
                               const std::vector<std::vector<double>>& deltas,
                               const std::vector<std::vector<double>>& biases,
                               const std::vector<int>& widths);

// Gate values for a layer: 1 where sigma + delta > 0, else 0.
std::vector<double> gate_mask(const LayerSpectralDecomposition& layer,
                              std::span<const double> delta);

// Number of tunable weight-matrix parameters under spectral-shift
// fine-tuning: sum over layers of min(rows, cols).
std::size_t spectral_shift_param_count(const std::vector<std::pair<int, int>>& layer_dims);
std::size_t spectral_shift_param_count(const nn::MlpModel& model);
std::size_t full_weight_param_count(const std::vector<std::pair<int, int>>& layer_dims);

}  // namespace fiplab::fip
