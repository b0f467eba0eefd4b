#include "fip/spectral.hpp"

#include <algorithm>

#include "support/errors.hpp"

namespace fiplab::fip {

std::vector<LayerSpectralDecomposition> svd_decompose(const nn::MlpModel& model) {
    model.validate();
    std::vector<LayerSpectralDecomposition> decomposition;
    decomposition.reserve(model.layers().size());
    for (const nn::Layer& layer : model.layers()) {
        linalg::ThinSvd svd = linalg::one_sided_jacobi_svd(layer.weights);
        decomposition.push_back({std::move(svd.u), std::move(svd.sigma), std::move(svd.v)});
    }
    return decomposition;
}

linalg::Matrix reconstruct_weights(const LayerSpectralDecomposition& layer,
                                   std::span<const double> delta) {
    const std::size_t r = layer.rank();
    if (delta.size() != r) {
        raise(ErrorCode::invalid_argument, "reconstruct: shift length does not match rank");
    }
    const std::size_t m = layer.u.rows;
    const std::size_t n = layer.v.rows;
    linalg::Matrix w(m, n, 0.0);
    for (std::size_t j = 0; j < r; ++j) {
        const double shifted = layer.sigma[j] + delta[j];
        const double s = shifted > 0.0 ? shifted : 0.0;
        if (s == 0.0) {
            continue;
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double us = layer.u(i, j) * s;
            double* wrow = w.row(i);
            for (std::size_t k = 0; k < n; ++k) {
                wrow[k] += us * layer.v(k, j);
            }
        }
    }
    return w;
}

nn::MlpModel reconstruct_model(const std::vector<LayerSpectralDecomposition>& decomposition,
                               const std::vector<std::vector<double>>& deltas,
                               const std::vector<std::vector<double>>& biases,
                               const std::vector<int>& widths) {
    if (decomposition.size() != deltas.size() || decomposition.size() != biases.size()) {
        raise(ErrorCode::invalid_argument, "reconstruct_model: layer count mismatch");
    }
    nn::MlpModel model;
    model.layers().resize(decomposition.size());
    for (std::size_t k = 0; k < decomposition.size(); ++k) {
        model.layers()[k].weights = reconstruct_weights(decomposition[k], deltas[k]);
        model.layers()[k].bias = biases[k];
    }
    if (model.widths() != widths) {
        raise(ErrorCode::invalid_argument, "reconstruct_model: widths mismatch");
    }
    model.validate();
    return model;
}

std::vector<double> gate_mask(const LayerSpectralDecomposition& layer,
                              std::span<const double> delta) {
    std::vector<double> gates(layer.rank());
    for (std::size_t j = 0; j < gates.size(); ++j) {
        gates[j] = (layer.sigma[j] + delta[j]) > 0.0 ? 1.0 : 0.0;
    }
    return gates;
}

std::size_t spectral_shift_param_count(const std::vector<std::pair<int, int>>& layer_dims) {
    std::size_t count = 0;
    for (const auto& [m, n] : layer_dims) {
        count += static_cast<std::size_t>(std::min(m, n));
    }
    return count;
}

std::size_t spectral_shift_param_count(const nn::MlpModel& model) {
    std::vector<std::pair<int, int>> dims;
    for (const nn::Layer& layer : model.layers()) {
        dims.emplace_back(static_cast<int>(layer.weights.rows),
                          static_cast<int>(layer.weights.cols));
    }
    return spectral_shift_param_count(dims);
}

std::size_t full_weight_param_count(const std::vector<std::pair<int, int>>& layer_dims) {
    std::size_t count = 0;
    for (const auto& [m, n] : layer_dims) {
        count += static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
    }
    return count;
}

}  // namespace fiplab::fip
