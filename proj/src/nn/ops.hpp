#pragma once

#include <span>

#include "nn/model.hpp"

namespace fiplab::nn {

// Raw logits for a batch of inputs, [n x C].
linalg::Matrix forward(const MlpModel& model, const linalg::Matrix& inputs);
// Softmax probabilities, [n x C].
linalg::Matrix probabilities(const MlpModel& model, const linalg::Matrix& inputs);

// Mean cross-entropy over the batch.
double loss_ce(const MlpModel& model, const Batch& batch);

// Mean-batch gradient of the cross-entropy loss. Per-sample gradients are
// combined with a pairwise reduction, so a batch with every sample repeated
// twice produces a bit-identical gradient. When mean_loss is non-null it
// receives the mean cross-entropy from the same forward pass.
ParamVector grad(const MlpModel& model, const Batch& batch, double* mean_loss = nullptr);

// Gradient of log softmax probability of class y for one sample. Equals the
// exact negation of that sample's cross-entropy gradient.
ParamVector grad_loglik_sample(const MlpModel& model, std::span<const double> x, int y);

enum class HvpMethod {
    central_diff,         // (grad(theta + eps v) - grad(theta - eps v)) / (2 eps)
    forward_over_reverse  // analytic directional derivative of the gradient
};

// Hessian-vector product of the mean cross-entropy loss. The central
// difference step is eps = sqrt(machine epsilon) * (1 + |theta|) / max(|v|, 1).
ParamVector hvp(const MlpModel& model, const Batch& batch, const ParamVector& v,
                HvpMethod method = HvpMethod::central_diff);

// Hessian-vector product of one sample's log-likelihood, central differences
// with the same step policy. Used by the Fisher trace gradient.
ParamVector hvp_loglik_sample(const MlpModel& model, std::span<const double> x, int y,
                              const ParamVector& v);

// Argmax with ties broken toward the lowest class index.
int predict_class(std::span<const double> logits);

}  // namespace fiplab::nn
