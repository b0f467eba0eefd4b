#include "nn/ops.hpp"

#include <cfloat>
#include <cmath>
#include <string>

#include "support/errors.hpp"
#include "support/pairwise.hpp"

namespace fiplab::nn {

namespace {

// Per-sample forward cache; buffers are reused across samples.
struct SampleCache {
    std::vector<std::vector<double>> pre;  // pre-activation per layer
    std::vector<std::vector<double>> act;  // ReLU output per hidden layer
    std::vector<double> prob;              // softmax of the last pre-activation

    void resize(const MlpModel& model) {
        const std::size_t L = model.layers().size();
        pre.resize(L);
        act.resize(L);
        for (std::size_t k = 0; k < L; ++k) {
            pre[k].resize(model.layers()[k].weights.rows);
            act[k].resize(model.layers()[k].weights.rows);
        }
        prob.resize(model.class_count());
    }
};

void check_input_width(const MlpModel& model, std::size_t width) {
    if (static_cast<std::size_t>(model.input_width()) != width) {
        raise(ErrorCode::invalid_argument,
              "layer 0 expects input width " + std::to_string(model.input_width()) + ", got " +
                  std::to_string(width));
    }
}

void check_labels(const Batch& batch, int class_count) {
    if (batch.size() == 0) {
        raise(ErrorCode::invalid_argument, "empty batch");
    }
    for (int y : batch.labels) {
        if (y < 0 || y >= class_count) {
            raise(ErrorCode::invalid_argument, "label out of range: " + std::to_string(y));
        }
    }
    if (batch.labels.size() != batch.size()) {
        raise(ErrorCode::invalid_argument, "batch inputs and labels disagree on sample count");
    }
}

void forward_sample(const MlpModel& model, std::span<const double> x, SampleCache& cache) {
    const auto& layers = model.layers();
    std::span<const double> cur = x;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const Layer& layer = layers[k];
        std::vector<double>& z = cache.pre[k];
        for (std::size_t i = 0; i < layer.weights.rows; ++i) {
            const double* wrow = layer.weights.row(i);
            double acc = layer.bias[i];
            for (std::size_t j = 0; j < layer.weights.cols; ++j) {
                acc += wrow[j] * cur[j];
            }
            z[i] = acc;
        }
        for (double v : z) {
            if (!std::isfinite(v)) {
                raise(ErrorCode::numeric, "non-finite activation in layer " + std::to_string(k));
            }
        }
        if (k + 1 < layers.size()) {
            std::vector<double>& a = cache.act[k];
            for (std::size_t i = 0; i < z.size(); ++i) {
                a[i] = z[i] > 0.0 ? z[i] : 0.0;
            }
            cur = a;
        }
    }
}

// Stable softmax of the last pre-activation into cache.prob; returns logsumexp.
double softmax_from_logits(SampleCache& cache) {
    const std::vector<double>& z = cache.pre.back();
    double zmax = z[0];
    for (double v : z) {
        zmax = std::max(zmax, v);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        cache.prob[i] = std::exp(z[i] - zmax);
        sum += cache.prob[i];
    }
    for (double& p : cache.prob) {
        p /= sum;
    }
    return zmax + std::log(sum);
}

// Backpropagates dlogits through the cached sample, writing the per-sample
// parameter gradient into `out_flat` (flatten() order).
void backward_sample(const MlpModel& model, std::span<const double> x, const SampleCache& cache,
                     std::span<const double> dlogits, std::span<double> out_flat) {
    const auto& layers = model.layers();
    const std::size_t L = layers.size();

    // Block offsets mirror flatten().
    std::vector<std::size_t> w_off(L), b_off(L);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < L; ++k) {
        w_off[k] = offset;
        offset += layers[k].weights.data.size();
        b_off[k] = offset;
        offset += layers[k].bias.size();
    }

    std::vector<double> delta(dlogits.begin(), dlogits.end());
    for (std::size_t k = L; k-- > 0;) {
        const Layer& layer = layers[k];
        std::span<const double> a_prev =
            (k == 0) ? x : std::span<const double>(cache.act[k - 1]);
        double* gw = out_flat.data() + w_off[k];
        for (std::size_t i = 0; i < layer.weights.rows; ++i) {
            const double d = delta[i];
            double* grow = gw + i * layer.weights.cols;
            for (std::size_t j = 0; j < layer.weights.cols; ++j) {
                grow[j] = d * a_prev[j];
            }
            out_flat[b_off[k] + i] = d;
        }
        if (k == 0) {
            break;
        }
        std::vector<double> prev(layer.weights.cols, 0.0);
        for (std::size_t i = 0; i < layer.weights.rows; ++i) {
            const double d = delta[i];
            if (d == 0.0) {
                continue;
            }
            const double* wrow = layer.weights.row(i);
            for (std::size_t j = 0; j < layer.weights.cols; ++j) {
                prev[j] += wrow[j] * d;
            }
        }
        // ReLU mask from the previous layer's pre-activation; the slope at
        // exactly zero is defined as zero.
        const std::vector<double>& zprev = cache.pre[k - 1];
        for (std::size_t j = 0; j < prev.size(); ++j) {
            if (!(zprev[j] > 0.0)) {
                prev[j] = 0.0;
            }
        }
        delta = std::move(prev);
    }
}

double eps_for_direction(const std::vector<double>& theta, const std::vector<double>& v) {
    double theta_norm = 0.0;
    for (double t : theta) {
        theta_norm += t * t;
    }
    double v_norm = 0.0;
    for (double x : v) {
        v_norm += x * x;
    }
    return std::sqrt(DBL_EPSILON) * (1.0 + std::sqrt(theta_norm)) /
           std::max(std::sqrt(v_norm), 1.0);
}

}  // namespace

linalg::Matrix forward(const MlpModel& model, const linalg::Matrix& inputs) {
    model.validate();
    check_input_width(model, inputs.cols);
    linalg::Matrix logits(inputs.rows, model.class_count());
    SampleCache cache;
    cache.resize(model);
    for (std::size_t s = 0; s < inputs.rows; ++s) {
        forward_sample(model, {inputs.row(s), inputs.cols}, cache);
        const std::vector<double>& z = cache.pre.back();
        std::copy(z.begin(), z.end(), logits.row(s));
    }
    return logits;
}

linalg::Matrix probabilities(const MlpModel& model, const linalg::Matrix& inputs) {
    model.validate();
    check_input_width(model, inputs.cols);
    linalg::Matrix probs(inputs.rows, model.class_count());
    SampleCache cache;
    cache.resize(model);
    for (std::size_t s = 0; s < inputs.rows; ++s) {
        forward_sample(model, {inputs.row(s), inputs.cols}, cache);
        softmax_from_logits(cache);
        std::copy(cache.prob.begin(), cache.prob.end(), probs.row(s));
    }
    return probs;
}

double loss_ce(const MlpModel& model, const Batch& batch) {
    model.validate();
    check_input_width(model, batch.inputs.cols);
    check_labels(batch, model.class_count());
    SampleCache cache;
    cache.resize(model);
    support::ScalarPairwiseAccumulator acc;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        forward_sample(model, {batch.inputs.row(s), batch.inputs.cols}, cache);
        const double lse = softmax_from_logits(cache);
        acc.add(lse - cache.pre.back()[batch.labels[s]]);
    }
    return acc.finish() / static_cast<double>(batch.size());
}

ParamVector grad(const MlpModel& model, const Batch& batch, double* mean_loss) {
    model.validate();
    check_input_width(model, batch.inputs.cols);
    check_labels(batch, model.class_count());
    const std::size_t P = model.param_count();
    SampleCache cache;
    cache.resize(model);
    std::vector<double> sample_grad(P);
    std::vector<double> dlogits(model.class_count());
    support::PairwiseAccumulator acc(P);
    support::ScalarPairwiseAccumulator loss_acc;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        std::span<const double> x{batch.inputs.row(s), batch.inputs.cols};
        forward_sample(model, x, cache);
        const double lse = softmax_from_logits(cache);
        if (mean_loss) {
            loss_acc.add(lse - cache.pre.back()[batch.labels[s]]);
        }
        for (std::size_t c = 0; c < dlogits.size(); ++c) {
            dlogits[c] = cache.prob[c];
        }
        dlogits[batch.labels[s]] -= 1.0;
        backward_sample(model, x, cache, dlogits, sample_grad);
        acc.add(sample_grad);
    }
    ParamVector g;
    g.widths = model.widths();
    g.values = acc.finish();
    const double n = static_cast<double>(batch.size());
    for (double& v : g.values) {
        v /= n;
        if (!std::isfinite(v)) {
            raise(ErrorCode::numeric, "non-finite gradient");
        }
    }
    if (mean_loss) {
        *mean_loss = loss_acc.finish() / n;
    }
    return g;
}

ParamVector grad_loglik_sample(const MlpModel& model, std::span<const double> x, int y) {
    model.validate();
    check_input_width(model, x.size());
    if (y < 0 || y >= model.class_count()) {
        raise(ErrorCode::invalid_argument, "label out of range: " + std::to_string(y));
    }
    SampleCache cache;
    cache.resize(model);
    forward_sample(model, x, cache);
    softmax_from_logits(cache);
    std::vector<double> dlogits(model.class_count());
    for (std::size_t c = 0; c < dlogits.size(); ++c) {
        dlogits[c] = -cache.prob[c];
    }
    dlogits[y] += 1.0;
    ParamVector g;
    g.widths = model.widths();
    g.values.resize(model.param_count());
    backward_sample(model, x, cache, dlogits, g.values);
    return g;
}

namespace {

ParamVector hvp_central_diff(const MlpModel& model, const Batch& batch, const ParamVector& v) {
    ParamVector theta = flatten(model);
    const double eps = eps_for_direction(theta.values, v.values);

    MlpModel shifted = model;
    std::vector<double> perturbed(theta.values.size());

    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        perturbed[i] = theta.values[i] + eps * v.values[i];
    }
    set_params(shifted, perturbed);
    ParamVector g_plus = grad(shifted, batch);

    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        perturbed[i] = theta.values[i] - eps * v.values[i];
    }
    set_params(shifted, perturbed);
    ParamVector g_minus = grad(shifted, batch);

    ParamVector out;
    out.widths = theta.widths;
    out.values.resize(theta.values.size());
    const double scale = 1.0 / (2.0 * eps);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = (g_plus.values[i] - g_minus.values[i]) * scale;
        if (!std::isfinite(out.values[i])) {
            raise(ErrorCode::numeric, "non-finite Hessian-vector product");
        }
    }
    return out;
}

// Forward-over-reverse directional derivative of the gradient. The direction
// enters through the R-forward pass (Rz, Ra) and the R-backward pass
// (Rdelta); ReLU masks are treated as locally constant.
ParamVector hvp_forward_over_reverse(const MlpModel& model, const Batch& batch,
                                     const ParamVector& v) {
    const auto& layers = model.layers();
    const std::size_t L = layers.size();
    const std::size_t P = model.param_count();

    std::vector<std::size_t> w_off(L), b_off(L);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < L; ++k) {
        w_off[k] = offset;
        offset += layers[k].weights.data.size();
        b_off[k] = offset;
        offset += layers[k].bias.size();
    }

    SampleCache cache;
    cache.resize(model);
    std::vector<std::vector<double>> r_act(L);
    for (std::size_t k = 0; k < L; ++k) {
        r_act[k].resize(layers[k].weights.rows);
    }
    std::vector<double> contribution(P);
    support::PairwiseAccumulator acc(P);

    for (std::size_t s = 0; s < batch.size(); ++s) {
        std::span<const double> x{batch.inputs.row(s), batch.inputs.cols};
        forward_sample(model, x, cache);
        softmax_from_logits(cache);

        // R-forward.
        for (std::size_t k = 0; k < L; ++k) {
            const Layer& layer = layers[k];
            const double* vw = v.values.data() + w_off[k];
            const double* vb = v.values.data() + b_off[k];
            std::span<const double> a_prev =
                (k == 0) ? x : std::span<const double>(cache.act[k - 1]);
            const std::vector<double>* ra_prev = (k == 0) ? nullptr : &r_act[k - 1];
            std::vector<double>& rz = r_act[k];
            for (std::size_t i = 0; i < layer.weights.rows; ++i) {
                const double* vrow = vw + i * layer.weights.cols;
                const double* wrow = layer.weights.row(i);
                double acc_v = vb[i];
                for (std::size_t j = 0; j < layer.weights.cols; ++j) {
                    acc_v += vrow[j] * a_prev[j];
                    if (ra_prev) {
                        acc_v += wrow[j] * (*ra_prev)[j];
                    }
                }
                rz[i] = acc_v;
            }
            if (k + 1 < L) {
                const std::vector<double>& z = cache.pre[k];
                for (std::size_t i = 0; i < rz.size(); ++i) {
                    if (!(z[i] > 0.0)) {
                        rz[i] = 0.0;
                    }
                }
            }
        }

        // R of softmax-CE logit gradient: Rdelta_L = (diag(p) - p p^T) Rz_L.
        const std::vector<double>& rz_last = r_act[L - 1];
        double p_dot_rz = 0.0;
        for (std::size_t c = 0; c < cache.prob.size(); ++c) {
            p_dot_rz += cache.prob[c] * rz_last[c];
        }
        std::vector<double> delta(cache.prob.size());
        std::vector<double> r_delta(cache.prob.size());
        for (std::size_t c = 0; c < cache.prob.size(); ++c) {
            delta[c] = cache.prob[c];
            r_delta[c] = cache.prob[c] * (rz_last[c] - p_dot_rz);
        }
        delta[batch.labels[s]] -= 1.0;

        // R-backward, accumulating R-gradients into `contribution`.
        for (std::size_t k = L; k-- > 0;) {
            const Layer& layer = layers[k];
            std::span<const double> a_prev =
                (k == 0) ? x : std::span<const double>(cache.act[k - 1]);
            const std::vector<double>* ra_prev = (k == 0) ? nullptr : &r_act[k - 1];
            double* gw = contribution.data() + w_off[k];
            for (std::size_t i = 0; i < layer.weights.rows; ++i) {
                double* grow = gw + i * layer.weights.cols;
                const double rd = r_delta[i];
                const double d = delta[i];
                for (std::size_t j = 0; j < layer.weights.cols; ++j) {
                    double val = rd * a_prev[j];
                    if (ra_prev) {
                        val += d * (*ra_prev)[j];
                    }
                    grow[j] = val;
                }
                contribution[b_off[k] + i] = rd;
            }
            if (k == 0) {
                break;
            }
            const double* vw = v.values.data() + w_off[k];
            std::vector<double> prev(layer.weights.cols, 0.0);
            std::vector<double> r_prev(layer.weights.cols, 0.0);
            for (std::size_t i = 0; i < layer.weights.rows; ++i) {
                const double d = delta[i];
                const double rd = r_delta[i];
                const double* wrow = layer.weights.row(i);
                const double* vrow = vw + i * layer.weights.cols;
                for (std::size_t j = 0; j < layer.weights.cols; ++j) {
                    prev[j] += wrow[j] * d;
                    r_prev[j] += vrow[j] * d + wrow[j] * rd;
                }
            }
            const std::vector<double>& zprev = cache.pre[k - 1];
            for (std::size_t j = 0; j < prev.size(); ++j) {
                if (!(zprev[j] > 0.0)) {
                    prev[j] = 0.0;
                    r_prev[j] = 0.0;
                }
            }
            delta = std::move(prev);
            r_delta = std::move(r_prev);
        }
        acc.add(contribution);
    }

    ParamVector out;
    out.widths = model.widths();
    out.values = acc.finish();
    const double n = static_cast<double>(batch.size());
    for (double& val : out.values) {
        val /= n;
        if (!std::isfinite(val)) {
            raise(ErrorCode::numeric, "non-finite Hessian-vector product");
        }
    }
    return out;
}

}  // namespace

ParamVector hvp(const MlpModel& model, const Batch& batch, const ParamVector& v,
                HvpMethod method) {
    if (v.values.empty()) {
        raise(ErrorCode::invalid_argument, "hvp: empty direction vector");
    }
    if (v.values.size() != model.param_count()) {
        raise(ErrorCode::invalid_argument, "hvp: direction length does not match parameter count");
    }
    check_labels(batch, model.class_count());
    if (method == HvpMethod::forward_over_reverse) {
        return hvp_forward_over_reverse(model, batch, v);
    }
    return hvp_central_diff(model, batch, v);
}

ParamVector hvp_loglik_sample(const MlpModel& model, std::span<const double> x, int y,
                              const ParamVector& v) {
    if (v.values.size() != model.param_count()) {
        raise(ErrorCode::invalid_argument, "hvp: direction length does not match parameter count");
    }
    ParamVector theta = flatten(model);
    const double eps = eps_for_direction(theta.values, v.values);

    MlpModel shifted = model;
    std::vector<double> perturbed(theta.values.size());
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        perturbed[i] = theta.values[i] + eps * v.values[i];
    }
    set_params(shifted, perturbed);
    ParamVector g_plus = grad_loglik_sample(shifted, x, y);

    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        perturbed[i] = theta.values[i] - eps * v.values[i];
    }
    set_params(shifted, perturbed);
    ParamVector g_minus = grad_loglik_sample(shifted, x, y);

    ParamVector out;
    out.widths = theta.widths;
    out.values.resize(theta.values.size());
    const double scale = 1.0 / (2.0 * eps);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = (g_plus.values[i] - g_minus.values[i]) * scale;
        if (!std::isfinite(out.values[i])) {
            raise(ErrorCode::numeric, "non-finite log-likelihood Hessian-vector product");
        }
    }
    return out;
}

int predict_class(std::span<const double> logits) {
    int best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
        if (logits[c] > logits[best]) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

}  // namespace fiplab::nn
