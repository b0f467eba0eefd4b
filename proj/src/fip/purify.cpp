#include "fip/purify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fip/spectral.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "support/pairwise.hpp"
#include "train/trainer.hpp"

namespace fiplab::fip {

namespace {

void check_config(const FipConfig& cfg) {
    if (cfg.eta_f < 0.0 || cfg.eta_r < 0.0) {
        raise(ErrorCode::invalid_argument, "penalty weights must be >= 0");
    }
    if (cfg.trace_grad_period < 1) {
        raise(ErrorCode::invalid_argument, "trace_grad_period must be >= 1");
    }
    if (cfg.lr <= 0.0) {
        raise(ErrorCode::invalid_argument, "learning rate must be positive");
    }
    if (cfg.epochs < 0) {
        raise(ErrorCode::invalid_argument, "epochs must be >= 0");
    }
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

PurifyResult fip_purify(const nn::MlpModel& model, const data::LabeledDataset& val,
                        const FipConfig& cfg) {
    check_config(cfg);
    val.validate();
    if (val.size() == 0) {
        raise(ErrorCode::invalid_argument, "fip_purify: empty validation set");
    }

    PurifyResult result;
    const nn::Batch full_val = data::to_batch(val);

    // Frozen snapshots.
    const nn::ParamVector theta_bar = nn::flatten(model);
    result.fisher = fim_diag(model, full_val);
    result.theta_bar_checksum_start = hash::fnv1a64(theta_bar.values);
    result.fisher_checksum_start = hash::fnv1a64(result.fisher.values);

    result.model = model;
    result.val_ce_start = nn::loss_ce(result.model, full_val);
    result.tunable_params = model.param_count();

    nn::ParamVector theta = nn::flatten(result.model);
    std::vector<double> velocity(theta.size(), 0.0);
    std::vector<double> composite(theta.size());

    double trf_latest = std::numeric_limits<double>::quiet_NaN();
    long iteration = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        const double lr =
            train::lr_at_epoch(cfg.lr, cfg.lr_decay_factor, cfg.lr_decay_period, epoch);
        for (const auto& batch_indices :
             train::epoch_batches(val.size(), cfg.batch_size, cfg.seed, epoch)) {
            nn::Batch batch = data::to_batch(val, batch_indices);
            double ce = 0.0;
            nn::ParamVector g = nn::grad(result.model, batch, &ce);
            composite = g.values;

            PenaltyEval pen = lr_penalty(theta.values, theta_bar.values, result.fisher);
            if (cfg.eta_r != 0.0) {
                for (std::size_t i = 0; i < composite.size(); ++i) {
                    composite[i] += 0.5 * cfg.eta_r * pen.grad[i];
                }
            }
            if (cfg.eta_f != 0.0 && iteration % cfg.trace_grad_period == 0) {
                nn::ParamVector gt = grad_trace_fim(result.model, batch);
                for (std::size_t i = 0; i < composite.size(); ++i) {
                    composite[i] += cfg.eta_f * gt.values[i];
                }
                trf_latest = trace_fim(result.model, batch);
            }

            PurifyIteration row;
            row.iteration = iteration;
            row.epoch = epoch;
            row.ce = ce;
            row.trace_fim = trf_latest;
            row.lr_value = pen.value;
            row.objective = ce + (std::isnan(trf_latest) ? 0.0 : cfg.eta_f * trf_latest) +
                            0.5 * cfg.eta_r * pen.value;
            double dist_sq = 0.0;
            for (std::size_t i = 0; i < theta.values.size(); ++i) {
                const double d = theta.values[i] - theta_bar.values[i];
                dist_sq += d * d;
            }
            row.theta_dist = std::sqrt(dist_sq);
            result.trace.push_back(row);

            train::sgd_step(theta.values, velocity, composite, 0.0, 0.0, lr);
            nn::set_params(result.model, theta.values);
            ++iteration;
        }
        result.epoch_seconds.push_back(seconds_since(epoch_start));

        const double val_ce = nn::loss_ce(result.model, full_val);
        if (!std::isfinite(val_ce)) {
            raise(ErrorCode::numeric, "purification diverged at epoch " + std::to_string(epoch));
        }
        result.epoch_val_ce.push_back(val_ce);
    }

    result.val_ce_end = result.epoch_val_ce.empty() ? result.val_ce_start
                                                    : result.epoch_val_ce.back();
    result.theta_bar_checksum_end = hash::fnv1a64(theta_bar.values);
    result.fisher_checksum_end = hash::fnv1a64(result.fisher.values);
    return result;
}

namespace {

// Per-layer workspace for spectral-shift fine-tuning.
struct ShiftLayer {
    // frozen factors
    linalg::Matrix u;           // M x r
    std::vector<double> sigma;  // r
    linalg::Matrix v;           // N x r
    linalg::Matrix anchor_metric;  // r x r: metric of the anchor penalty in shift space
    std::vector<double> fisher_bias;
    std::vector<double> bias_bar;
    // per-iteration state derived from the current shifts
    std::vector<double> ghat;   // relu(sigma + delta)
    std::vector<double> gates;  // 1 where sigma + delta > 0
};

// anchor_metric[j][k] = sum_{m,n} fisher_w[m][n] U(m,j) U(m,k) V(n,j) V(n,k).
// With c = relu(sigma + delta) - sigma, the Fisher-weighted anchor on the
// reconstructed weights equals c^T anchor_metric c up to the one-time SVD
// reconstruction error.
linalg::Matrix build_anchor_metric(const LayerSpectralDecomposition& layer,
                                   const double* fisher_w) {
    const std::size_t m_rows = layer.u.rows;
    const std::size_t n_cols = layer.v.rows;
    const std::size_t r = layer.rank();
    linalg::Matrix metric(r, r, 0.0);
    linalg::Matrix y(r, r, 0.0);
    for (std::size_t m = 0; m < m_rows; ++m) {
        const double* f_row = fisher_w + m * n_cols;
        for (auto& val : y.data) {
            val = 0.0;
        }
        for (std::size_t n = 0; n < n_cols; ++n) {
            const double f = f_row[n];
            if (f == 0.0) {
                continue;
            }
            const double* v_row = layer.v.row(n);
            for (std::size_t j = 0; j < r; ++j) {
                const double fv = f * v_row[j];
                double* y_row = y.row(j);
                for (std::size_t k = j; k < r; ++k) {
                    y_row[k] += fv * v_row[k];
                }
            }
        }
        const double* u_row = layer.u.row(m);
        for (std::size_t j = 0; j < r; ++j) {
            const double uj = u_row[j];
            if (uj == 0.0) {
                continue;
            }
            double* m_row = metric.row(j);
            const double* y_row = y.row(j);
            for (std::size_t k = j; k < r; ++k) {
                m_row[k] += uj * u_row[k] * y_row[k];
            }
        }
    }
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            metric(j, k) = metric(k, j);
        }
    }
    return metric;
}

}  // namespace

PurifyResult ffip_purify(const nn::MlpModel& model, const data::LabeledDataset& val,
                         const FipConfig& cfg) {
    check_config(cfg);
    val.validate();
    if (val.size() == 0) {
        raise(ErrorCode::invalid_argument, "ffip_purify: empty validation set");
    }

    PurifyResult result;
    const nn::Batch full_val = data::to_batch(val);
    const std::vector<int> widths = model.widths();
    const std::size_t L = model.layers().size();

    const nn::ParamVector theta_bar = nn::flatten(model);
    result.fisher = fim_diag(model, full_val);
    result.theta_bar_checksum_start = hash::fnv1a64(theta_bar.values);
    result.fisher_checksum_start = hash::fnv1a64(result.fisher.values);

    std::vector<LayerSpectralDecomposition> decomposition = svd_decompose(model);

    // Flat tunable vector: all shift blocks, then all bias blocks.
    std::vector<std::size_t> delta_off(L), bias_off(L);
    std::size_t total = 0;
    for (std::size_t l = 0; l < L; ++l) {
        delta_off[l] = total;
        total += decomposition[l].rank();
    }
    const std::size_t shift_params = total;
    for (std::size_t l = 0; l < L; ++l) {
        bias_off[l] = total;
        total += model.layers()[l].bias.size();
    }
    result.tunable_params = shift_params;

    std::vector<double> phi(total, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        const auto& bias = model.layers()[l].bias;
        std::copy(bias.begin(), bias.end(), phi.begin() + bias_off[l]);
    }

    // Fisher blocks per layer, in flatten() order.
    std::vector<ShiftLayer> layers(L);
    {
        std::size_t offset = 0;
        for (std::size_t l = 0; l < L; ++l) {
            ShiftLayer& sl = layers[l];
            sl.u = decomposition[l].u;
            sl.sigma = decomposition[l].sigma;
            sl.v = decomposition[l].v;
            const std::size_t wsize = model.layers()[l].weights.data.size();
            sl.anchor_metric =
                build_anchor_metric(decomposition[l], result.fisher.values.data() + offset);
            offset += wsize;
            const std::size_t bsize = model.layers()[l].bias.size();
            sl.fisher_bias.assign(result.fisher.values.begin() + offset,
                                  result.fisher.values.begin() + offset + bsize);
            sl.bias_bar = model.layers()[l].bias;
            offset += bsize;
            sl.ghat.resize(sl.sigma.size());
            sl.gates.resize(sl.sigma.size());
        }
    }

    const auto refresh_gates = [&]() {
        for (std::size_t l = 0; l < L; ++l) {
            ShiftLayer& sl = layers[l];
            const double* delta = phi.data() + delta_off[l];
            for (std::size_t j = 0; j < sl.sigma.size(); ++j) {
                const double shifted = sl.sigma[j] + delta[j];
                sl.ghat[j] = shifted > 0.0 ? shifted : 0.0;
                sl.gates[j] = shifted > 0.0 ? 1.0 : 0.0;
            }
        }
    };

    const auto materialize = [&]() {
        std::vector<std::vector<double>> deltas(L), biases(L);
        for (std::size_t l = 0; l < L; ++l) {
            const double* d = phi.data() + delta_off[l];
            deltas[l].assign(d, d + decomposition[l].rank());
            const double* b = phi.data() + bias_off[l];
            biases[l].assign(b, b + layers[l].bias_bar.size());
        }
        nn::MlpModel out = reconstruct_model(decomposition, deltas, biases, widths);
        out.set_init_seed(model.init_seed());
        return out;
    };

    // Factored forward pass; returns mean CE and fills the per-sample caches
    // consumed by the backward pass below.
    struct SampleState {
        std::vector<std::vector<double>> t;    // V^T a_prev per layer
        std::vector<std::vector<double>> pre;  // z per layer
        std::vector<std::vector<double>> act;  // relu(z) per hidden layer
        std::vector<double> prob;
    };
    SampleState state;
    state.t.resize(L);
    state.pre.resize(L);
    state.act.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        state.t[l].resize(decomposition[l].rank());
        state.pre[l].resize(layers[l].u.rows);
        state.act[l].resize(layers[l].u.rows);
    }
    state.prob.resize(widths.back());

    const auto forward_factored = [&](std::span<const double> x) {
        std::span<const double> cur = x;
        for (std::size_t l = 0; l < L; ++l) {
            const ShiftLayer& sl = layers[l];
            const std::size_t r = sl.sigma.size();
            const std::size_t m_rows = sl.u.rows;
            std::vector<double>& t = state.t[l];
            for (std::size_t j = 0; j < r; ++j) {
                double acc = 0.0;
                for (std::size_t n = 0; n < sl.v.rows; ++n) {
                    acc += sl.v(n, j) * cur[n];
                }
                t[j] = acc;
            }
            const double* bias = phi.data() + bias_off[l];
            std::vector<double>& z = state.pre[l];
            for (std::size_t i = 0; i < m_rows; ++i) {
                double acc = bias[i];
                const double* u_row = sl.u.row(i);
                for (std::size_t j = 0; j < r; ++j) {
                    acc += u_row[j] * sl.ghat[j] * t[j];
                }
                z[i] = acc;
                if (!std::isfinite(acc)) {
                    raise(ErrorCode::numeric,
                          "non-finite activation in layer " + std::to_string(l));
                }
            }
            if (l + 1 < L) {
                std::vector<double>& a = state.act[l];
                for (std::size_t i = 0; i < m_rows; ++i) {
                    a[i] = z[i] > 0.0 ? z[i] : 0.0;
                }
                cur = a;
            }
        }
        // softmax + logsumexp on the last layer
        const std::vector<double>& z = state.pre[L - 1];
        double zmax = z[0];
        for (double vz : z) {
            zmax = std::max(zmax, vz);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            state.prob[c] = std::exp(z[c] - zmax);
            sum += state.prob[c];
        }
        for (double& p : state.prob) {
            p /= sum;
        }
        return zmax + std::log(sum);
    };

    // Mean CE over a batch in factored form (no gradients).
    const auto batch_ce = [&](const nn::Batch& batch) {
        support::ScalarPairwiseAccumulator acc;
        for (std::size_t s = 0; s < batch.size(); ++s) {
            const double lse = forward_factored({batch.inputs.row(s), batch.inputs.cols});
            acc.add(lse - state.pre[L - 1][batch.labels[s]]);
        }
        return acc.finish() / static_cast<double>(batch.size());
    };

    result.val_ce_start = batch_ce(full_val);
    refresh_gates();

    std::vector<double> velocity(total, 0.0);
    std::vector<double> composite(total);
    std::vector<double> sample_grad(total);
    std::vector<std::vector<double>> p_ws(L), back_ws(L);
    for (std::size_t l = 0; l < L; ++l) {
        p_ws[l].resize(decomposition[l].rank());
        back_ws[l].resize(layers[l].v.rows);
    }
    std::vector<double> delta_z_ws;

    double trf_latest = std::numeric_limits<double>::quiet_NaN();
    long iteration = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        const double lr =
            train::lr_at_epoch(cfg.lr, cfg.lr_decay_factor, cfg.lr_decay_period, epoch);
        for (const auto& batch_indices :
             train::epoch_batches(val.size(), cfg.batch_size, cfg.seed, epoch)) {
            nn::Batch batch = data::to_batch(val, batch_indices);
            refresh_gates();

            // CE gradient with respect to shifts and biases.
            support::PairwiseAccumulator acc(total);
            support::ScalarPairwiseAccumulator ce_acc;
            for (std::size_t s = 0; s < batch.size(); ++s) {
                std::span<const double> x{batch.inputs.row(s), batch.inputs.cols};
                const double lse = forward_factored(x);
                ce_acc.add(lse - state.pre[L - 1][batch.labels[s]]);

                std::fill(sample_grad.begin(), sample_grad.end(), 0.0);
                delta_z_ws.assign(state.prob.begin(), state.prob.end());
                std::vector<double>& delta_z = delta_z_ws;
                delta_z[batch.labels[s]] -= 1.0;

                for (std::size_t l = L; l-- > 0;) {
                    const ShiftLayer& sl = layers[l];
                    const std::size_t r = sl.sigma.size();
                    std::vector<double>& p = p_ws[l];
                    std::fill(p.begin(), p.end(), 0.0);
                    for (std::size_t i = 0; i < sl.u.rows; ++i) {
                        const double d = delta_z[i];
                        if (d == 0.0) {
                            continue;
                        }
                        const double* u_row = sl.u.row(i);
                        for (std::size_t j = 0; j < r; ++j) {
                            p[j] += u_row[j] * d;
                        }
                    }
                    double* dshift = sample_grad.data() + delta_off[l];
                    for (std::size_t j = 0; j < r; ++j) {
                        dshift[j] = sl.gates[j] * p[j] * state.t[l][j];
                    }
                    double* dbias = sample_grad.data() + bias_off[l];
                    for (std::size_t i = 0; i < sl.u.rows; ++i) {
                        dbias[i] = delta_z[i];
                    }
                    if (l == 0) {
                        break;
                    }
                    std::vector<double>& back = back_ws[l];
                    std::fill(back.begin(), back.end(), 0.0);
                    for (std::size_t j = 0; j < r; ++j) {
                        const double q = sl.ghat[j] * p[j];
                        if (q == 0.0) {
                            continue;
                        }
                        for (std::size_t n = 0; n < sl.v.rows; ++n) {
                            back[n] += sl.v(n, j) * q;
                        }
                    }
                    const std::vector<double>& zprev = state.pre[l - 1];
                    for (std::size_t n = 0; n < back.size(); ++n) {
                        if (!(zprev[n] > 0.0)) {
                            back[n] = 0.0;
                        }
                    }
                    delta_z_ws = back;
                }
                acc.add(sample_grad);
            }
            composite = acc.finish();
            const double inv_n = static_cast<double>(batch.size());
            for (double& v : composite) {
                v /= inv_n;
            }
            const double ce = ce_acc.finish() / inv_n;

            // Anchor penalty in shift space plus the direct bias part.
            double pen_value = 0.0;
            double dist_sq = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
                const ShiftLayer& sl = layers[l];
                const std::size_t r = sl.sigma.size();
                std::vector<double> c(r);
                for (std::size_t j = 0; j < r; ++j) {
                    c[j] = sl.ghat[j] - sl.sigma[j];
                    dist_sq += c[j] * c[j];
                }
                std::vector<double> mc(r, 0.0);
                for (std::size_t j = 0; j < r; ++j) {
                    const double* m_row = sl.anchor_metric.row(j);
                    double acc_m = 0.0;
                    for (std::size_t k = 0; k < r; ++k) {
                        acc_m += m_row[k] * c[k];
                    }
                    mc[j] = acc_m;
                    pen_value += c[j] * acc_m;
                }
                const double* bias = phi.data() + bias_off[l];
                double* dshift = composite.data() + delta_off[l];
                double* dbias = composite.data() + bias_off[l];
                for (std::size_t j = 0; j < r && cfg.eta_r != 0.0; ++j) {
                    dshift[j] += 0.5 * cfg.eta_r * 2.0 * sl.gates[j] * mc[j];
                }
                for (std::size_t i = 0; i < sl.fisher_bias.size(); ++i) {
                    const double d = bias[i] - sl.bias_bar[i];
                    pen_value += sl.fisher_bias[i] * d * d;
                    dist_sq += d * d;
                    if (cfg.eta_r != 0.0) {
                        dbias[i] += 0.5 * cfg.eta_r * 2.0 * sl.fisher_bias[i] * d;
                    }
                }
            }

            if (cfg.eta_f != 0.0 && iteration % cfg.trace_grad_period == 0) {
                nn::MlpModel snapshot = materialize();
                nn::ParamVector gt = grad_trace_fim(snapshot, batch);
                trf_latest = trace_fim(snapshot, batch);
                // Pull the weight-block gradient back to the shifts.
                std::size_t offset = 0;
                for (std::size_t l = 0; l < L; ++l) {
                    const ShiftLayer& sl = layers[l];
                    const std::size_t r = sl.sigma.size();
                    const std::size_t n_cols = sl.v.rows;
                    const double* gw = gt.values.data() + offset;
                    double* dshift = composite.data() + delta_off[l];
                    for (std::size_t j = 0; j < r; ++j) {
                        if (sl.gates[j] == 0.0) {
                            continue;
                        }
                        double acc_j = 0.0;
                        for (std::size_t i = 0; i < sl.u.rows; ++i) {
                            const double* g_row = gw + i * n_cols;
                            double gv = 0.0;
                            for (std::size_t n = 0; n < n_cols; ++n) {
                                gv += g_row[n] * sl.v(n, j);
                            }
                            acc_j += sl.u(i, j) * gv;
                        }
                        dshift[j] += cfg.eta_f * acc_j;
                    }
                    offset += sl.u.rows * n_cols;
                    double* dbias = composite.data() + bias_off[l];
                    for (std::size_t i = 0; i < sl.fisher_bias.size(); ++i) {
                        dbias[i] += cfg.eta_f * gt.values[offset + i];
                    }
                    offset += sl.fisher_bias.size();
                }
            }

            PurifyIteration row;
            row.iteration = iteration;
            row.epoch = epoch;
            row.ce = ce;
            row.trace_fim = trf_latest;
            row.lr_value = pen_value;
            row.objective = ce + (std::isnan(trf_latest) ? 0.0 : cfg.eta_f * trf_latest) +
                            0.5 * cfg.eta_r * pen_value;
            row.theta_dist = std::sqrt(dist_sq);
            result.trace.push_back(row);

            train::sgd_step(phi, velocity, composite, 0.0, 0.0, lr);
            ++iteration;
        }
        result.epoch_seconds.push_back(seconds_since(epoch_start));

        refresh_gates();
        const double val_ce = batch_ce(full_val);
        if (!std::isfinite(val_ce)) {
            raise(ErrorCode::numeric,
                  "spectral-shift purification diverged at epoch " + std::to_string(epoch));
        }
        result.epoch_val_ce.push_back(val_ce);
    }

    refresh_gates();
    for (std::size_t l = 0; l < L; ++l) {
        for (double g : layers[l].gates) {
            if (g == 0.0) {
                ++result.clamped_gates;
            }
        }
    }
    result.model = materialize();
    result.val_ce_end = result.epoch_val_ce.empty() ? result.val_ce_start
                                                    : result.epoch_val_ce.back();
    result.theta_bar_checksum_end = hash::fnv1a64(theta_bar.values);
    result.fisher_checksum_end = hash::fnv1a64(result.fisher.values);
    return result;
}

void write_purify_trace_csv(const std::filesystem::path& path,
                            const std::vector<PurifyIteration>& trace) {
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::io, "cannot open purify trace for writing: " + path.string());
    }
    out << "iteration,epoch,ce,trace_fim,lr_penalty,objective,theta_dist\n";
    char line[256];
    for (const PurifyIteration& row : trace) {
        if (std::isnan(row.trace_fim)) {
            std::snprintf(line, sizeof(line), "%ld,%d,%.17g,,%.17g,%.17g,%.17g\n", row.iteration,
                          row.epoch, row.ce, row.lr_value, row.objective, row.theta_dist);
        } else {
            std::snprintf(line, sizeof(line), "%ld,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          row.iteration, row.epoch, row.ce, row.trace_fim, row.lr_value,
                          row.objective, row.theta_dist);
        }
        out << line;
    }
}

}  // namespace fiplab::fip
