#include "train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fip/fisher.hpp"
#include "nn/ops.hpp"
#include "support/errors.hpp"
#include "support/rng.hpp"

namespace fiplab::train {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, int epoch) {
    if (batch_size < 1) {
        raise(ErrorCode::invalid_argument, "batch size must be >= 1");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Xoshiro256pp gen(rng::derive_seed(seed, 0x0bace5, static_cast<std::uint64_t>(epoch)));
    gen.shuffle(order);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

double lr_at_epoch(double lr0, double decay_factor, int decay_period, int epoch) {
    if (decay_period <= 0) {
        return lr0;
    }
    const int steps = epoch / decay_period;
    return lr0 * std::pow(decay_factor, steps);
}

void sgd_step(std::span<double> theta, std::span<double> velocity, std::span<const double> grad,
              double mu, double wd, double lr) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        velocity[i] = mu * velocity[i] + grad[i] + wd * theta[i];
        theta[i] -= lr * velocity[i];
    }
}

TrainResult sgd_train(const nn::MlpModel& model, const data::LabeledDataset& dataset,
                      const TrainConfig& cfg, const EvalSets& eval) {
    dataset.validate();
    if (dataset.size() == 0) {
        raise(ErrorCode::invalid_argument, "training dataset is empty");
    }
    if (cfg.lr <= 0.0) {
        raise(ErrorCode::invalid_argument, "learning rate must be positive");
    }
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) {
        raise(ErrorCode::invalid_argument, "momentum must lie in [0,1)");
    }
    if (cfg.epochs < 0) {
        raise(ErrorCode::invalid_argument, "epochs must be >= 0");
    }

    TrainResult result;
    result.model = model;

    nn::ParamVector theta = nn::flatten(result.model);
    std::vector<double> velocity(theta.size(), 0.0);

    std::vector<std::size_t> all_indices(dataset.size());
    std::iota(all_indices.begin(), all_indices.end(), 0);

    long iteration = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg.lr, cfg.lr_decay_factor, cfg.lr_decay_period, epoch);
        try {
            for (const auto& batch_indices :
                 epoch_batches(dataset.size(), cfg.batch_size, cfg.seed, epoch)) {
                nn::Batch batch = data::to_batch(dataset, batch_indices);
                nn::ParamVector g = nn::grad(result.model, batch);
                if (cfg.adaptive_eta_f != 0.0 && iteration % kTraceGradPeriod == 0) {
                    nn::ParamVector gt = fip::grad_trace_fim(result.model, batch);
                    for (std::size_t i = 0; i < g.values.size(); ++i) {
                        g.values[i] += cfg.adaptive_eta_f * gt.values[i];
                    }
                }
                sgd_step(theta.values, velocity, g.values, cfg.momentum, cfg.weight_decay, lr);
                nn::set_params(result.model, theta.values);
                ++iteration;
            }

            nn::Batch full = data::to_batch(dataset, all_indices);
            EpochStats stats;
            stats.epoch = epoch;
            stats.train_loss = nn::loss_ce(result.model, full);
            if (!std::isfinite(stats.train_loss)) {
                raise(ErrorCode::numeric, "loss is not finite");
            }
            stats.train_acc = evaluate_acc(result.model, dataset);
            if (eval.clean_test) {
                stats.test_acc = evaluate_acc(result.model, *eval.clean_test);
                stats.has_eval = true;
            }
            if (eval.triggered_test && eval.bookkeeping) {
                stats.asr = evaluate_asr(result.model, *eval.triggered_test, *eval.bookkeeping);
            }
            result.trace.push_back(stats);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::numeric) {
                raise(ErrorCode::numeric, "training diverged at epoch " +
                                              std::to_string(epoch) + ": " + e.what());
            }
            throw;
        }
    }
    return result;
}

double evaluate_acc(const nn::MlpModel& model, const data::LabeledDataset& clean_test) {
    if (clean_test.size() == 0) {
        raise(ErrorCode::invalid_argument, "evaluation set is empty");
    }
    nn::Batch batch = data::to_batch(clean_test);
    linalg::Matrix logits = nn::forward(model, batch.inputs);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
        if (nn::predict_class({logits.row(s), logits.cols}) == batch.labels[s]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double evaluate_asr(const nn::MlpModel& model, const data::LabeledDataset& triggered_test,
                    const data::PoisonBookkeeping& bookkeeping) {
    if (bookkeeping.records.empty()) {
        raise(ErrorCode::invalid_argument, "no triggered samples to evaluate");
    }
    nn::Batch batch = data::to_batch(triggered_test);
    linalg::Matrix logits = nn::forward(model, batch.inputs);
    std::size_t hits = 0;
    for (const data::PoisonRecord& rec : bookkeeping.records) {
        if (nn::predict_class({logits.row(rec.index), logits.cols}) == rec.assigned_label) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(bookkeeping.records.size());
}

double evaluate_lcr(const nn::MlpModel& model, const data::LabeledDataset& triggered_test,
                    const data::PoisonBookkeeping& bookkeeping) {
    if (bookkeeping.records.empty()) {
        raise(ErrorCode::invalid_argument, "no triggered samples to evaluate");
    }
    nn::Batch batch = data::to_batch(triggered_test);
    linalg::Matrix logits = nn::forward(model, batch.inputs);
    std::size_t corrected = 0;
    for (const data::PoisonRecord& rec : bookkeeping.records) {
        if (nn::predict_class({logits.row(rec.index), logits.cols}) == rec.original_label) {
            ++corrected;
        }
    }
    return static_cast<double>(corrected) / static_cast<double>(bookkeeping.records.size());
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochStats>& trace) {
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::io, "cannot open trace file for writing: " + path.string());
    }
    out << "epoch,train_loss,train_acc,test_acc,asr\n";
    char line[256];
    for (const EpochStats& row : trace) {
        if (row.has_eval) {
            std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", row.epoch,
                          row.train_loss, row.train_acc, row.test_acc, row.asr);
        } else {
            std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,,\n", row.epoch, row.train_loss,
                          row.train_acc);
        }
        out << line;
    }
}

}  // namespace fiplab::train
