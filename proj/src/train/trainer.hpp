#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "data/dataset.hpp"
#include "nn/model.hpp"

namespace fiplab::train {

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int epochs = 60;
    int batch_size = 64;
    double lr_decay_factor = 0.1;
    int lr_decay_period = 40;  // epochs between decay steps
    std::uint64_t seed = 0;
    // Smoothness penalty weight applied while training (attacker-side
    // regularizer). Its gradient is applied once every
    // kTraceGradPeriod iterations; 0 disables it.
    double adaptive_eta_f = 0.0;
};

// Shared with the purification loop.
inline constexpr int kTraceGradPeriod = 10;

struct Metrics {
    double acc = 0.0;
    double asr = 0.0;
    double lcr = 0.0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double asr = 0.0;
    bool has_eval = false;
};

struct EvalSets {
    const data::LabeledDataset* clean_test = nullptr;
    const data::LabeledDataset* triggered_test = nullptr;
    const data::PoisonBookkeeping* bookkeeping = nullptr;
};

struct TrainResult {
    nn::MlpModel model;
    std::vector<EpochStats> trace;
};

TrainResult sgd_train(const nn::MlpModel& model, const data::LabeledDataset& dataset,
                      const TrainConfig& cfg, const EvalSets& eval = {});

double evaluate_acc(const nn::MlpModel& model, const data::LabeledDataset& clean_test);
double evaluate_asr(const nn::MlpModel& model, const data::LabeledDataset& triggered_test,
                    const data::PoisonBookkeeping& bookkeeping);
double evaluate_lcr(const nn::MlpModel& model, const data::LabeledDataset& triggered_test,
                    const data::PoisonBookkeeping& bookkeeping);

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochStats>& trace);

// Seeded per-epoch batch order, shared by training and purification so that
// equal seeds give identical trajectories.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    std::uint64_t seed, int epoch);

double lr_at_epoch(double lr0, double decay_factor, int decay_period, int epoch);

// v <- mu v + g + wd theta;  theta <- theta - lr v
void sgd_step(std::span<double> theta, std::span<double> velocity, std::span<const double> grad,
              double mu, double wd, double lr);

}  // namespace fiplab::train
