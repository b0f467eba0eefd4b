#include "fip/fisher.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "support/bytes.hpp"
#include "support/errors.hpp"
#include "support/hash.hpp"
#include "support/pairwise.hpp"

namespace fiplab::fip {

using nlohmann::json;

namespace {

std::uint64_t batch_checksum(const nn::Batch& batch) {
    std::uint64_t h = hash::fnv1a64(batch.inputs.data.data(),
                                    batch.inputs.data.size() * sizeof(double));
    const std::uint64_t hl =
        hash::fnv1a64(batch.labels.data(), batch.labels.size() * sizeof(int));
    return h ^ (hl * 0x9e3779b97f4a7c15ULL);
}

}  // namespace

FisherDiagonal fim_diag(const nn::MlpModel& model, const nn::Batch& batch) {
    if (batch.size() == 0) {
        raise(ErrorCode::invalid_argument, "fim_diag: empty batch");
    }
    const std::size_t P = model.param_count();
    support::PairwiseAccumulator acc(P);
    std::vector<double> squared(P);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        nn::ParamVector g = nn::grad_loglik_sample(
            model, {batch.inputs.row(s), batch.inputs.cols}, batch.labels[s]);
        for (std::size_t i = 0; i < P; ++i) {
            squared[i] = g.values[i] * g.values[i];
        }
        acc.add(squared);
    }
    FisherDiagonal fisher;
    fisher.values = acc.finish();
    const double n = static_cast<double>(batch.size());
    for (double& v : fisher.values) {
        v /= n;
    }
    fisher.sample_count = batch.size();
    fisher.model_checksum = nn::param_checksum(model);
    fisher.data_checksum = batch_checksum(batch);
    return fisher;
}

double trace_fim(const nn::MlpModel& model, const nn::Batch& batch) {
    const FisherDiagonal fisher = fim_diag(model, batch);
    double sum = 0.0;
    for (double v : fisher.values) {
        sum += v;
    }
    return sum;
}

nn::ParamVector grad_trace_fim(const nn::MlpModel& model, const nn::Batch& batch) {
    if (batch.size() == 0) {
        raise(ErrorCode::invalid_argument, "grad_trace_fim: empty batch");
    }
    const std::size_t P = model.param_count();
    support::PairwiseAccumulator acc(P);
    std::vector<double> contribution(P);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        std::span<const double> x{batch.inputs.row(s), batch.inputs.cols};
        const int y = batch.labels[s];
        nn::ParamVector g = nn::grad_loglik_sample(model, x, y);
        nn::ParamVector hg = nn::hvp_loglik_sample(model, x, y, g);
        for (std::size_t i = 0; i < P; ++i) {
            contribution[i] = 2.0 * hg.values[i];
        }
        acc.add(contribution);
    }
    nn::ParamVector out;
    out.widths = model.widths();
    out.values = acc.finish();
    const double n = static_cast<double>(batch.size());
    for (double& v : out.values) {
        v /= n;
        if (!std::isfinite(v)) {
            raise(ErrorCode::numeric, "non-finite Fisher trace gradient");
        }
    }
    return out;
}

PenaltyEval lr_penalty(std::span<const double> theta, std::span<const double> theta_bar,
                       const FisherDiagonal& fisher) {
    if (theta.size() != theta_bar.size() || theta.size() != fisher.values.size()) {
        raise(ErrorCode::invalid_argument, "lr_penalty: length mismatch");
    }
    PenaltyEval eval;
    eval.grad.resize(theta.size());
    support::ScalarPairwiseAccumulator acc;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double d = theta[i] - theta_bar[i];
        acc.add(fisher.values[i] * d * d);
        eval.grad[i] = 2.0 * fisher.values[i] * d;
    }
    eval.value = acc.finish();
    return eval;
}

void save_fisher(const FisherDiagonal& fisher, const std::filesystem::path& bin_path,
                 const std::filesystem::path& sidecar_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) {
        raise(ErrorCode::io, "cannot open Fisher file for writing: " + bin_path.string());
    }
    for (double v : fisher.values) {
        bytes::write_f64_le(bin, v);
    }
    json sidecar{
        {"schema_version", 1},
        {"param_count", fisher.values.size()},
        {"sample_count", fisher.sample_count},
        {"model_checksum", hash::to_hex(fisher.model_checksum)},
        {"data_checksum", hash::to_hex(fisher.data_checksum)},
    };
    std::ofstream side(sidecar_path);
    if (!side) {
        raise(ErrorCode::io, "cannot open Fisher sidecar for writing: " + sidecar_path.string());
    }
    side << sidecar.dump(2) << '\n';
}

FisherDiagonal load_fisher(const std::filesystem::path& bin_path,
                           const std::filesystem::path& sidecar_path) {
    std::ifstream side(sidecar_path);
    if (!side) {
        raise(ErrorCode::io, "cannot open Fisher sidecar: " + sidecar_path.string());
    }
    json sidecar = json::parse(side, nullptr, false);
    if (sidecar.is_discarded()) {
        raise(ErrorCode::format, "Fisher sidecar is not valid JSON: " + sidecar_path.string());
    }
    const auto count = sidecar.at("param_count").get<std::size_t>();

    FisherDiagonal fisher;
    fisher.sample_count = sidecar.at("sample_count").get<std::size_t>();
    fisher.model_checksum =
        std::stoull(sidecar.at("model_checksum").get<std::string>(), nullptr, 16);
    fisher.data_checksum =
        std::stoull(sidecar.at("data_checksum").get<std::string>(), nullptr, 16);
    fisher.values.resize(count);
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) {
        raise(ErrorCode::io, "cannot open Fisher file: " + bin_path.string());
    }
    for (double& v : fisher.values) {
        if (!bytes::read_f64_le(bin, v)) {
            raise(ErrorCode::format, "truncated Fisher file: " + bin_path.string());
        }
    }
    return fisher;
}

}  // namespace fiplab::fip
