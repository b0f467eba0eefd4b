#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "linalg/matrix.hpp"
#include "nn/model.hpp"
#include "nn/ops.hpp"

namespace fiplab::smoothness {

// Matrix-free symmetric linear operator.
using LinOp = std::function<std::vector<double>(const std::vector<double>&)>;

// Wraps the mean-loss Hessian of (model, batch) as a LinOp.
LinOp hvp_operator(const nn::MlpModel& model, const nn::Batch& batch,
                   nn::HvpMethod method = nn::HvpMethod::central_diff);

struct PowerResult {
    double lambda_abs = 0.0;   // |Rayleigh quotient| at the final vector
    double rayleigh = 0.0;     // signed Rayleigh quotient
    std::vector<double> vector;
    double residual = 0.0;     // |Hv - rho v| / max(|rho|, 1)
    int iters = 0;
    bool converged = false;
};

// Power iteration from a seeded Rademacher start vector. Non-convergence is
// reported through `converged`/`residual`, not an exception.
PowerResult power_iteration(const LinOp& op, std::size_t dim, int max_iters, double tol,
                            std::uint64_t seed);

struct TraceEstimate {
    double trace = 0.0;
    double stderr_ = 0.0;  // sample std / sqrt(probes); 0 when probes < 2
    int probes = 0;
};

// Hutchinson estimator with Rademacher probes, one derived seed per probe.
TraceEstimate hutchinson_trace(const LinOp& op, std::size_t dim, int probes, std::uint64_t seed);

struct DensityPoint {
    double node = 0.0;
    double weight = 0.0;
};

struct SpectralDensity {
    std::vector<DensityPoint> points;  // weights sum to 1 across all points
    int steps = 0;
    int probes = 0;
    int truncated_probes = 0;  // probes cut short by Lanczos breakdown
    std::uint64_t seed = 0;
};

// Stochastic Lanczos quadrature with full reorthogonalisation.
SpectralDensity spectral_density(const LinOp& op, std::size_t dim, int steps, int probes,
                                 std::uint64_t seed);

struct DenseHessian {
    linalg::Matrix matrix;          // symmetrized
    double symmetry_defect = 0.0;   // |A - A^T|_F / |A|_F before symmetrizing
};

// Column-by-column Hessian via hvp on basis vectors; guarded to <= 500
// parameters.
DenseHessian dense_hessian_oracle(const nn::MlpModel& model, const nn::Batch& batch);

struct SmoothnessOptions {
    int power_iters = 200;
    double power_tol = 1e-6;
    std::uint64_t power_seed = 1;
    int probes = 100;
    std::uint64_t probe_seed = 2;
};

struct SmoothnessReport {
    double lambda_max = 0.0;         // max-|eigenvalue| estimate
    double lambda_max_signed = 0.0;  // Rayleigh quotient at the final vector
    double trace = 0.0;
    double trace_stderr = 0.0;
    int probes = 0;
    int power_iters = 0;
    double residual = 0.0;
    bool converged = false;
    std::uint64_t power_seed = 0;
    std::uint64_t probe_seed = 0;
    std::string label_mode = "ground-truth";
};

SmoothnessReport analyze(const nn::MlpModel& model, const nn::Batch& batch,
                         const SmoothnessOptions& options);
SmoothnessReport analyze_op(const LinOp& op, std::size_t dim, const SmoothnessOptions& options);

enum class Verdict { equal, first_sharper, second_sharper, mixed };

struct Comparison {
    SmoothnessReport first;
    SmoothnessReport second;
    double lambda_ratio = 0.0;  // second / first
    double trace_ratio = 0.0;
    Verdict verdict = Verdict::equal;
};

// SHARPER(second) iff lambda_max and trace are both larger for the second
// model; ratios within equal_tol of 1 count as EQUAL.
Comparison compare(const nn::MlpModel& first, const nn::MlpModel& second, const nn::Batch& batch,
                   const SmoothnessOptions& options, double equal_tol = 0.02);

const char* verdict_name(Verdict v);

nlohmann::json report_to_json(const SmoothnessReport& report);
SmoothnessReport report_from_json(const nlohmann::json& j);
void write_density_csv(const std::filesystem::path& path, const SpectralDensity& density);

}  // namespace fiplab::smoothness
