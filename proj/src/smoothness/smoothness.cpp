#include "smoothness/smoothness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "linalg/jacobi_eigen.hpp"
#include "support/errors.hpp"
#include "support/rng.hpp"

namespace fiplab::smoothness {

LinOp hvp_operator(const nn::MlpModel& model, const nn::Batch& batch, nn::HvpMethod method) {
    std::vector<int> widths = model.widths();
    return [&model, &batch, widths, method](const std::vector<double>& v) {
        nn::ParamVector direction;
        direction.widths = widths;
        direction.values = v;
        return nn::hvp(model, batch, direction, method).values;
    };
}

namespace {

std::vector<double> rademacher_vector(std::size_t dim, std::uint64_t seed) {
    rng::Xoshiro256pp gen(seed);
    std::vector<double> z(dim);
    for (double& v : z) {
        v = gen.rademacher();
    }
    return z;
}

void normalize(std::vector<double>& v) {
    const double n = linalg::norm2(v);
    if (n > 0.0) {
        for (double& x : v) {
            x /= n;
        }
    }
}

}  // namespace

PowerResult power_iteration(const LinOp& op, std::size_t dim, int max_iters, double tol,
                            std::uint64_t seed) {
    if (dim == 0) {
        raise(ErrorCode::invalid_argument, "power iteration on an empty operator");
    }
    PowerResult result;
    std::vector<double> v = rademacher_vector(dim, seed);
    normalize(v);

    for (int it = 0; it < max_iters; ++it) {
        std::vector<double> w = op(v);
        const double rho = linalg::dot(v, w);
        double res = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double r = w[i] - rho * v[i];
            res += r * r;
        }
        res = std::sqrt(res) / std::max(std::fabs(rho), 1.0);

        result.rayleigh = rho;
        result.lambda_abs = std::fabs(rho);
        result.residual = res;
        result.iters = it + 1;

        if (res <= tol) {
            result.converged = true;
            result.vector = v;
            return result;
        }
        const double wn = linalg::norm2(w);
        if (wn == 0.0) {
            // Operator annihilates the iterate: zero eigenvalue, exactly.
            result.lambda_abs = 0.0;
            result.rayleigh = 0.0;
            result.residual = 0.0;
            result.converged = true;
            result.vector = v;
            return result;
        }
        for (std::size_t i = 0; i < dim; ++i) {
            v[i] = w[i] / wn;
        }
    }
    result.vector = v;
    result.converged = result.residual <= tol;
    return result;
}

TraceEstimate hutchinson_trace(const LinOp& op, std::size_t dim, int probes, std::uint64_t seed) {
    if (probes < 1) {
        raise(ErrorCode::invalid_argument, "hutchinson_trace: probes must be >= 1");
    }
    std::vector<double> samples;
    samples.reserve(probes);
    for (int p = 0; p < probes; ++p) {
        std::vector<double> z =
            rademacher_vector(dim, rng::derive_seed(seed, 0x7ace, static_cast<std::uint64_t>(p)));
        std::vector<double> hz = op(z);
        samples.push_back(linalg::dot(z, hz));
    }
    TraceEstimate est;
    est.probes = probes;
    double sum = 0.0;
    for (double s : samples) {
        sum += s;
    }
    est.trace = sum / static_cast<double>(probes);
    if (probes >= 2) {
        double sq = 0.0;
        for (double s : samples) {
            const double d = s - est.trace;
            sq += d * d;
        }
        est.stderr_ = std::sqrt(sq / static_cast<double>(probes - 1)) /
                      std::sqrt(static_cast<double>(probes));
    }
    return est;
}

SpectralDensity spectral_density(const LinOp& op, std::size_t dim, int steps, int probes,
                                 std::uint64_t seed) {
    if (steps < 2) {
        raise(ErrorCode::invalid_argument, "spectral_density: need at least 2 Lanczos steps");
    }
    if (probes < 1) {
        raise(ErrorCode::invalid_argument, "spectral_density: probes must be >= 1");
    }
    const int m = static_cast<int>(std::min<std::size_t>(steps, dim));

    SpectralDensity density;
    density.steps = m;
    density.probes = probes;
    density.seed = seed;

    for (int p = 0; p < probes; ++p) {
        std::vector<std::vector<double>> q;  // Lanczos basis
        std::vector<double> alpha, beta;

        std::vector<double> q1 = rademacher_vector(
            dim, rng::derive_seed(seed, 0x1a2c05, static_cast<std::uint64_t>(p)));
        normalize(q1);
        q.push_back(q1);

        bool breakdown = false;
        for (int k = 0; k < m; ++k) {
            std::vector<double> w = op(q[k]);
            if (k > 0) {
                linalg::axpy(-beta[k - 1], q[k - 1], w);
            }
            const double a = linalg::dot(q[k], w);
            alpha.push_back(a);
            linalg::axpy(-a, q[k], w);
            // Full reorthogonalisation, applied twice.
            for (int pass = 0; pass < 2; ++pass) {
                for (const auto& qi : q) {
                    linalg::axpy(-linalg::dot(qi, w), qi, w);
                }
            }
            if (k + 1 == m) {
                break;
            }
            const double b = linalg::norm2(w);
            if (b <= 1e-12 * std::max(1.0, std::fabs(a))) {
                breakdown = true;
                break;
            }
            beta.push_back(b);
            for (double& x : w) {
                x /= b;
            }
            q.push_back(std::move(w));
        }
        if (breakdown) {
            ++density.truncated_probes;
        }

        const auto k = alpha.size();
        linalg::Matrix t(k, k, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            t(i, i) = alpha[i];
            if (i + 1 < k) {
                t(i, i + 1) = beta[i];
                t(i + 1, i) = beta[i];
            }
        }
        linalg::EigenSym eig = linalg::jacobi_eigen_sym(std::move(t));
        for (std::size_t i = 0; i < k; ++i) {
            const double w0 = eig.vectors(0, i);
            density.points.push_back({eig.values[i], w0 * w0 / static_cast<double>(probes)});
        }
    }
    return density;
}

DenseHessian dense_hessian_oracle(const nn::MlpModel& model, const nn::Batch& batch) {
    const std::size_t P = model.param_count();
    if (P > 500) {
        raise(ErrorCode::invalid_argument,
              "dense_hessian_oracle guarded to <= 500 parameters, got " + std::to_string(P));
    }
    linalg::Matrix h(P, P, 0.0);
    nn::ParamVector e;
    e.widths = model.widths();
    e.values.assign(P, 0.0);
    for (std::size_t j = 0; j < P; ++j) {
        e.values[j] = 1.0;
        nn::ParamVector column = nn::hvp(model, batch, e);
        for (std::size_t i = 0; i < P; ++i) {
            h(i, j) = column.values[i];
        }
        e.values[j] = 0.0;
    }

    double diff_sq = 0.0;
    double total_sq = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < P; ++j) {
            const double d = h(i, j) - h(j, i);
            diff_sq += d * d;
            total_sq += h(i, j) * h(i, j);
        }
    }
    DenseHessian out;
    out.symmetry_defect = total_sq > 0.0 ? std::sqrt(diff_sq) / std::sqrt(total_sq) : 0.0;
    out.matrix = linalg::Matrix(P, P);
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < P; ++j) {
            out.matrix(i, j) = 0.5 * (h(i, j) + h(j, i));
        }
    }
    return out;
}

SmoothnessReport analyze_op(const LinOp& op, std::size_t dim, const SmoothnessOptions& options) {
    SmoothnessReport report;
    PowerResult power =
        power_iteration(op, dim, options.power_iters, options.power_tol, options.power_seed);
    report.lambda_max = power.lambda_abs;
    report.lambda_max_signed = power.rayleigh;
    report.residual = power.residual;
    report.power_iters = power.iters;
    report.converged = power.converged;
    report.power_seed = options.power_seed;

    TraceEstimate trace = hutchinson_trace(op, dim, options.probes, options.probe_seed);
    report.trace = trace.trace;
    report.trace_stderr = trace.stderr_;
    report.probes = trace.probes;
    report.probe_seed = options.probe_seed;
    return report;
}

SmoothnessReport analyze(const nn::MlpModel& model, const nn::Batch& batch,
                         const SmoothnessOptions& options) {
    LinOp op = hvp_operator(model, batch);
    return analyze_op(op, model.param_count(), options);
}

Comparison compare(const nn::MlpModel& first, const nn::MlpModel& second, const nn::Batch& batch,
                   const SmoothnessOptions& options, double equal_tol) {
    if (first.widths() != second.widths()) {
        raise(ErrorCode::invalid_argument, "compare: models have different architectures");
    }
    Comparison cmp;
    cmp.first = analyze(first, batch, options);
    cmp.second = analyze(second, batch, options);

    const auto ratio = [](double num, double den) {
        if (den == 0.0) {
            return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
        }
        return num / den;
    };
    cmp.lambda_ratio = ratio(cmp.second.lambda_max, cmp.first.lambda_max);
    cmp.trace_ratio = ratio(cmp.second.trace, cmp.first.trace);

    const bool lambda_equal = std::fabs(cmp.lambda_ratio - 1.0) <= equal_tol;
    const bool trace_equal = std::fabs(cmp.trace_ratio - 1.0) <= equal_tol;
    if (lambda_equal && trace_equal) {
        cmp.verdict = Verdict::equal;
    } else if (cmp.second.lambda_max > cmp.first.lambda_max &&
               cmp.second.trace > cmp.first.trace) {
        cmp.verdict = Verdict::second_sharper;
    } else if (cmp.first.lambda_max > cmp.second.lambda_max &&
               cmp.first.trace > cmp.second.trace) {
        cmp.verdict = Verdict::first_sharper;
    } else {
        cmp.verdict = Verdict::mixed;
    }
    return cmp;
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::equal:
            return "EQUAL";
        case Verdict::first_sharper:
            return "FIRST_SHARPER";
        case Verdict::second_sharper:
            return "SECOND_SHARPER";
        case Verdict::mixed:
            return "MIXED";
    }
    return "UNKNOWN";
}

nlohmann::json report_to_json(const SmoothnessReport& report) {
    return nlohmann::json{
        {"lambda_max", report.lambda_max},
        {"lambda_max_signed", report.lambda_max_signed},
        {"trace", report.trace},
        {"trace_stderr", report.trace_stderr},
        {"probes", report.probes},
        {"power_iters", report.power_iters},
        {"residual", report.residual},
        {"converged", report.converged},
        {"power_seed", report.power_seed},
        {"probe_seed", report.probe_seed},
        {"label_mode", report.label_mode},
    };
}

SmoothnessReport report_from_json(const nlohmann::json& j) {
    SmoothnessReport report;
    report.lambda_max = j.at("lambda_max").get<double>();
    report.lambda_max_signed = j.at("lambda_max_signed").get<double>();
    report.trace = j.at("trace").get<double>();
    report.trace_stderr = j.at("trace_stderr").get<double>();
    report.probes = j.at("probes").get<int>();
    report.power_iters = j.at("power_iters").get<int>();
    report.residual = j.at("residual").get<double>();
    report.converged = j.at("converged").get<bool>();
    report.power_seed = j.at("power_seed").get<std::uint64_t>();
    report.probe_seed = j.at("probe_seed").get<std::uint64_t>();
    report.label_mode = j.at("label_mode").get<std::string>();
    return report;
}

void write_density_csv(const std::filesystem::path& path, const SpectralDensity& density) {
    std::ofstream out(path);
    if (!out) {
        raise(ErrorCode::io, "cannot open density file for writing: " + path.string());
    }
    out << "node,weight\n";
    char line[128];
    for (const DensityPoint& point : density.points) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g\n", point.node, point.weight);
        out << line;
    }
}

}  // namespace fiplab::smoothness
