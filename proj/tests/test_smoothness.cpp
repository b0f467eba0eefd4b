#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "linalg/jacobi_eigen.hpp"
#include "smoothness/smoothness.hpp"
#include "support/errors.hpp"
#include "support/oracles.hpp"
#include "support/rng.hpp"

using namespace fiplab;
using oracles::trained_tiny_fixture;

namespace {

smoothness::LinOp diag_op(std::vector<double> d) {
    return [d = std::move(d)](const std::vector<double>& v) {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            out[i] = d[i] * v[i];
        }
        return out;
    };
}

smoothness::LinOp dense_op(const linalg::Matrix& h) {
    return [&h](const std::vector<double>& v) {
        std::vector<double> out(h.rows, 0.0);
        for (std::size_t i = 0; i < h.rows; ++i) {
            for (std::size_t j = 0; j < h.cols; ++j) {
                out[i] += h(i, j) * v[j];
            }
        }
        return out;
    };
}

}  // namespace

TEST_CASE("power iteration on an explicit diagonal operator") {
    auto result = smoothness::power_iteration(diag_op({5.0, 1.0}), 2, 200, 1e-9, 3);
    CHECK(result.converged);
    CHECK(std::fabs(result.lambda_abs - 5.0) <= 1e-6);
    CHECK(result.rayleigh == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("power iteration converges to the most negative eigenvalue too") {
    auto result = smoothness::power_iteration(diag_op({-7.0, 2.0, 1.0}), 3, 300, 1e-9, 4);
    CHECK(result.converged);
    CHECK(result.lambda_abs == doctest::Approx(7.0).epsilon(1e-6));
    CHECK(result.rayleigh == doctest::Approx(-7.0).epsilon(1e-6));
}

TEST_CASE("non-convergence is flagged, not thrown") {
    auto result = smoothness::power_iteration(diag_op({5.0, 4.999999}), 2, 2, 1e-14, 5);
    CHECK(!result.converged);
    CHECK(result.residual > 1e-14);
}

TEST_CASE("power iteration matches the dense eigensolve on a tiny model") {
    auto fx = trained_tiny_fixture({6, 8, 5, 3}, 24, 640);
    smoothness::DenseHessian dense = smoothness::dense_hessian_oracle(fx.model, fx.batch);
    auto eig = linalg::jacobi_eigen_sym(dense.matrix);
    double lam_ref = 0.0;
    for (double v : eig.values) {
        lam_ref = std::max(lam_ref, std::fabs(v));
    }

    smoothness::LinOp op = smoothness::hvp_operator(fx.model, fx.batch);
    auto result = smoothness::power_iteration(op, fx.model.param_count(), 2000, 1e-8, 11);
    CHECK(std::fabs(result.lambda_abs - lam_ref) <= 0.01 * lam_ref);

    // Seed stability within 2%.
    for (std::uint64_t seed : {21, 22, 23, 24, 25}) {
        auto again = smoothness::power_iteration(op, fx.model.param_count(), 2000, 1e-8, seed);
        CHECK(std::fabs(again.lambda_abs - result.lambda_abs) <= 0.02 * result.lambda_abs);
    }

    // Variational bound: the dense top eigenvalue dominates every Rayleigh
    // quotient.
    rng::Xoshiro256pp gen(77);
    const std::size_t P = fx.model.param_count();
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(P);
        for (double& x : v) {
            x = gen.uniform(-1.0, 1.0);
        }
        const double n = linalg::norm2(v);
        for (double& x : v) {
            x /= n;
        }
        std::vector<double> hv(P, 0.0);
        for (std::size_t i = 0; i < P; ++i) {
            for (std::size_t j = 0; j < P; ++j) {
                hv[i] += dense.matrix(i, j) * v[j];
            }
        }
        CHECK(eig.values[0] + 1e-10 >= linalg::dot(v, hv));
    }

    // For the (possibly indefinite) Hessian, max |eig| <= sum |eig|.
    double abs_sum = 0.0;
    for (double v : eig.values) {
        abs_sum += std::fabs(v);
    }
    CHECK(lam_ref <= abs_sum + 1e-12);
}

TEST_CASE("hutchinson trace is exact for diagonal operators") {
    for (int probes : {1, 3, 10}) {
        auto est = smoothness::hutchinson_trace(diag_op({5.0, 1.0}), 2, probes, 17);
        CHECK(est.trace == doctest::Approx(6.0).epsilon(1e-12));
    }
}

TEST_CASE("hutchinson matches the dense trace within 10 percent") {
    auto fx = trained_tiny_fixture({6, 8, 5, 3}, 24, 641);
    smoothness::DenseHessian dense = smoothness::dense_hessian_oracle(fx.model, fx.batch);
    double trace_ref = 0.0;
    for (std::size_t i = 0; i < dense.matrix.rows; ++i) {
        trace_ref += dense.matrix(i, i);
    }
    smoothness::LinOp op = smoothness::hvp_operator(fx.model, fx.batch);
    auto est = smoothness::hutchinson_trace(op, fx.model.param_count(), 100, 19);
    CHECK(std::fabs(est.trace - trace_ref) <= 0.10 * std::fabs(trace_ref));

    // Unbiasedness: the 1000-probe mean sits within 3 standard errors.
    auto big = smoothness::hutchinson_trace(op, fx.model.param_count(), 1000, 23);
    CHECK(std::fabs(big.trace - trace_ref) <= 3.0 * big.stderr_ + 1e-9);
}

TEST_CASE("hutchinson standard error shrinks like 1/sqrt(probes)") {
    auto fx = trained_tiny_fixture({5, 6, 3}, 16, 642);
    smoothness::LinOp op = smoothness::hvp_operator(fx.model, fx.batch);
    double se_small = 0.0, se_large = 0.0;
    const int reps = 8;
    for (int rep = 0; rep < reps; ++rep) {
        se_small +=
            smoothness::hutchinson_trace(op, fx.model.param_count(), 40, 100 + rep).stderr_;
        se_large +=
            smoothness::hutchinson_trace(op, fx.model.param_count(), 80, 200 + rep).stderr_;
    }
    const double ratio = se_large / se_small;
    CHECK(ratio > 0.45);
    CHECK(ratio < 1.0);
}

TEST_CASE("dense oracle: symmetry, trace identity and basis-column consistency") {
    auto fx = trained_tiny_fixture({6, 8, 5, 3}, 16, 643);
    smoothness::DenseHessian dense = smoothness::dense_hessian_oracle(fx.model, fx.batch);
    CHECK(dense.symmetry_defect <= 1e-4);

    auto eig = linalg::jacobi_eigen_sym(dense.matrix);
    double trace = 0.0, eigsum = 0.0;
    for (std::size_t i = 0; i < dense.matrix.rows; ++i) {
        trace += dense.matrix(i, i);
        eigsum += eig.values[i];
    }
    CHECK(std::fabs(trace - eigsum) <= 1e-8 * std::max(1.0, std::fabs(trace)));

    // Columns reproduce hvp on basis vectors up to the symmetrization.
    const std::size_t P = fx.model.param_count();
    nn::ParamVector e;
    e.widths = fx.model.widths();
    e.values.assign(P, 0.0);
    for (std::size_t j : {std::size_t{0}, P / 2, P - 1}) {
        e.values[j] = 1.0;
        nn::ParamVector hv = nn::hvp(fx.model, fx.batch, e);
        e.values[j] = 0.0;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < P; ++i) {
            const double d = dense.matrix(i, j) - hv.values[i];
            num += d * d;
            den += hv.values[i] * hv.values[i];
        }
        CHECK(std::sqrt(num) <= 1e-4 * std::max(1.0, std::sqrt(den)));
    }

    // Guard limit.
    auto big = oracles::tiny_fixture({40, 20, 10}, 4, 1);  // 1030 params
    CHECK_THROWS_AS(smoothness::dense_hessian_oracle(big.model, big.batch), Error);
}

TEST_CASE("spectral density recovers an explicit two-point spectrum") {
    auto density = smoothness::spectral_density(diag_op({5.0, 1.0}), 2, 2, 6, 31);
    CHECK(density.truncated_probes == 0);
    double w5 = 0.0, w1 = 0.0, total = 0.0;
    for (const auto& p : density.points) {
        total += p.weight;
        if (std::fabs(p.node - 5.0) < 1e-8) {
            w5 += p.weight;
        }
        if (std::fabs(p.node - 1.0) < 1e-8) {
            w1 += p.weight;
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(w5 == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(w1 == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("spectral density moments and support agree with the dense oracle") {
    auto fx = trained_tiny_fixture({6, 8, 5, 3}, 24, 644);
    const std::size_t P = fx.model.param_count();
    smoothness::LinOp op = smoothness::hvp_operator(fx.model, fx.batch);

    auto density = smoothness::spectral_density(op, P, 30, 6, 37);
    double first_moment = 0.0;
    for (const auto& p : density.points) {
        first_moment += p.node * p.weight;
    }
    const double slq_trace = first_moment * static_cast<double>(P);

    auto hutch = smoothness::hutchinson_trace(op, P, 100, 41);
    // Combined stochastic tolerance: SLQ uses 6 probes of the same estimator.
    const double combined = 3.0 * hutch.stderr_ * std::sqrt(1.0 + 100.0 / 6.0) + 1e-6;
    CHECK(std::fabs(slq_trace - hutch.trace) <= combined);

    smoothness::DenseHessian dense = smoothness::dense_hessian_oracle(fx.model, fx.batch);
    auto eig = linalg::jacobi_eigen_sym(dense.matrix);
    const double lam_min = eig.values.back();
    const double lam_max = eig.values.front();
    const double slack = 1e-6 * std::max(1.0, std::fabs(lam_max));
    for (const auto& p : density.points) {
        CHECK(p.node >= lam_min - slack);
        CHECK(p.node <= lam_max + slack);
    }
}

TEST_CASE("compare: a model against itself is EQUAL with unit ratios") {
    auto fx = trained_tiny_fixture({5, 6, 3}, 12, 645);
    smoothness::SmoothnessOptions opt;
    opt.power_iters = 300;
    opt.probes = 20;
    auto cmp = smoothness::compare(fx.model, fx.model, fx.batch, opt);
    CHECK(cmp.verdict == smoothness::Verdict::equal);
    CHECK(cmp.lambda_ratio == 1.0);
    CHECK(cmp.trace_ratio == 1.0);
}

TEST_CASE("smoothness report serialization round-trips") {
    auto fx = trained_tiny_fixture({5, 6, 3}, 12, 646);
    smoothness::SmoothnessOptions opt;
    opt.power_iters = 200;
    opt.probes = 10;
    smoothness::SmoothnessReport report = smoothness::analyze(fx.model, fx.batch, opt);
    CHECK(report.label_mode == "ground-truth");
    CHECK(report.lambda_max >= std::fabs(report.lambda_max_signed) - report.residual);
    auto j = smoothness::report_to_json(report);
    smoothness::SmoothnessReport back = smoothness::report_from_json(j);
    CHECK(back.lambda_max == report.lambda_max);
    CHECK(back.trace == report.trace);
    CHECK(back.probes == report.probes);
    CHECK(back.power_seed == report.power_seed);
}
