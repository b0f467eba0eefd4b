#include "linalg/jacobi_svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "support/errors.hpp"

namespace fiplab::linalg {

namespace {

// One-sided Jacobi on a tall matrix (rows >= cols). Returns u (rows x cols),
// sigma (cols), v (cols x cols).
ThinSvd tall_jacobi(const Matrix& input, int max_sweeps, double tol) {
    const std::size_t m = input.rows;
    const std::size_t n = input.cols;
    Matrix b = input;
    Matrix v = Matrix::identity(n);

    double worst = 0.0;
    bool converged = (n <= 1);
    int sweep = 0;
    for (; sweep < max_sweeps && !converged; ++sweep) {
        converged = true;
        worst = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double bp = b(k, p);
                    const double bq = b(k, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0) {
                    continue;
                }
                const double rel = std::fabs(gamma) / denom;
                worst = std::max(worst, rel);
                if (rel <= tol) {
                    continue;
                }
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double bp = b(k, p);
                    const double bq = b(k, q);
                    b(k, p) = c * bp - s * bq;
                    b(k, q) = s * bp + c * bq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vp = v(k, p);
                    const double vq = v(k, q);
                    v(k, p) = c * vp - s * vq;
                    v(k, q) = s * vp + c * vq;
                }
            }
        }
    }
    if (!converged) {
        raise(ErrorCode::numeric,
              "one-sided Jacobi SVD did not converge in " + std::to_string(max_sweeps) +
                  " sweeps; worst off-diagonal level " + std::to_string(worst));
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            s += b(k, j) * b(k, j);
        }
        sigma[j] = std::sqrt(s);
    }

    // Descending order of sigma, stable.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    ThinSvd out;
    out.sweeps = sweep;
    out.sigma.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);

    const double sigma_max = sigma.empty() ? 0.0 : sigma[order[0]];
    const double tiny = std::max(sigma_max, 1.0) * 1e-300;

    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        out.sigma[jj] = sigma[j];
        for (std::size_t k = 0; k < n; ++k) {
            out.v(k, jj) = v(k, j);
        }
        if (sigma[j] > tiny) {
            const double inv = 1.0 / sigma[j];
            for (std::size_t k = 0; k < m; ++k) {
                out.u(k, jj) = b(k, j) * inv;
            }
        } else {
            // Zero column: complete u with a deterministic orthonormal fill.
            out.sigma[jj] = 0.0;
            for (std::size_t cand = 0; cand < m; ++cand) {
                std::vector<double> e(m, 0.0);
                e[cand] = 1.0;
                for (std::size_t prev = 0; prev < jj; ++prev) {
                    double proj = 0.0;
                    for (std::size_t k = 0; k < m; ++k) {
                        proj += e[k] * out.u(k, prev);
                    }
                    for (std::size_t k = 0; k < m; ++k) {
                        e[k] -= proj * out.u(k, prev);
                    }
                }
                double nrm = 0.0;
                for (double x : e) {
                    nrm += x * x;
                }
                nrm = std::sqrt(nrm);
                if (nrm > 0.5) {
                    for (std::size_t k = 0; k < m; ++k) {
                        out.u(k, jj) = e[k] / nrm;
                    }
                    break;
                }
            }
        }
    }

    // Sign convention on u columns.
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double mag = std::fabs(out.u(k, j));
            if (mag > best) {
                best = mag;
                arg = k;
            }
        }
        if (out.u(arg, j) < 0.0) {
            for (std::size_t k = 0; k < m; ++k) {
                out.u(k, j) = -out.u(k, j);
            }
            for (std::size_t k = 0; k < n; ++k) {
                out.v(k, j) = -out.v(k, j);
            }
        }
    }
    return out;
}

}  // namespace

ThinSvd one_sided_jacobi_svd(const Matrix& w, int max_sweeps, double tol) {
    for (double x : w.data) {
        if (!std::isfinite(x)) {
            raise(ErrorCode::numeric, "SVD input contains non-finite entries");
        }
    }
    if (w.rows >= w.cols) {
        return tall_jacobi(w, max_sweeps, tol);
    }
    // Wide matrix: factor the transpose and swap the roles of u and v.
    ThinSvd t = tall_jacobi(transpose(w), max_sweeps, tol);
    ThinSvd out;
    out.sweeps = t.sweeps;
    out.sigma = std::move(t.sigma);
    out.u = std::move(t.v);
    out.v = std::move(t.u);
    // Re-apply the sign convention so that u (not v) carries it.
    const std::size_t m = out.u.rows;
    const std::size_t n = out.v.rows;
    const std::size_t r = out.sigma.size();
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double mag = std::fabs(out.u(k, j));
            if (mag > best) {
                best = mag;
                arg = k;
            }
        }
        if (out.u(arg, j) < 0.0) {
            for (std::size_t k = 0; k < m; ++k) {
                out.u(k, j) = -out.u(k, j);
            }
            for (std::size_t k = 0; k < n; ++k) {
                out.v(k, j) = -out.v(k, j);
            }
        }
    }
    return out;
}

}  // namespace fiplab::linalg
