#pragma once

#include "linalg/matrix.hpp"

namespace fiplab::linalg {

// Thin SVD, w = u * diag(sigma) * v^T, with r = min(rows, cols):
//   u: rows x r, orthonormal columns
//   sigma: r values, descending, nonnegative
//   v: cols x r, orthonormal columns
// Deterministic sign convention: the largest-magnitude entry of each u
// column is positive (first such entry on ties).
struct ThinSvd {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
    int sweeps = 0;
};

// One-sided Jacobi: cyclic sweeps of plane rotations orthogonalising column
// pairs. Converged when every |col_p . col_q| <= tol * |col_p| * |col_q|.
// Throws on non-convergence, reporting the achieved off-diagonal level.
ThinSvd one_sided_jacobi_svd(const Matrix& w, int max_sweeps = 30, double tol = 1e-14);

}  // namespace fiplab::linalg
