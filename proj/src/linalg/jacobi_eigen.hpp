#pragma once

#include "linalg/matrix.hpp"

namespace fiplab::linalg {

// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
// vectors column j is the eigenvector for values[j].
struct EigenSym {
    std::vector<double> values;
    Matrix vectors;
    int sweeps = 0;
};

// Cyclic Jacobi rotations. Intended for the small matrices that appear in
// this project (Lanczos tridiagonals, Gram matrices of weight layers,
// dense Hessians of tiny test models).
EigenSym jacobi_eigen_sym(Matrix a, int max_sweeps = 64, double tol = 1e-15);

}  // namespace fiplab::linalg
