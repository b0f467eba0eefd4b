#pragma once

#include <cstddef>
#include <vector>

namespace fiplab::linalg {

// Dense row-major matrix of doubles. Deliberately minimal; everything the
// project needs is a handful of free functions below.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    static Matrix identity(std::size_t n);
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double frobenius_norm(const Matrix& a);
// max |a - b| over entries; matrices must have equal shape
double max_abs_diff(const Matrix& a, const Matrix& b);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
// y += alpha * x
void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y);

}  // namespace fiplab::linalg
