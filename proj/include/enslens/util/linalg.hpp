#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace enslens::linalg {

// Lower-triangular Cholesky factor of a symmetric positive definite n x n matrix
// (row-major). Returns an empty vector if the matrix is not positive definite.
std::vector<double> cholesky(std::span<const double> a, std::size_t n);

struct EigenDecomposition {
    std::vector<double> values;   // n eigenvalues, descending
    std::vector<double> vectors;  // n x n row-major; row k is the unit eigenvector for values[k]
    int sweeps = 0;
};

// Cyclic Jacobi eigen-solver for symmetric matrices. Iterates until the
// off-diagonal Frobenius norm drops below tol relative to the matrix norm or
// max_sweeps is reached. Ties in eigenvalues keep the lower original column first.
EigenDecomposition jacobi_eigen(std::span<const double> a, std::size_t n, double tol = 1e-12, int max_sweeps = 100);

}  // namespace enslens::linalg
