// Small dense symmetric eigensolver (cyclic Jacobi) for d x d coefficient
// matrices; d is the spatial dimension, so sizes stay tiny.
#pragma once

#include <span>
#include <vector>

namespace fpmv {

struct SymEig {
    std::vector<double> eigenvalues;   // size d, ascending
    std::vector<double> eigenvectors;  // d x d, column k = eigenvector of eigenvalues[k]
};

// a is a row-major d x d symmetric matrix; only the symmetric part is used.
SymEig sym_eig(std::span<const double> a, int d);

double min_eigenvalue_sym(std::span<const double> a, int d);

}  // namespace fpmv
