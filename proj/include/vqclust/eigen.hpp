#pragma once

#include "vqclust/matrix.hpp"

namespace vqclust {

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column j is the eigenvector of values[j]
};

// Cyclic Jacobi rotations for a symmetric matrix. Sweeps until the largest
// off-diagonal entry falls below threshold * frobenius_norm or max_sweeps
// is reached. Eigenpairs are returned sorted by ascending eigenvalue with a
// deterministic tie order.
EigenDecomposition jacobi_eigen_symmetric(const Matrix& a, double threshold = 1e-10,
                                          int max_sweeps = 100);

}  // namespace vqclust
