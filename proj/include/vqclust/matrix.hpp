#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqclust {

// Dense row-major matrix of doubles. The workhorse container for
// expression tables, latent tables and distance matrices.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    Matrix transposed() const {
        Matrix t(cols, rows);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                t.at(j, i) = at(i, j);
        return t;
    }
};

inline double squared_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// n x n matrix of pairwise squared Euclidean distances between rows of X.
Matrix pairwise_squared_distances(const Matrix& x);

// Population-convention column statistics (divide by n).
std::vector<double> column_means(const Matrix& x);
std::vector<double> column_sds(const Matrix& x, const std::vector<double>& means);

}  // namespace vqclust
