#include "vqclust/matrix.hpp"

#include <cmath>

#include "vqclust/parallel.hpp"

namespace vqclust {

Matrix pairwise_squared_distances(const Matrix& x) {
    Matrix d(x.rows, x.rows, 0.0);
    parallel_for(x.rows, [&](std::size_t i) {
        for (std::size_t j = 0; j < x.rows; ++j) {
            if (j == i) continue;
            d.at(i, j) = squared_distance(x.row(i), x.row(j), x.cols);
        }
    });
    return d;
}

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> m(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) m[j] += x.at(i, j);
    for (auto& v : m) v /= static_cast<double>(x.rows);
    return m;
}

std::vector<double> column_sds(const Matrix& x, const std::vector<double>& means) {
    std::vector<double> s(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) {
            double d = x.at(i, j) - means[j];
            s[j] += d * d;
        }
    for (auto& v : s) v = std::sqrt(v / static_cast<double>(x.rows));
    return s;
}

}  // namespace vqclust
