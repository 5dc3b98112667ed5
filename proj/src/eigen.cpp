#include "vqclust/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vqclust {

EigenDecomposition jacobi_eigen_symmetric(const Matrix& a, double threshold, int max_sweeps) {
    if (a.rows != a.cols) throw std::invalid_argument("jacobi: matrix must be square");
    const std::size_t n = a.rows;

    Matrix m = a;
    Matrix v(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    double fro = 0.0;
    for (double x : m.data) fro += x * x;
    fro = std::sqrt(fro);
    const double stop = threshold * (fro > 0.0 ? fro : 1.0);

    for (int sweep = 0; sweep < max_sweeps && n > 1; ++sweep) {
        double off_max = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q)
                off_max = std::max(off_max, std::fabs(m.at(p, q)));
        if (off_max <= stop) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = m.at(p, q);
                if (std::fabs(apq) <= stop) continue;

                double app = m.at(p, p);
                double aqq = m.at(q, q);
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0.0 ? 1.0 : -1.0) /
                           (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;

                for (std::size_t i = 0; i < n; ++i) {
                    double mip = m.at(i, p);
                    double miq = m.at(i, q);
                    m.at(i, p) = c * mip - s * miq;
                    m.at(i, q) = s * mip + c * miq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double mpi = m.at(p, i);
                    double mqi = m.at(q, i);
                    m.at(p, i) = c * mpi - s * mqi;
                    m.at(q, i) = s * mpi + c * mqi;
                }
                m.at(p, q) = 0.0;
                m.at(q, p) = 0.0;

                for (std::size_t i = 0; i < n; ++i) {
                    double vip = v.at(i, p);
                    double viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return m.at(i, i) < m.at(j, j);
    });

    EigenDecomposition out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = m.at(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors.at(i, j) = v.at(i, order[j]);
    }
    return out;
}

}  // namespace vqclust
