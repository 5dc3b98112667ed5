#include "vqclust/dimred.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vqclust/eigen.hpp"
#include "vqclust/parallel.hpp"
#include "vqclust/rng.hpp"

namespace vqclust {

PcaResult pca(const Matrix& x, std::size_t n_components) {
    const std::size_t n = x.rows, p = x.cols;
    if (n < 2) throw std::invalid_argument("pca: need at least 2 samples");
    if (n_components == 0 || n_components > std::min(n, p))
        throw std::invalid_argument("pca: n_components must be in [1, min(n,p)]");

    Matrix centered = x;
    auto means = column_means(x);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) centered.at(i, j) -= means[j];

    Matrix components(n_components, p);
    std::vector<double> eigenvalues(n_components);

    if (p <= n) {
        Matrix cov(p, p, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < p; ++a) {
                double va = centered.at(i, a);
                if (va == 0.0) continue;
                for (std::size_t b = 0; b <= a; ++b) cov.at(a, b) += va * centered.at(i, b);
            }
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b <= a; ++b) {
                double v = cov.at(a, b) / static_cast<double>(n);
                cov.at(a, b) = v;
                cov.at(b, a) = v;
            }
        EigenDecomposition eig = jacobi_eigen_symmetric(cov);
        for (std::size_t c = 0; c < n_components; ++c) {
            std::size_t src = p - 1 - c;  // ascending order -> take from the top
            eigenvalues[c] = eig.values[src];
            for (std::size_t j = 0; j < p; ++j) components.at(c, j) = eig.vectors.at(j, src);
        }
    } else {
        // n < p: eigendecompose the n x n Gram matrix instead
        Matrix gram(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double v = 0.0;
                for (std::size_t a = 0; a < p; ++a) v += centered.at(i, a) * centered.at(j, a);
                v /= static_cast<double>(n);
                gram.at(i, j) = v;
                gram.at(j, i) = v;
            }
        EigenDecomposition eig = jacobi_eigen_symmetric(gram);
        const double rank_floor = 1e-12 * std::max(eig.values.back(), 1.0);
        for (std::size_t c = 0; c < n_components; ++c) {
            std::size_t src = n - 1 - c;
            eigenvalues[c] = eig.values[src];
            if (eig.values[src] <= rank_floor) {
                // beyond the data rank there is no variance direction left;
                // emit a zero component rather than normalized noise
                eigenvalues[c] = 0.0;
                for (std::size_t j = 0; j < p; ++j) components.at(c, j) = 0.0;
                continue;
            }
            // component = X^T u, normalized
            double norm = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    s += centered.at(i, j) * eig.vectors.at(i, src);
                components.at(c, j) = s;
                norm += s * s;
            }
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (std::size_t j = 0; j < p; ++j) components.at(c, j) /= norm;
        }
    }

    // sign convention: the largest-|.| coordinate of each component is positive
    for (std::size_t c = 0; c < n_components; ++c) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < p; ++j) {
            double a = std::fabs(components.at(c, j));
            if (a > best) {
                best = a;
                arg = j;
            }
        }
        if (components.at(c, arg) < 0.0)
            for (std::size_t j = 0; j < p; ++j) components.at(c, j) = -components.at(c, j);
    }

    PcaResult res;
    res.components = std::move(components);
    res.projection.method = ProjectionMethod::pca;
    res.projection.explained_variance = std::move(eigenvalues);
    res.projection.coords = Matrix(n, n_components);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < n_components; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j)
                s += centered.at(i, j) * res.components.at(c, j);
            res.projection.coords.at(i, c) = s;
        }
    return res;
}

namespace {

// Entropy (nats) of the conditional distribution for row i at the given
// sigma, plus the distribution itself. Distances are shifted by their row
// minimum before exponentiation so small sigmas do not underflow to 0/0.
double row_entropy(const Matrix& d2, std::size_t i, double sigma, std::vector<double>& p_row) {
    const std::size_t n = d2.rows;
    const double beta = 1.0 / (2.0 * sigma * sigma);
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, d2.at(i, j));

    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
            p_row[j] = 0.0;
            continue;
        }
        double shifted = d2.at(i, j) - dmin;
        double w = std::exp(-beta * shifted);
        p_row[j] = w;
        sum += w;
        weighted += w * shifted;
    }
    for (std::size_t j = 0; j < n; ++j) p_row[j] /= sum;
    return std::log(sum) + beta * weighted / sum;
}

}  // namespace

TsneAffinities tsne_affinities(const Matrix& x, double perplexity) {
    const std::size_t n = x.rows;
    if (n < 4) throw std::invalid_argument("tsne: need at least 4 samples");
    if (!(perplexity > 1.0 && perplexity < (static_cast<double>(n) - 1.0) / 3.0))
        throw std::invalid_argument("tsne: perplexity must satisfy 1 < perplexity < (n-1)/3");

    const double target_entropy = std::log(perplexity);
    Matrix d2 = pairwise_squared_distances(x);

    TsneAffinities out;
    out.conditional = Matrix(n, n, 0.0);
    out.achieved_perplexity.assign(n, 0.0);
    Matrix& p_cond = out.conditional;
    std::vector<double>& achieved = out.achieved_perplexity;
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> p_row(n, 0.0);
        double lo = 1e-20, hi = 1e20, sigma = 1.0;
        double h = 0.0;
        for (int it = 0; it < 200; ++it) {
            sigma = 0.5 * (lo + hi);
            h = row_entropy(d2, i, sigma, p_row);
            if (std::fabs(h - target_entropy) < 1e-5) break;
            if (h > target_entropy)
                hi = sigma;
            else
                lo = sigma;
        }
        for (std::size_t j = 0; j < n; ++j) p_cond.at(i, j) = p_row[j];
        achieved[i] = std::exp(h);
    });

    out.joint = Matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.joint.at(i, j) =
                (p_cond.at(i, j) + p_cond.at(j, i)) / (2.0 * static_cast<double>(n));
    return out;
}

Projection tsne(const Matrix& x, const TsneOptions& options, TsneDiagnostics* diag) {
    const std::size_t n = x.rows;
    TsneAffinities affinities = tsne_affinities(x, options.perplexity);
    if (diag) diag->achieved_perplexity = affinities.achieved_perplexity;
    Matrix& p = affinities.joint;

    Rng rng(options.seed);
    Matrix y(n, 2);
    for (auto& v : y.data) v = 1e-4 * rng.normal();
    Matrix velocity(n, 2, 0.0);

    Matrix q(n, n, 0.0);
    auto q_update = [&]() {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double dy0 = y.at(i, 0) - y.at(j, 0);
                double dy1 = y.at(i, 1) - y.at(j, 1);
                double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                q.at(i, j) = w;
                q.at(j, i) = w;
                sum += 2.0 * w;
            }
        return sum;
    };

    auto kl_objective = [&](double qsum) {
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                double pij = std::max(p.at(i, j), 1e-12);
                double qij = std::max(q.at(i, j) / qsum, 1e-12);
                kl += pij * std::log(pij / qij);
            }
        return kl;
    };

    for (std::size_t iter = 0; iter < options.iterations; ++iter) {
        const bool exaggerating = iter < options.exaggeration_iters;
        const double exaggeration = exaggerating ? 12.0 : 1.0;
        const double momentum = iter < options.exaggeration_iters ? 0.5 : 0.8;
        double qsum = q_update();

        for (std::size_t i = 0; i < n; ++i) {
            double g0 = 0.0, g1 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double pij = exaggeration * p.at(i, j);
                double qij = q.at(i, j) / qsum;
                double mult = 4.0 * (pij - qij) * q.at(i, j);
                g0 += mult * (y.at(i, 0) - y.at(j, 0));
                g1 += mult * (y.at(i, 1) - y.at(j, 1));
            }
            velocity.at(i, 0) = momentum * velocity.at(i, 0) - options.learning_rate * g0;
            velocity.at(i, 1) = momentum * velocity.at(i, 1) - options.learning_rate * g1;
        }
        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            y.at(i, 0) += velocity.at(i, 0);
            y.at(i, 1) += velocity.at(i, 1);
            mean0 += y.at(i, 0);
            mean1 += y.at(i, 1);
        }
        mean0 /= static_cast<double>(n);
        mean1 /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y.at(i, 0) -= mean0;
            y.at(i, 1) -= mean1;
        }

        if (diag && (iter + 1) % 50 == 0) {
            double qs = q_update();
            diag->kl_history.push_back(kl_objective(qs));
        }
    }

    Projection out;
    out.method = ProjectionMethod::tsne;
    out.coords = std::move(y);
    return out;
}

}  // namespace vqclust
