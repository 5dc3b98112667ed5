#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vqclust/matrix.hpp"

namespace vqclust {

enum class ProjectionMethod { pca, tsne };

struct Projection {
    Matrix coords;  // n x n_components (2 for the standard exports)
    ProjectionMethod method = ProjectionMethod::pca;
    std::vector<double> explained_variance;  // PCA only, non-increasing
};

struct PcaResult {
    Projection projection;
    Matrix components;  // n_components x p, rows are principal axes
};

// Mean-centered PCA with population-convention covariance. Sign convention:
// each component's largest-magnitude coordinate is positive.
PcaResult pca(const Matrix& x, std::size_t n_components);

struct TsneOptions {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    std::uint64_t seed = 0;
    std::size_t exaggeration_iters = 250;  // x12 early exaggeration window
    double learning_rate = 200.0;
};

struct TsneDiagnostics {
    std::vector<double> kl_history;       // recorded every 50 iterations
    std::vector<double> achieved_perplexity;  // per point, after sigma search
};

struct TsneAffinities {
    Matrix conditional;  // row-normalized P(j|i), zero diagonal
    Matrix joint;        // symmetrized (P + P^T) / 2n, sums to 1
    std::vector<double> achieved_perplexity;
};

// Per-point sigma by bisection until the conditional entropy matches
// log(perplexity); sigma searched on [1e-20, 1e20] with 200 bisections.
TsneAffinities tsne_affinities(const Matrix& x, double perplexity);

// Exact t-SNE: per-point sigma by bisection to the target perplexity,
// symmetrized joint P, momentum gradient descent (0.5 then 0.8).
Projection tsne(const Matrix& x, const TsneOptions& options, TsneDiagnostics* diag = nullptr);

}  // namespace vqclust
