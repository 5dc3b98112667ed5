#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqclust/matrix.hpp"

namespace vqclust {

enum class ClusterAlgorithm { kmeans, gmm, spectral, hierarchical };

const char* cluster_algorithm_name(ClusterAlgorithm a);
ClusterAlgorithm cluster_algorithm_from_name(const std::string& name);

// Cluster ids are canonicalized by decreasing cluster size, so repeated runs
// and different algorithms are directly comparable.
struct ClusterAssignment {
    std::vector<std::size_t> labels;  // one per sample, in [0, k)
    std::size_t k = 0;
    ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
    std::uint64_t seed = 0;
    double inertia_or_loglik = 0.0;
};

// k-means++ seeding followed by Lloyd iterations until the assignment stops
// changing or max_iter is hit. Empty clusters are repaired by stealing the
// point farthest from its centroid. inertia_history, when given, records the
// winning run's objective after each update step. restarts > 1 reruns the
// whole procedure on seeds derived from seed and keeps the lowest inertia.
ClusterAssignment kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                         std::size_t max_iter = 300,
                         std::vector<double>* inertia_history = nullptr,
                         std::size_t restarts = 1);

enum class Covariance { diagonal, full };

struct GmmResult {
    ClusterAssignment assignment;
    Matrix responsibilities;             // n x k, rows sum to 1
    std::vector<double> loglik_history;  // per EM iteration, non-decreasing
};

// EM from a k-means initialization; covariances floored at 1e-6.
GmmResult gmm_em(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 200,
                 Covariance covariance = Covariance::diagonal);

// RBF affinity W_ij = exp(-gamma * ||x_i - x_j||^2) with zero diagonal,
// symmetric normalized Laplacian, bottom-k Jacobi eigenvectors, unit-norm
// rows, then k-means on the embedding. gamma <= 0 selects the 1/p default.
ClusterAssignment spectral(const Matrix& x, std::size_t k, std::uint64_t seed,
                           double gamma = 0.0, std::size_t restarts = 1);

enum class Linkage { average, complete };

struct Dendrogram {
    struct Merge {
        std::size_t node_a;  // leaves are 0..n-1, merge t creates node n+t
        std::size_t node_b;
        double height;
        std::size_t size;  // leaves under the new node
    };
    std::vector<Merge> merges;  // n-1 entries, non-decreasing heights
    std::size_t leaves = 0;
    std::vector<std::size_t> leaf_order;  // left-to-right traversal order
};

// Agglomerates the COLUMNS of f under distance 1 - |pearson(f_i, f_j)|.
// Optional names are used in error messages for constant features.
Dendrogram hierarchical_corr(const Matrix& f, Linkage linkage = Linkage::average,
                             const std::vector<std::string>* names = nullptr);

// Exactly n_groups groups obtained by undoing the n_groups - 1 highest
// merges. Groups are numbered by their smallest leaf index.
std::vector<std::size_t> cut_dendrogram(const Dendrogram& d, std::size_t n_groups);

}  // namespace vqclust
