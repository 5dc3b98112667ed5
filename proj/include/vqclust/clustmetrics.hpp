#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vqclust/matrix.hpp"

namespace vqclust {

struct ContingencyTable {
    std::vector<std::vector<std::size_t>> counts;  // r x c
    std::vector<std::size_t> row_marginals;
    std::vector<std::size_t> col_marginals;
    std::size_t n = 0;

    static ContingencyTable from_labels(const std::vector<std::size_t>& a,
                                        const std::vector<std::size_t>& b);
};

// I(A;B) normalized by the arithmetic mean of the entropies (natural log).
// Two zero-entropy partitions agree trivially and score 1.
double nmi(const std::vector<std::size_t>& labels_a, const std::vector<std::size_t>& labels_b);

// Fraction of samples covered by each cluster's majority class.
double purity(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);

struct SilhouetteResult {
    double mean = 0.0;
    std::vector<double> per_sample;
};

// Euclidean silhouette; singleton clusters score 0 by convention, as do
// points where both cohesion and separation vanish.
SilhouetteResult silhouette(const Matrix& x, const std::vector<std::size_t>& labels);

// Chance-corrected pair-counting agreement from the contingency table.
double adjusted_rand(const std::vector<std::size_t>& labels_a,
                     const std::vector<std::size_t>& labels_b);

// Dense ids assigned by first occurrence (for string class labels).
std::vector<std::size_t> encode_labels(const std::vector<std::string>& labels);

}  // namespace vqclust
