#pragma once

#include <cstddef>
#include <vector>

#include "vqclust/matrix.hpp"

namespace vqclust {

// The discrete latent space: M embedding vectors of dimension Dc. A latent
// vector of dimension l = G*Dc is quantized slot by slot against it.
struct Codebook {
    Matrix vectors;  // M x Dc

    std::size_t size() const { return vectors.rows; }     // M
    std::size_t code_dim() const { return vectors.cols; } // Dc
};

struct QuantizeResult {
    std::vector<double> z_q;           // dim l, concatenation of selected codes
    std::vector<std::size_t> indices;  // G entries in [0, M)
};

// Nearest code per slot under squared Euclidean distance; ties break to the
// lowest index.
QuantizeResult quantize(const std::vector<double>& z_e, const Codebook& codebook,
                        std::size_t groups);

// Deterministic categorical posterior: one one-hot row of length M per slot,
// with the unit entry at the quantize index.
std::vector<std::vector<double>> posterior(const std::vector<double>& z_e,
                                           const Codebook& codebook, std::size_t groups);

// exp(entropy) of the empirical code-usage distribution; 1 = collapsed,
// M = uniform usage.
double codebook_perplexity(const std::vector<std::size_t>& code_indices, std::size_t m);

}  // namespace vqclust
