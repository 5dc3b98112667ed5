#pragma once

#include <cstdint>
#include <vector>

#include "vqclust/biostats.hpp"
#include "vqclust/expression.hpp"
#include "vqclust/matrix.hpp"

namespace vqclust {

struct SynthConfig {
    std::size_t n_samples = 500;
    std::size_t n_features = 200;  // observed dimension d
    std::size_t latent_dim = 8;    // generating dimension p
    std::size_t n_clusters = 5;
    double separation = 8.0;       // between-centroid distance in latent units
    double noise_sd = 0.3;
    double censoring_rate = 0.2;   // expected fraction censored
    std::vector<double> hazards = {0.2, 0.4, 0.8, 1.6, 3.2};
    std::uint64_t seed = 7;
};

struct SynthData {
    ExpressionMatrix expression;           // n x d observed values
    std::vector<std::size_t> true_labels;  // generating cluster per sample
    std::vector<SurvivalRecord> survival;  // group = true cluster
    Matrix latents;                        // n x p generating coordinates
};

// Cluster centroids on separation-scaled random directions, unit latent
// noise, a fixed random tanh two-layer observation map, and exponential
// survival with uniform censoring tuned to the target rate in expectation.
SynthData generate(const SynthConfig& config);

}  // namespace vqclust
