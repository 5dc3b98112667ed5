#include "vqclust/synth.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "vqclust/rng.hpp"

namespace vqclust {

namespace {

constexpr std::size_t kMapHidden = 64;
constexpr double kMapInputScale = 1.0;   // premultiplier on 1/sqrt(p) for W1
constexpr double kMapOutputScale = 0.3;  // premultiplier on 1/sqrt(hidden) for W2
constexpr double kMapBiasSd = 0.3;
// log-sd of per-feature output scales; expression features span orders of
// magnitude, which is what makes clustering raw profiles hard
constexpr double kMapFeatureLogSd = 2.6;

// Orthonormal random rows (k <= p) so every centroid pair sits at exactly
// the requested separation; falls back to plain unit directions when k > p.
Matrix centroid_directions(std::size_t k, std::size_t p, Rng& rng) {
    Matrix dirs(k, p);
    for (auto& v : dirs.data) v = rng.normal();
    if (k <= p) {
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < p; ++c) dot += dirs.at(i, c) * dirs.at(j, c);
                for (std::size_t c = 0; c < p; ++c) dirs.at(i, c) -= dot * dirs.at(j, c);
            }
            double norm = 0.0;
            for (std::size_t c = 0; c < p; ++c) norm += dirs.at(i, c) * dirs.at(i, c);
            norm = std::sqrt(norm);
            if (norm < 1e-9) {
                // resample a degenerate direction
                for (std::size_t c = 0; c < p; ++c) dirs.at(i, c) = rng.normal();
                --i;
                continue;
            }
            for (std::size_t c = 0; c < p; ++c) dirs.at(i, c) /= norm;
        }
    } else {
        for (std::size_t i = 0; i < k; ++i) {
            double norm = 0.0;
            for (std::size_t c = 0; c < p; ++c) norm += dirs.at(i, c) * dirs.at(i, c);
            norm = std::sqrt(norm);
            for (std::size_t c = 0; c < p; ++c) dirs.at(i, c) /= norm;
        }
    }
    return dirs;
}

// Expected censoring fraction with C ~ U(0, b) against the hazard mixture.
double expected_censoring(double b, const std::vector<double>& hazards,
                          const std::vector<double>& cluster_weights) {
    double frac = 0.0;
    for (std::size_t j = 0; j < hazards.size(); ++j) {
        double lb = hazards[j] * b;
        frac += cluster_weights[j] * (1.0 - std::exp(-lb)) / lb;
    }
    return frac;
}

}  // namespace

SynthData generate(const SynthConfig& config) {
    const std::size_t n = config.n_samples, d = config.n_features;
    const std::size_t p = config.latent_dim, k = config.n_clusters;
    if (k < 2) throw std::invalid_argument("synth: need at least 2 clusters");
    if (!(config.separation > 0.0)) throw std::invalid_argument("synth: separation must be > 0");
    if (config.noise_sd < 0.0) throw std::invalid_argument("synth: noise_sd must be >= 0");
    if (!(config.censoring_rate >= 0.0 && config.censoring_rate < 1.0))
        throw std::invalid_argument("synth: censoring_rate must be in [0,1)");
    if (config.hazards.size() != k)
        throw std::invalid_argument("synth: need one hazard per cluster");
    for (double h : config.hazards)
        if (!(h > 0.0)) throw std::invalid_argument("synth: hazards must be positive");
    if (n < k) throw std::invalid_argument("synth: need at least one sample per cluster");

    Rng rng(config.seed);

    Matrix dirs = centroid_directions(k, p, rng);
    const double radius = k <= p ? config.separation / std::sqrt(2.0) : config.separation;
    Matrix centroids(k, p);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < p; ++j) centroids.at(c, j) = radius * dirs.at(c, j);

    SynthData out;
    out.true_labels.resize(n);
    out.latents = Matrix(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = i % k;  // balanced assignment
        out.true_labels[i] = c;
        for (std::size_t j = 0; j < p; ++j)
            out.latents.at(i, j) = centroids.at(c, j) + rng.normal();
    }

    // fixed random two-layer observation map with a tanh hidden layer
    const double w1_scale = kMapInputScale / std::sqrt(static_cast<double>(p));
    const double w2_scale = kMapOutputScale / std::sqrt(static_cast<double>(kMapHidden));
    Matrix w1(p, kMapHidden), w2(kMapHidden, d);
    std::vector<double> b1(kMapHidden);
    for (auto& v : w1.data) v = w1_scale * rng.normal();
    for (auto& v : b1) v = kMapBiasSd * rng.normal();
    std::vector<double> feature_scale(d);
    for (auto& v : feature_scale) v = std::exp(kMapFeatureLogSd * rng.normal());
    for (std::size_t h = 0; h < kMapHidden; ++h)
        for (std::size_t j = 0; j < d; ++j)
            w2.at(h, j) = w2_scale * feature_scale[j] * rng.normal();

    out.expression.values = Matrix(n, d);
    out.expression.stage = Stage::raw;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> hidden(kMapHidden);
        for (std::size_t h = 0; h < kMapHidden; ++h) {
            double s = b1[h];
            for (std::size_t j = 0; j < p; ++j) s += out.latents.at(i, j) * w1.at(j, h);
            hidden[h] = std::tanh(s);
        }
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t h = 0; h < kMapHidden; ++h) s += hidden[h] * w2.at(h, j);
            out.expression.values.at(i, j) = s + config.noise_sd * rng.normal();
        }
    }

    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "S%04zu", i + 1);
        out.expression.sample_ids.emplace_back(buf);
    }
    for (std::size_t j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof(buf), "F%04zu", j + 1);
        out.expression.feature_ids.emplace_back(buf);
    }

    // uniform censoring bound hit by bisection on the expected fraction
    std::vector<double> weights(k, 0.0);
    for (std::size_t l : out.true_labels) weights[l] += 1.0 / static_cast<double>(n);
    double censor_bound = 0.0;
    if (config.censoring_rate > 0.0) {
        double lo = 1e-9, hi = 1e9;
        for (int it = 0; it < 200; ++it) {
            censor_bound = 0.5 * (lo + hi);
            double frac = expected_censoring(censor_bound, config.hazards, weights);
            if (frac > config.censoring_rate)
                lo = censor_bound;  // larger bound censors less
            else
                hi = censor_bound;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = out.true_labels[i];
        double u;
        do {
            u = rng.uniform();
        } while (u <= 0.0);
        double event_time = -std::log(u) / config.hazards[c];
        SurvivalRecord rec;
        rec.sample_id = out.expression.sample_ids[i];
        rec.group = c;
        if (config.censoring_rate > 0.0) {
            double censor_time = rng.uniform() * censor_bound;
            rec.event = event_time <= censor_time;
            rec.time = rec.event ? event_time : censor_time;
        } else {
            rec.event = true;
            rec.time = event_time;
        }
        out.survival.push_back(std::move(rec));
    }
    return out;
}

}  // namespace vqclust
