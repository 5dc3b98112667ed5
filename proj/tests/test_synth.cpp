#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vqclust/clustering.hpp"
#include "vqclust/clustmetrics.hpp"
#include "vqclust/synth.hpp"

using namespace vqclust;

TEST_CASE("generate is deterministic per seed") {
    SynthConfig cfg;
    cfg.n_samples = 60;
    cfg.n_features = 20;
    cfg.seed = 99;
    SynthData a = generate(cfg);
    SynthData b = generate(cfg);
    CHECK(a.expression.values.data == b.expression.values.data);
    CHECK(a.true_labels == b.true_labels);
    REQUIRE(a.survival.size() == b.survival.size());
    for (std::size_t i = 0; i < a.survival.size(); ++i) {
        CHECK(a.survival[i].time == b.survival[i].time);
        CHECK(a.survival[i].event == b.survival[i].event);
    }

    SynthConfig other = cfg;
    other.seed = 100;
    SynthData c = generate(other);
    CHECK(a.expression.values.data != c.expression.values.data);
}

TEST_CASE("zero noise keeps within-cluster spread far below between-cluster spread") {
    SynthConfig cfg;
    cfg.n_samples = 100;
    cfg.n_features = 30;
    cfg.noise_sd = 0.0;
    cfg.separation = 40.0;
    cfg.seed = 3;
    SynthData data = generate(cfg);

    double max_within = 0.0, min_between = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cfg.n_samples; ++i)
        for (std::size_t j = i + 1; j < cfg.n_samples; ++j) {
            double d = squared_distance(data.latents.row(i), data.latents.row(j),
                                        cfg.latent_dim);
            if (data.true_labels[i] == data.true_labels[j])
                max_within = std::max(max_within, d);
            else
                min_between = std::min(min_between, d);
        }
    CHECK(max_within < min_between);
}

TEST_CASE("kmeans on the true latents recovers labels at separation 8") {
    SynthConfig cfg;  // defaults: n=500, separation=8, noise 0.3
    cfg.seed = 7;
    SynthData data = generate(cfg);
    ClusterAssignment a = kmeans(data.latents, cfg.n_clusters, 1);
    CHECK(nmi(a.labels, data.true_labels) >= 0.99);
}

TEST_CASE("empirical censoring fraction lands near the target") {
    SynthConfig cfg;
    cfg.n_samples = 2000;
    cfg.n_features = 5;
    cfg.censoring_rate = 0.2;
    cfg.seed = 13;
    SynthData data = generate(cfg);
    double censored = 0.0;
    for (const auto& r : data.survival) censored += r.event ? 0.0 : 1.0;
    censored /= static_cast<double>(data.survival.size());
    CHECK(std::fabs(censored - 0.2) < 0.05);
}

TEST_CASE("uncensored survival means sit within 10% of 1/hazard") {
    SynthConfig cfg;
    cfg.n_samples = 2500;  // 500 per cluster
    cfg.n_features = 5;
    cfg.censoring_rate = 0.0;
    cfg.seed = 17;
    SynthData data = generate(cfg);

    std::vector<double> sum(cfg.n_clusters, 0.0);
    std::vector<std::size_t> count(cfg.n_clusters, 0);
    for (std::size_t i = 0; i < data.survival.size(); ++i) {
        sum[data.survival[i].group] += data.survival[i].time;
        count[data.survival[i].group]++;
    }
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
        CHECK(count[c] == 500);
        double mean = sum[c] / static_cast<double>(count[c]);
        double expected = 1.0 / cfg.hazards[c];
        CHECK(std::fabs(mean - expected) / expected < 0.10);
    }
}

TEST_CASE("generate validates its configuration") {
    SynthConfig cfg;
    cfg.n_clusters = 1;
    cfg.hazards = {1.0};
    CHECK_THROWS_AS(generate(cfg), std::invalid_argument);

    SynthConfig bad_hazards;
    bad_hazards.hazards = {1.0, 2.0};  // wrong count for 5 clusters
    CHECK_THROWS_AS(generate(bad_hazards), std::invalid_argument);

    SynthConfig bad_censor;
    bad_censor.censoring_rate = 1.0;
    CHECK_THROWS_AS(generate(bad_censor), std::invalid_argument);
}

TEST_CASE("centroid pairwise distances equal the separation when k <= p") {
    SynthConfig cfg;
    cfg.n_samples = 50;
    cfg.n_features = 10;
    cfg.noise_sd = 0.0;
    cfg.seed = 23;
    SynthData data = generate(cfg);

    // recover centroids as within-cluster latent means (noise is latent-only,
    // so means converge to the centroids)
    Matrix centroids(cfg.n_clusters, cfg.latent_dim, 0.0);
    std::vector<std::size_t> counts(cfg.n_clusters, 0);
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        counts[data.true_labels[i]]++;
        for (std::size_t j = 0; j < cfg.latent_dim; ++j)
            centroids.at(data.true_labels[i], j) += data.latents.at(i, j);
    }
    for (std::size_t c = 0; c < cfg.n_clusters; ++c)
        for (std::size_t j = 0; j < cfg.latent_dim; ++j)
            centroids.at(c, j) /= static_cast<double>(counts[c]);

    for (std::size_t a = 0; a < cfg.n_clusters; ++a)
        for (std::size_t b = a + 1; b < cfg.n_clusters; ++b) {
            double d = std::sqrt(
                squared_distance(centroids.row(a), centroids.row(b), cfg.latent_dim));
            CHECK(d == doctest::Approx(cfg.separation).epsilon(0.15));
        }
}
