#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vqclust/dimred.hpp"
#include "vqclust/rng.hpp"

#include "oracles.hpp"

using namespace vqclust;

namespace {

Matrix random_matrix(std::size_t n, std::size_t p, Rng& rng, double scale = 1.0) {
    Matrix m(n, p);
    for (auto& v : m.data) v = scale * rng.normal();
    return m;
}

}  // namespace

TEST_CASE("pca on x-axis points yields PC1 = (1,0) with zero second variance") {
    Matrix x(4, 2, 0.0);
    x.at(0, 0) = -3.0;
    x.at(1, 0) = -1.0;
    x.at(2, 0) = 1.0;
    x.at(3, 0) = 3.0;
    PcaResult r = pca(x, 2);
    CHECK(r.components.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.components.at(0, 1) == doctest::Approx(0.0));
    CHECK(r.projection.explained_variance[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(r.projection.explained_variance[1] == doctest::Approx(0.0));
}

TEST_CASE("pca on isotropic data gives orthonormal components with equal variances") {
    Matrix x(4, 2, 0.0);
    x.at(0, 0) = 1.0;
    x.at(1, 0) = -1.0;
    x.at(2, 1) = 1.0;
    x.at(3, 1) = -1.0;
    PcaResult r = pca(x, 2);
    CHECK(r.projection.explained_variance[0] ==
          doctest::Approx(r.projection.explained_variance[1]).epsilon(1e-9));
    double dot = 0.0, n0 = 0.0, n1 = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
        dot += r.components.at(0, j) * r.components.at(1, j);
        n0 += r.components.at(0, j) * r.components.at(0, j);
        n1 += r.components.at(1, j) * r.components.at(1, j);
    }
    CHECK(std::fabs(dot) < 1e-9);
    CHECK(n0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n1 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca matches the power-iteration eigen oracle on a random 6x4 matrix") {
    Rng rng(11);
    Matrix x = random_matrix(6, 4, rng);
    PcaResult r = pca(x, 2);

    // oracle: population covariance + power iteration
    auto means = column_means(x);
    Matrix centered = x;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) centered.at(i, j) -= means[j];
    Matrix cov(4, 4, 0.0);
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < 6; ++i) s += centered.at(i, a) * centered.at(i, b);
            cov.at(a, b) = s / 6.0;
        }
    auto eig = oracle::power_eigen(cov, 2);  // descending

    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(r.projection.explained_variance[c] ==
              doctest::Approx(eig[c].first).epsilon(1e-8));
        // apply the same sign convention to the oracle vector
        std::vector<double> v = eig[c].second;
        std::size_t arg = 0;
        for (std::size_t j = 1; j < 4; ++j)
            if (std::fabs(v[j]) > std::fabs(v[arg])) arg = j;
        if (v[arg] < 0.0)
            for (auto& val : v) val = -val;
        for (std::size_t i = 0; i < 6; ++i) {
            double coord = 0.0;
            for (std::size_t j = 0; j < 4; ++j) coord += centered.at(i, j) * v[j];
            CHECK(r.projection.coords.at(i, c) == doctest::Approx(coord).epsilon(1e-8));
        }
    }
}

TEST_CASE("pca reconstruction with all components is exact") {
    Rng rng(13);
    for (auto [n, p] : {std::pair<std::size_t, std::size_t>{8, 5},
                        std::pair<std::size_t, std::size_t>{5, 8}}) {
        Matrix x = random_matrix(n, p, rng);
        std::size_t full = std::min(n, p);
        PcaResult r = pca(x, full);
        auto means = column_means(x);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) {
                double rec = means[j];
                for (std::size_t c = 0; c < full; ++c)
                    rec += r.projection.coords.at(i, c) * r.components.at(c, j);
                CHECK(std::fabs(rec - x.at(i, j)) < 1e-8);
            }
    }
}

TEST_CASE("pca is translation invariant") {
    Rng rng(17);
    Matrix x = random_matrix(10, 3, rng);
    Matrix shifted = x;
    for (std::size_t i = 0; i < 10; ++i) {
        shifted.at(i, 0) += 100.0;
        shifted.at(i, 1) -= 42.0;
        shifted.at(i, 2) += 7.5;
    }
    PcaResult a = pca(x, 2);
    PcaResult b = pca(shifted, 2);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(std::fabs(a.projection.coords.at(i, c) - b.projection.coords.at(i, c)) <
                  1e-8);
}

TEST_CASE("pca explained variances are non-increasing") {
    Rng rng(19);
    Matrix x = random_matrix(12, 6, rng);
    PcaResult r = pca(x, 6);
    for (std::size_t c = 1; c < 6; ++c)
        CHECK(r.projection.explained_variance[c] <=
              r.projection.explained_variance[c - 1] + 1e-12);
}

TEST_CASE("pca rejects invalid component counts") {
    Rng rng(23);
    Matrix x = random_matrix(4, 3, rng);
    CHECK_THROWS_AS(pca(x, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca(x, 4), std::invalid_argument);
}

TEST_CASE("tsne conditional rows and joint matrix are normalized") {
    Rng rng(29);
    Matrix x = random_matrix(40, 5, rng);
    TsneAffinities aff = tsne_affinities(x, 10.0);
    for (std::size_t i = 0; i < 40; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 40; ++j) row += aff.conditional.at(i, j);
        CHECK(std::fabs(row - 1.0) < 1e-9);
        CHECK(aff.conditional.at(i, i) == 0.0);
    }
    double total = 0.0;
    for (double v : aff.joint.data) total += v;
    CHECK(std::fabs(total - 1.0) < 1e-9);
}

TEST_CASE("tsne hits the requested perplexity per point") {
    Rng rng(31);
    Matrix x = random_matrix(50, 4, rng);
    TsneAffinities aff = tsne_affinities(x, 12.0);
    for (double p : aff.achieved_perplexity) CHECK(std::fabs(p - 12.0) < 1e-3);
}

TEST_CASE("tsne rejects out-of-range perplexity") {
    Rng rng(37);
    Matrix x = random_matrix(30, 3, rng);
    TsneOptions opts;
    opts.perplexity = 0.5;
    CHECK_THROWS_AS(tsne(x, opts), std::invalid_argument);
    opts.perplexity = 10.0;  // (30-1)/3 < 10
    CHECK_THROWS_AS(tsne(x, opts), std::invalid_argument);
}

TEST_CASE("tsne pulls duplicated points together and the KL objective settles") {
    Rng rng(41);
    const std::size_t n = 60;
    Matrix x = random_matrix(n, 6, rng, 2.0);
    for (std::size_t j = 0; j < 6; ++j) x.at(1, j) = x.at(0, j);  // duplicate pair

    TsneOptions opts;
    opts.perplexity = 8.0;
    opts.iterations = 600;
    opts.seed = 3;
    TsneDiagnostics diag;
    Projection proj = tsne(x, opts, &diag);

    // duplicated points should end nearer than 95% of all pairwise distances
    auto dist = [&](std::size_t a, std::size_t b) {
        double d0 = proj.coords.at(a, 0) - proj.coords.at(b, 0);
        double d1 = proj.coords.at(a, 1) - proj.coords.at(b, 1);
        return std::sqrt(d0 * d0 + d1 * d1);
    };
    double pair_dist = dist(0, 1);
    std::vector<double> all;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) all.push_back(dist(i, j));
    std::sort(all.begin(), all.end());
    double q95 = all[static_cast<std::size_t>(0.95 * static_cast<double>(all.size()))];
    CHECK(pair_dist < q95);

    // KL entries recorded after exaggeration must not increase (1e-6 slack)
    REQUIRE(diag.kl_history.size() == 12);
    for (std::size_t e = 6; e < diag.kl_history.size(); ++e)
        CHECK(diag.kl_history[e] <= diag.kl_history[e - 1] + 1e-6);
    CHECK(diag.kl_history.back() < diag.kl_history.front());
}

TEST_CASE("tsne is deterministic per seed") {
    Rng rng(43);
    Matrix x = random_matrix(25, 4, rng);
    TsneOptions opts;
    opts.perplexity = 5.0;
    opts.iterations = 120;
    opts.seed = 11;
    Projection a = tsne(x, opts);
    Projection b = tsne(x, opts);
    CHECK(a.coords.data == b.coords.data);
}
