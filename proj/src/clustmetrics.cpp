#include "vqclust/clustmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "vqclust/parallel.hpp"

namespace vqclust {

namespace {

std::vector<std::size_t> compress(const std::vector<std::size_t>& labels,
                                  std::size_t* n_distinct) {
    std::map<std::size_t, std::size_t> remap;
    std::vector<std::size_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = remap.emplace(labels[i], remap.size()).first;
        out[i] = it->second;
    }
    *n_distinct = remap.size();
    return out;
}

double entropy_of_marginals(const std::vector<std::size_t>& marginals, std::size_t n) {
    double h = 0.0;
    for (std::size_t c : marginals) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

}  // namespace

ContingencyTable ContingencyTable::from_labels(const std::vector<std::size_t>& a,
                                               const std::vector<std::size_t>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("contingency: label vectors differ in length (" +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()) + ")");
    if (a.empty()) throw std::invalid_argument("contingency: empty labelings");

    std::size_t r = 0, c = 0;
    auto ca = compress(a, &r);
    auto cb = compress(b, &c);

    ContingencyTable t;
    t.n = a.size();
    t.counts.assign(r, std::vector<std::size_t>(c, 0));
    t.row_marginals.assign(r, 0);
    t.col_marginals.assign(c, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        t.counts[ca[i]][cb[i]]++;
        t.row_marginals[ca[i]]++;
        t.col_marginals[cb[i]]++;
    }
    return t;
}

double nmi(const std::vector<std::size_t>& labels_a, const std::vector<std::size_t>& labels_b) {
    ContingencyTable t = ContingencyTable::from_labels(labels_a, labels_b);
    const double n = static_cast<double>(t.n);

    double ha = entropy_of_marginals(t.row_marginals, t.n);
    double hb = entropy_of_marginals(t.col_marginals, t.n);
    if (ha == 0.0 && hb == 0.0) return 1.0;  // both single-cluster: identical partitions

    double mi = 0.0;
    for (std::size_t i = 0; i < t.counts.size(); ++i)
        for (std::size_t j = 0; j < t.counts[i].size(); ++j) {
            std::size_t nij = t.counts[i][j];
            if (nij == 0) continue;
            double pij = static_cast<double>(nij) / n;
            double pi = static_cast<double>(t.row_marginals[i]) / n;
            double pj = static_cast<double>(t.col_marginals[j]) / n;
            mi += pij * std::log(pij / (pi * pj));
        }
    double denom = 0.5 * (ha + hb);
    double v = mi / denom;
    return std::clamp(v, 0.0, 1.0);
}

double purity(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
    ContingencyTable t = ContingencyTable::from_labels(predicted, truth);
    std::size_t hit = 0;
    for (const auto& row : t.counts) hit += *std::max_element(row.begin(), row.end());
    return static_cast<double>(hit) / static_cast<double>(t.n);
}

SilhouetteResult silhouette(const Matrix& x, const std::vector<std::size_t>& labels) {
    const std::size_t n = x.rows;
    if (labels.size() != n)
        throw std::invalid_argument("silhouette: labels length does not match rows");

    std::size_t k = 0;
    auto compact = compress(labels, &k);
    if (k < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");

    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t l : compact) sizes[l]++;

    SilhouetteResult res;
    res.per_sample.assign(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> sum_to_cluster(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d = std::sqrt(squared_distance(x.row(i), x.row(j), x.cols));
            sum_to_cluster[compact[j]] += d;
        }
        std::size_t own = compact[i];
        if (sizes[own] == 1) {
            res.per_sample[i] = 0.0;  // singleton convention
            return;
        }
        double a = sum_to_cluster[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, sum_to_cluster[c] / static_cast<double>(sizes[c]));
        }
        double denom = std::max(a, b);
        res.per_sample[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    });

    double total = 0.0;
    for (double s : res.per_sample) total += s;
    res.mean = total / static_cast<double>(n);
    return res;
}

double adjusted_rand(const std::vector<std::size_t>& labels_a,
                     const std::vector<std::size_t>& labels_b) {
    ContingencyTable t = ContingencyTable::from_labels(labels_a, labels_b);
    if (t.n < 2) return 1.0;
    auto choose2 = [](std::size_t v) {
        return static_cast<double>(v) * static_cast<double>(v - 1) / 2.0;
    };

    double sum_ij = 0.0;
    for (const auto& row : t.counts)
        for (std::size_t v : row)
            if (v > 1) sum_ij += choose2(v);
    double sum_a = 0.0, sum_b = 0.0;
    for (std::size_t v : t.row_marginals)
        if (v > 1) sum_a += choose2(v);
    for (std::size_t v : t.col_marginals)
        if (v > 1) sum_b += choose2(v);

    double total_pairs = choose2(t.n);
    double expected = sum_a * sum_b / total_pairs;
    double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // degenerate: no room above chance
    return (sum_ij - expected) / (max_index - expected);
}

std::vector<std::size_t> encode_labels(const std::vector<std::string>& labels) {
    std::map<std::string, std::size_t> remap;
    std::vector<std::size_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = remap.find(labels[i]);
        if (it == remap.end()) it = remap.emplace(labels[i], remap.size()).first;
        out[i] = it->second;
    }
    return out;
}

}  // namespace vqclust
