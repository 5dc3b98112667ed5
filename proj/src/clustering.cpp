#include "vqclust/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vqclust/eigen.hpp"
#include "vqclust/parallel.hpp"
#include "vqclust/rng.hpp"

namespace vqclust {

const char* cluster_algorithm_name(ClusterAlgorithm a) {
    switch (a) {
        case ClusterAlgorithm::kmeans: return "kmeans";
        case ClusterAlgorithm::gmm: return "gmm";
        case ClusterAlgorithm::spectral: return "spectral";
        case ClusterAlgorithm::hierarchical: return "hierarchical";
    }
    return "?";
}

ClusterAlgorithm cluster_algorithm_from_name(const std::string& name) {
    if (name == "kmeans") return ClusterAlgorithm::kmeans;
    if (name == "gmm") return ClusterAlgorithm::gmm;
    if (name == "spectral") return ClusterAlgorithm::spectral;
    if (name == "hierarchical") return ClusterAlgorithm::hierarchical;
    throw std::invalid_argument("unknown clustering algorithm '" + name + "'");
}

namespace {

// Relabel so cluster 0 is the largest; ties keep the lower original id first.
void canonicalize_by_size(std::vector<std::size_t>& labels, std::size_t k,
                          std::vector<std::size_t>* column_perm = nullptr) {
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t l : labels) counts[l]++;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
    std::vector<std::size_t> remap(k);
    for (std::size_t new_id = 0; new_id < k; ++new_id) remap[order[new_id]] = new_id;
    for (auto& l : labels) l = remap[l];
    if (column_perm) *column_perm = order;  // new column c comes from old column order[c]
}

std::vector<std::size_t> assign_nearest(const Matrix& x, const Matrix& centroids) {
    std::vector<std::size_t> labels(x.rows, 0);
    parallel_for(x.rows, [&](std::size_t i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < centroids.rows; ++c) {
            double d = squared_distance(x.row(i), centroids.row(c), x.cols);
            if (d < best) {  // strict: ties stay with the lowest cluster index
                best = d;
                best_c = c;
            }
        }
        labels[i] = best_c;
    });
    return labels;
}

Matrix centroid_means(const Matrix& x, const std::vector<std::size_t>& labels, std::size_t k) {
    Matrix c(k, x.cols, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        counts[labels[i]]++;
        for (std::size_t j = 0; j < x.cols; ++j) c.at(labels[i], j) += x.at(i, j);
    }
    for (std::size_t cc = 0; cc < k; ++cc)
        if (counts[cc] > 0)
            for (std::size_t j = 0; j < x.cols; ++j)
                c.at(cc, j) /= static_cast<double>(counts[cc]);
    return c;
}

double inertia_of(const Matrix& x, const std::vector<std::size_t>& labels, const Matrix& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i)
        s += squared_distance(x.row(i), c.row(labels[i]), x.cols);
    return s;
}

Matrix kmeans_pp_init(const Matrix& x, std::size_t k, Rng& rng) {
    Matrix centroids(k, x.cols);
    std::size_t first = rng.index(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) centroids.at(0, j) = x.at(first, j);

    std::vector<double> d2(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i)
        d2[i] = squared_distance(x.row(i), centroids.row(0), x.cols);

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick;
        if (total <= 0.0) {
            pick = rng.index(x.rows);  // remaining points coincide with chosen centroids
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = x.rows - 1;
            for (std::size_t i = 0; i < x.rows; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        for (std::size_t j = 0; j < x.cols; ++j) centroids.at(c, j) = x.at(pick, j);
        for (std::size_t i = 0; i < x.rows; ++i)
            d2[i] = std::min(d2[i], squared_distance(x.row(i), centroids.row(c), x.cols));
    }
    return centroids;
}

}  // namespace

namespace {

ClusterAssignment kmeans_single(const Matrix& x, std::size_t k, std::uint64_t seed,
                                std::size_t max_iter, std::vector<double>* inertia_history);

}  // namespace

ClusterAssignment kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                         std::size_t max_iter, std::vector<double>* inertia_history,
                         std::size_t restarts) {
    if (restarts <= 1) return kmeans_single(x, k, seed, max_iter, inertia_history);
    ClusterAssignment best;
    std::vector<double> best_history;
    for (std::size_t r = 0; r < restarts; ++r) {
        std::uint64_t sub_seed = r == 0 ? seed : derive_seed(seed, r);
        std::vector<double> history;
        ClusterAssignment run = kmeans_single(x, k, sub_seed, max_iter,
                                              inertia_history ? &history : nullptr);
        if (r == 0 || run.inertia_or_loglik < best.inertia_or_loglik) {
            best = std::move(run);
            best_history = std::move(history);
        }
    }
    best.seed = seed;
    if (inertia_history) *inertia_history = std::move(best_history);
    return best;
}

namespace {

ClusterAssignment kmeans_single(const Matrix& x, std::size_t k, std::uint64_t seed,
                                std::size_t max_iter, std::vector<double>* inertia_history) {
    if (k == 0 || k > x.rows)
        throw std::invalid_argument("kmeans: need 1 <= k <= n, got k=" + std::to_string(k) +
                                    " n=" + std::to_string(x.rows));
    if (max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");

    Rng rng(seed);
    Matrix centroids = kmeans_pp_init(x, k, rng);
    std::vector<std::size_t> labels = assign_nearest(x, centroids);

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        // repair empty clusters before the mean update
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t l : labels) counts[l]++;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            double worst = -1.0;
            std::size_t steal = 0;
            for (std::size_t i = 0; i < x.rows; ++i) {
                if (counts[labels[i]] <= 1) continue;
                double d = squared_distance(x.row(i), centroids.row(labels[i]), x.cols);
                if (d > worst) {
                    worst = d;
                    steal = i;
                }
            }
            counts[labels[steal]]--;
            labels[steal] = c;
            counts[c] = 1;
        }
        centroids = centroid_means(x, labels, k);
        if (inertia_history) inertia_history->push_back(inertia_of(x, labels, centroids));
        std::vector<std::size_t> next = assign_nearest(x, centroids);
        if (next == labels) break;
        labels = std::move(next);
    }

    ClusterAssignment out;
    out.k = k;
    out.algorithm = ClusterAlgorithm::kmeans;
    out.seed = seed;
    canonicalize_by_size(labels, k);
    centroids = centroid_means(x, labels, k);
    out.inertia_or_loglik = inertia_of(x, labels, centroids);
    out.labels = std::move(labels);
    return out;
}

}  // namespace

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kCovFloor = 1e-6;

// Cholesky factor (lower) of a symmetric positive definite matrix.
bool cholesky(const Matrix& a, Matrix& l) {
    const std::size_t n = a.rows;
    l = Matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a.at(i, j);
            for (std::size_t kk = 0; kk < j; ++kk) s -= l.at(i, kk) * l.at(j, kk);
            if (i == j) {
                if (s <= 0.0) return false;
                l.at(i, i) = std::sqrt(s);
            } else {
                l.at(i, j) = s / l.at(j, j);
            }
        }
    }
    return true;
}

double log_gaussian_diag(const double* x, const double* mean, const Matrix& cov, std::size_t p) {
    double q = 0.0, ld = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        double v = cov.at(j, j);
        double d = x[j] - mean[j];
        q += d * d / v;
        ld += std::log(v);
    }
    return -0.5 * (q + ld + static_cast<double>(p) * kLog2Pi);
}

double log_gaussian_full(const double* x, const double* mean, const Matrix& chol,
                         double log_det, std::size_t p) {
    std::vector<double> y(p);
    for (std::size_t i = 0; i < p; ++i) {
        double s = x[i] - mean[i];
        for (std::size_t j = 0; j < i; ++j) s -= chol.at(i, j) * y[j];
        y[i] = s / chol.at(i, i);
    }
    double q = 0.0;
    for (double v : y) q += v * v;
    return -0.5 * (q + log_det + static_cast<double>(p) * kLog2Pi);
}

}  // namespace

GmmResult gmm_em(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter,
                 Covariance covariance) {
    const std::size_t n = x.rows, p = x.cols;
    if (k == 0 || k > n) throw std::invalid_argument("gmm_em: need 1 <= k <= n");

    ClusterAssignment init = kmeans(x, k, seed);

    std::vector<double> weights(k, 0.0);
    Matrix means(k, p);
    std::vector<Matrix> covs(k, Matrix(p, p, 0.0));
    Matrix resp(n, k, 0.0);
    for (std::size_t i = 0; i < n; ++i) resp.at(i, init.labels[i]) = 1.0;

    auto m_step = [&]() {
        for (std::size_t c = 0; c < k; ++c) {
            double nc = 0.0;
            for (std::size_t i = 0; i < n; ++i) nc += resp.at(i, c);
            weights[c] = nc / static_cast<double>(n);
            for (std::size_t j = 0; j < p; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += resp.at(i, c) * x.at(i, j);
                means.at(c, j) = nc > 0.0 ? s / nc : 0.0;
            }
            Matrix& cov = covs[c];
            cov = Matrix(p, p, 0.0);
            if (covariance == Covariance::diagonal) {
                for (std::size_t j = 0; j < p; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        double d = x.at(i, j) - means.at(c, j);
                        s += resp.at(i, c) * d * d;
                    }
                    cov.at(j, j) = std::max(nc > 0.0 ? s / nc : kCovFloor, kCovFloor);
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    double r = resp.at(i, c);
                    if (r == 0.0) continue;
                    for (std::size_t a = 0; a < p; ++a) {
                        double da = x.at(i, a) - means.at(c, a);
                        for (std::size_t b = 0; b <= a; ++b)
                            cov.at(a, b) += r * da * (x.at(i, b) - means.at(c, b));
                    }
                }
                for (std::size_t a = 0; a < p; ++a)
                    for (std::size_t b = 0; b <= a; ++b) {
                        double v = nc > 0.0 ? cov.at(a, b) / nc : 0.0;
                        cov.at(a, b) = v;
                        cov.at(b, a) = v;
                    }
                for (std::size_t a = 0; a < p; ++a)
                    cov.at(a, a) = std::max(cov.at(a, a), kCovFloor);
            }
        }
    };

    GmmResult out;
    m_step();
    double prev_ll = -std::numeric_limits<double>::infinity();

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        std::vector<Matrix> chols(k);
        std::vector<double> log_dets(k, 0.0);
        if (covariance == Covariance::full) {
            for (std::size_t c = 0; c < k; ++c) {
                Matrix cov = covs[c];
                bool ok = cholesky(cov, chols[c]);
                if (!ok) {
                    for (std::size_t j = 0; j < p; ++j) cov.at(j, j) += kCovFloor;
                    ok = cholesky(cov, chols[c]);
                }
                if (!ok)
                    throw std::runtime_error("gmm_em: singular covariance in component " +
                                             std::to_string(c));
                for (std::size_t j = 0; j < p; ++j)
                    log_dets[c] += 2.0 * std::log(chols[c].at(j, j));
            }
        }

        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> logp(k);
            double max_lp = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                double lw = weights[c] > 0.0 ? std::log(weights[c])
                                             : -std::numeric_limits<double>::infinity();
                double lg = covariance == Covariance::diagonal
                                ? log_gaussian_diag(x.row(i), means.row(c), covs[c], p)
                                : log_gaussian_full(x.row(i), means.row(c), chols[c],
                                                    log_dets[c], p);
                logp[c] = lw + lg;
                max_lp = std::max(max_lp, logp[c]);
            }
            double denom = 0.0;
            for (std::size_t c = 0; c < k; ++c) denom += std::exp(logp[c] - max_lp);
            ll += max_lp + std::log(denom);
            for (std::size_t c = 0; c < k; ++c)
                resp.at(i, c) = std::exp(logp[c] - max_lp) / denom;
        }
        out.loglik_history.push_back(ll);
        m_step();
        if (iter > 0 && ll - prev_ll < 1e-8) break;
        prev_ll = ll;
    }

    std::vector<std::size_t> labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (resp.at(i, c) > best) {
                best = resp.at(i, c);
                labels[i] = c;
            }
    }

    std::vector<std::size_t> perm;
    canonicalize_by_size(labels, k, &perm);
    Matrix resp_canon(n, k);
    for (std::size_t new_c = 0; new_c < k; ++new_c)
        for (std::size_t i = 0; i < n; ++i) resp_canon.at(i, new_c) = resp.at(i, perm[new_c]);

    out.assignment.labels = std::move(labels);
    out.assignment.k = k;
    out.assignment.algorithm = ClusterAlgorithm::gmm;
    out.assignment.seed = seed;
    out.assignment.inertia_or_loglik =
        out.loglik_history.empty() ? 0.0 : out.loglik_history.back();
    out.responsibilities = std::move(resp_canon);
    return out;
}

ClusterAssignment spectral(const Matrix& x, std::size_t k, std::uint64_t seed, double gamma,
                           std::size_t restarts) {
    const std::size_t n = x.rows;
    if (k == 0 || k > n) throw std::invalid_argument("spectral: need 1 <= k <= n");
    if (gamma <= 0.0) gamma = 1.0 / static_cast<double>(x.cols);

    Matrix d2 = pairwise_squared_distances(x);
    Matrix w(n, n, 0.0);
    std::vector<double> degree(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double a = std::exp(-gamma * d2.at(i, j));
            w.at(i, j) = a;
            degree[i] += a;
        }
    for (std::size_t i = 0; i < n; ++i)
        if (degree[i] <= 0.0)
            throw std::runtime_error("spectral: sample " + std::to_string(i) +
                                     " is isolated (zero affinity degree); adjust gamma "
                                     "(a smaller gamma widens the kernel)");

    Matrix lap(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        lap.at(i, i) = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (w.at(i, j) == 0.0) continue;
            lap.at(i, j) -= w.at(i, j) / std::sqrt(degree[i] * degree[j]);
        }
    }

    EigenDecomposition eig = jacobi_eigen_symmetric(lap);
    Matrix embedding(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) embedding.at(i, c) = eig.vectors.at(i, c);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t c = 0; c < k; ++c) norm += embedding.at(i, c) * embedding.at(i, c);
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (std::size_t c = 0; c < k; ++c) embedding.at(i, c) /= norm;
    }

    ClusterAssignment out = kmeans(embedding, k, seed, 300, nullptr, restarts);
    out.algorithm = ClusterAlgorithm::spectral;
    return out;
}

namespace {

double pearson_column(const Matrix& f, std::size_t a, std::size_t b) {
    const std::size_t n = f.rows;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += f.at(i, a);
        mb += f.at(i, b);
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double da = f.at(i, a) - ma, db = f.at(i, b) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

Dendrogram hierarchical_corr(const Matrix& f, Linkage linkage,
                             const std::vector<std::string>* names) {
    const std::size_t n = f.cols;
    if (n < 2) throw std::invalid_argument("hierarchical_corr: need at least 2 features");
    for (std::size_t j = 0; j < n; ++j) {
        double first = f.at(0, j);
        bool constant = true;
        for (std::size_t i = 1; i < f.rows && constant; ++i) constant = f.at(i, j) == first;
        if (constant) {
            std::string name = names ? (*names)[j] : ("column " + std::to_string(j));
            throw std::runtime_error("hierarchical_corr: feature '" + name + "' is constant");
        }
    }

    Matrix dist(n, n, 0.0);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            double d = 1.0 - std::fabs(pearson_column(f, a, b));
            dist.at(a, b) = d;
            dist.at(b, a) = d;
        }

    std::vector<std::size_t> node_id(n), size(n, 1);
    std::iota(node_id.begin(), node_id.end(), 0);
    std::vector<bool> active(n, true);

    Dendrogram out;
    out.leaves = n;
    std::vector<std::vector<std::size_t>> children(2 * n - 1);

    for (std::size_t t = 0; t + 1 < n; ++t) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t a = 0; a < n; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < n; ++b) {
                if (!active[b]) continue;
                if (dist.at(a, b) < best) {
                    best = dist.at(a, b);
                    bi = a;
                    bj = b;
                }
            }
        }
        Dendrogram::Merge merge;
        merge.node_a = node_id[bi];
        merge.node_b = node_id[bj];
        merge.height = best;
        merge.size = size[bi] + size[bj];
        children[n + t] = {merge.node_a, merge.node_b};
        out.merges.push_back(merge);

        // Lance-Williams update against every other active cluster
        for (std::size_t c = 0; c < n; ++c) {
            if (!active[c] || c == bi || c == bj) continue;
            double dic = dist.at(bi, c), djc = dist.at(bj, c);
            double d = linkage == Linkage::average
                           ? (static_cast<double>(size[bi]) * dic +
                              static_cast<double>(size[bj]) * djc) /
                                 static_cast<double>(size[bi] + size[bj])
                           : std::max(dic, djc);
            dist.at(bi, c) = d;
            dist.at(c, bi) = d;
        }
        node_id[bi] = n + t;
        size[bi] += size[bj];
        active[bj] = false;
    }

    out.leaf_order.reserve(n);
    std::vector<std::size_t> stack = {2 * n - 2};
    while (!stack.empty()) {
        std::size_t node = stack.back();
        stack.pop_back();
        if (node < n) {
            out.leaf_order.push_back(node);
        } else {
            stack.push_back(children[node][1]);
            stack.push_back(children[node][0]);
        }
    }
    return out;
}

std::vector<std::size_t> cut_dendrogram(const Dendrogram& d, std::size_t n_groups) {
    const std::size_t n = d.leaves;
    if (n_groups == 0 || n_groups > n)
        throw std::invalid_argument("cut_dendrogram: need 1 <= n_groups <= leaves");

    // undoing the n_groups-1 highest merges == replaying the first n-n_groups
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    for (std::size_t t = 0; t + n_groups < n; ++t) {
        std::size_t root = n + t;
        parent[find(d.merges[t].node_a)] = root;
        parent[find(d.merges[t].node_b)] = root;
    }

    std::vector<std::size_t> group(n);
    std::vector<std::ptrdiff_t> group_of_root(2 * n - 1, -1);
    std::size_t next_group = 0;
    for (std::size_t leaf = 0; leaf < n; ++leaf) {
        std::size_t root = find(leaf);
        if (group_of_root[root] < 0)
            group_of_root[root] = static_cast<std::ptrdiff_t>(next_group++);
        group[leaf] = static_cast<std::size_t>(group_of_root[root]);
    }
    return group;
}

}  // namespace vqclust
