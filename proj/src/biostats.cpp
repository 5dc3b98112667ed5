#include "vqclust/biostats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "vqclust/eigen.hpp"
#include "vqclust/parallel.hpp"

namespace vqclust {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;

double lgamma_positive(double x) {
    // Lanczos g=7, n=9
    static const double coeffs[] = {
        0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
        771.32342877765313,   -176.61502916214059,   12.507343278686905,
        -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
    double z = x - 1.0;
    double a = coeffs[0];
    for (int i = 1; i < 9; ++i) a += coeffs[i] / (z + static_cast<double>(i));
    double t = z + 7.5;
    return kHalfLog2Pi + (z + 0.5) * std::log(t) - t + std::log(a);
}

}  // namespace

double special_lgamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("special_lgamma: domain requires x > 0");
    if (x < 0.5) {
        // reflection keeps the Lanczos series in its accurate range
        return std::log(M_PI / std::sin(M_PI * x)) - lgamma_positive(1.0 - x);
    }
    return lgamma_positive(x);
}

namespace {

double gamma_p_series(double s, double x) {
    double sum = 1.0 / s;
    double term = sum;
    for (int n = 1; n < 1000; ++n) {
        term *= x / (s + static_cast<double>(n));
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + s * std::log(x) - special_lgamma(s));
}

double gamma_q_continued_fraction(double s, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 1000; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + s * std::log(x) - special_lgamma(s)) * h;
}

}  // namespace

double regularized_incomplete_gamma(double s, double x) {
    if (!(s > 0.0)) throw std::invalid_argument("regularized_incomplete_gamma: s must be > 0");
    if (!(x >= 0.0)) throw std::invalid_argument("regularized_incomplete_gamma: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (x < s + 1.0) return gamma_p_series(s, x);
    return 1.0 - gamma_q_continued_fraction(s, x);
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-15) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0))
        throw std::invalid_argument("regularized_incomplete_beta: a and b must be > 0");
    if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument("regularized_incomplete_beta: x must be in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double bt = std::exp(special_lgamma(a + b) - special_lgamma(a) - special_lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_continued_fraction(a, b, x) / a;
    return 1.0 - bt * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double chi_square_upper_tail(double x, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("chi_square_upper_tail: df must be > 0");
    if (!(x >= 0.0)) throw std::invalid_argument("chi_square_upper_tail: x must be >= 0");
    return 1.0 - regularized_incomplete_gamma(df / 2.0, x / 2.0);
}

WelchResult welch_t_test(double mean1, double var1, std::size_t n1, double mean2, double var2,
                         std::size_t n2) {
    if (n1 < 2 || n2 < 2) throw std::invalid_argument("welch_t_test: need >= 2 samples per group");
    WelchResult res;
    double se1 = var1 / static_cast<double>(n1);
    double se2 = var2 / static_cast<double>(n2);
    double se = se1 + se2;
    if (se <= 0.0) {
        // both groups constant: identical means give the null result, any
        // difference is infinitely significant
        if (mean1 == mean2) {
            res.t = 0.0;
            res.df = static_cast<double>(n1 + n2 - 2);
            res.p = 1.0;
        } else {
            res.t = mean1 > mean2 ? std::numeric_limits<double>::infinity()
                                  : -std::numeric_limits<double>::infinity();
            res.df = static_cast<double>(n1 + n2 - 2);
            res.p = 0.0;
        }
        return res;
    }
    res.t = (mean1 - mean2) / std::sqrt(se);
    res.df = se * se / (se1 * se1 / static_cast<double>(n1 - 1) +
                        se2 * se2 / static_cast<double>(n2 - 1));
    double t2 = res.t * res.t;
    res.p = regularized_incomplete_beta(res.df / 2.0, 0.5, res.df / (res.df + t2));
    return res;
}

std::vector<double> benjamini_hochberg(const std::vector<double>& p_values) {
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

    std::vector<double> q(m, 0.0);
    double running_min = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        double adj = p_values[order[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
        running_min = std::min(running_min, adj);
        q[order[r]] = running_min;
    }
    return q;
}

namespace {

double log_choose(std::size_t n, std::size_t k) {
    if (k > n) return -std::numeric_limits<double>::infinity();
    return special_lgamma(static_cast<double>(n) + 1.0) -
           special_lgamma(static_cast<double>(k) + 1.0) -
           special_lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace

double hypergeometric_upper_tail(std::size_t total, std::size_t k, std::size_t n,
                                 std::size_t x) {
    if (k > total || n > total)
        throw std::invalid_argument("hypergeometric_upper_tail: k and n must not exceed total");
    std::size_t hi = std::min(k, n);
    if (x == 0) return 1.0;
    if (x > hi) return 0.0;
    double log_denom = log_choose(total, n);
    double p = 0.0;
    for (std::size_t i = x; i <= hi; ++i) {
        if (n - i > total - k) continue;  // impossible draw
        p += std::exp(log_choose(k, i) + log_choose(total - k, n - i) - log_denom);
    }
    return std::min(p, 1.0);
}

const char* deg_status_name(DegStatus s) {
    switch (s) {
        case DegStatus::up: return "up";
        case DegStatus::down: return "down";
        case DegStatus::ns: return "ns";
    }
    return "?";
}

std::vector<DegResult> deg(const ExpressionMatrix& x, const std::vector<bool>& in_group,
                           double lfc_threshold, double q_threshold) {
    const std::size_t n = x.n_samples();
    if (in_group.size() != n) throw std::invalid_argument("deg: mask length must match samples");
    std::size_t n_in = 0;
    for (bool b : in_group) n_in += b ? 1 : 0;
    std::size_t n_out = n - n_in;
    if (n_in < 2 || n_out < 2)
        throw std::invalid_argument("deg: both groups need at least 2 samples (got " +
                                    std::to_string(n_in) + " and " + std::to_string(n_out) + ")");

    const std::size_t f = x.n_features();
    std::vector<DegResult> results(f);
    parallel_for(f, [&](std::size_t j) {
        double sum_in = 0.0, sum_out = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            (in_group[i] ? sum_in : sum_out) += x.values.at(i, j);
        double mean_in = sum_in / static_cast<double>(n_in);
        double mean_out = sum_out / static_cast<double>(n_out);
        double ss_in = 0.0, ss_out = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double v = x.values.at(i, j);
            if (in_group[i]) {
                ss_in += (v - mean_in) * (v - mean_in);
            } else {
                ss_out += (v - mean_out) * (v - mean_out);
            }
        }
        double var_in = ss_in / static_cast<double>(n_in - 1);
        double var_out = ss_out / static_cast<double>(n_out - 1);

        DegResult& r = results[j];
        r.feature_id = x.feature_ids[j];
        r.log2_fold_change = mean_in - mean_out;  // data are already log2
        r.p_value = welch_t_test(mean_in, var_in, n_in, mean_out, var_out, n_out).p;
    });

    std::vector<double> pvals(f);
    for (std::size_t j = 0; j < f; ++j) pvals[j] = results[j].p_value;
    std::vector<double> qvals = benjamini_hochberg(pvals);
    for (std::size_t j = 0; j < f; ++j) {
        results[j].q_value = qvals[j];
        if (results[j].q_value < q_threshold && results[j].log2_fold_change > lfc_threshold)
            results[j].status = DegStatus::up;
        else if (results[j].q_value < q_threshold &&
                 results[j].log2_fold_change < -lfc_threshold)
            results[j].status = DegStatus::down;
        else
            results[j].status = DegStatus::ns;
    }
    return results;
}

std::vector<GeneSet> load_gmt(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<GeneSet> sets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        GeneSet set;
        if (!std::getline(ss, set.set_id, '\t') || set.set_id.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing set id");
        if (!std::getline(ss, set.description, '\t'))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": missing description field");
        while (std::getline(ss, field, '\t'))
            if (!field.empty()) set.members.insert(field);
        if (set.members.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": set '" +
                                     set.set_id + "' has no members");
        sets.push_back(std::move(set));
    }
    return sets;
}

std::vector<EnrichResult> enrich(const std::set<std::string>& query,
                                 const std::vector<GeneSet>& sets,
                                 const std::set<std::string>& universe) {
    std::vector<std::string> offenders;
    for (const auto& g : query)
        if (!universe.count(g)) offenders.push_back(g);
    if (!offenders.empty()) {
        std::string msg = "enrich: query genes outside the universe:";
        for (const auto& g : offenders) msg += " " + g;
        throw std::invalid_argument(msg);
    }

    std::vector<EnrichResult> results;
    std::vector<double> pvals;
    for (const auto& set : sets) {
        EnrichResult r;
        r.set_id = set.set_id;
        std::size_t in_universe = 0, overlap = 0;
        for (const auto& g : set.members) {
            if (!universe.count(g)) continue;
            ++in_universe;
            if (query.count(g)) ++overlap;
        }
        r.set_size = in_universe;
        r.overlap = overlap;
        r.p = hypergeometric_upper_tail(universe.size(), in_universe, query.size(), overlap);
        pvals.push_back(r.p);
        results.push_back(std::move(r));
    }
    std::vector<double> qvals = benjamini_hochberg(pvals);
    for (std::size_t i = 0; i < results.size(); ++i) results[i].q = qvals[i];
    return results;
}

namespace {

std::vector<SurvivalRecord> sorted_by_time(const std::vector<SurvivalRecord>& records) {
    std::vector<SurvivalRecord> sorted = records;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const SurvivalRecord& a, const SurvivalRecord& b) {
                         return a.time < b.time;
                     });
    return sorted;
}

}  // namespace

KmCurve km_curve(const std::vector<SurvivalRecord>& records) {
    if (records.empty()) throw std::invalid_argument("km_curve: no records");
    for (const auto& r : records)
        if (!(r.time >= 0.0)) throw std::invalid_argument("km_curve: negative time");

    std::vector<SurvivalRecord> sorted = sorted_by_time(records);
    KmCurve curve;
    double survival = 1.0;
    std::size_t i = 0;
    const std::size_t n = sorted.size();
    while (i < n) {
        double t = sorted[i].time;
        std::size_t at_risk = n - i;  // events precede censorings at equal times
        std::size_t deaths = 0;
        std::size_t j = i;
        while (j < n && sorted[j].time == t) {
            if (sorted[j].event) ++deaths;
            ++j;
        }
        if (deaths > 0) {
            survival *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
            curve.times.push_back(t);
            curve.at_risk.push_back(at_risk);
            curve.events.push_back(deaths);
            curve.survival.push_back(survival);
        }
        i = j;
    }
    return curve;
}

LogrankResult logrank(const std::vector<SurvivalRecord>& records, std::size_t k) {
    if (k < 2) throw std::invalid_argument("logrank: need at least 2 groups");
    std::vector<std::size_t> group_sizes(k, 0);
    for (const auto& r : records) {
        if (r.group >= k)
            throw std::invalid_argument("logrank: record group " + std::to_string(r.group) +
                                        " out of range for k=" + std::to_string(k));
        group_sizes[r.group]++;
    }
    for (std::size_t g = 0; g < k; ++g)
        if (group_sizes[g] == 0)
            throw std::invalid_argument("logrank: group " + std::to_string(g) + " is empty");
    bool any_event = false;
    for (const auto& r : records) any_event = any_event || r.event;
    if (!any_event) throw std::invalid_argument("logrank: no events; test undefined");

    std::vector<SurvivalRecord> sorted = sorted_by_time(records);
    const std::size_t n = sorted.size();

    std::vector<double> observed(k, 0.0), expected(k, 0.0);
    Matrix covariance(k, k, 0.0);

    std::size_t i = 0;
    std::vector<std::size_t> at_risk(k, 0);
    for (const auto& r : sorted) at_risk[r.group]++;

    while (i < n) {
        double t = sorted[i].time;
        std::vector<std::size_t> deaths(k, 0);
        std::size_t j = i;
        while (j < n && sorted[j].time == t) {
            if (sorted[j].event) deaths[sorted[j].group]++;
            ++j;
        }
        double big_n = 0.0, big_d = 0.0;
        for (std::size_t g = 0; g < k; ++g) {
            big_n += static_cast<double>(at_risk[g]);
            big_d += static_cast<double>(deaths[g]);
        }
        if (big_d > 0.0) {
            for (std::size_t g = 0; g < k; ++g) {
                double ng = static_cast<double>(at_risk[g]);
                observed[g] += static_cast<double>(deaths[g]);
                expected[g] += big_d * ng / big_n;
            }
            if (big_n > 1.0) {
                double factor = big_d * (big_n - big_d) / (big_n - 1.0);
                for (std::size_t a = 0; a < k; ++a) {
                    double pa = static_cast<double>(at_risk[a]) / big_n;
                    for (std::size_t b = 0; b < k; ++b) {
                        double pb = static_cast<double>(at_risk[b]) / big_n;
                        covariance.at(a, b) += factor * pa * ((a == b ? 1.0 : 0.0) - pb);
                    }
                }
            }
        }
        for (std::size_t r = i; r < j; ++r) at_risk[sorted[r].group]--;
        i = j;
    }

    // quadratic form over the first k-1 groups (the covariance matrix of all
    // k is singular because its rows sum to zero); the pseudo-inverse keeps
    // degenerate directions from blowing up
    const std::size_t m = k - 1;
    std::vector<double> diff(m);
    for (std::size_t g = 0; g < m; ++g) diff[g] = observed[g] - expected[g];
    Matrix v(m, m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) v.at(a, b) = covariance.at(a, b);

    EigenDecomposition eig = jacobi_eigen_symmetric(v);
    double max_eigenvalue = 0.0;
    for (double lambda : eig.values) max_eigenvalue = std::max(max_eigenvalue, lambda);
    const double tol = 1e-10 * std::max(max_eigenvalue, 1.0);

    LogrankResult res;
    res.df = k - 1;
    res.chi_square = 0.0;
    for (std::size_t e = 0; e < m; ++e) {
        if (eig.values[e] <= tol) continue;
        double proj = 0.0;
        for (std::size_t g = 0; g < m; ++g) proj += eig.vectors.at(g, e) * diff[g];
        res.chi_square += proj * proj / eig.values[e];
    }
    res.p = chi_square_upper_tail(res.chi_square, static_cast<double>(res.df));
    return res;
}

}  // namespace vqclust
