#pragma once

#include <set>
#include <string>
#include <vector>

#include "vqclust/expression.hpp"

namespace vqclust {

// ---- special functions ----

// Lanczos approximation, |relative error| < 1e-12 on [0.5, 170].
double special_lgamma(double x);

// Lower regularized incomplete gamma P(s, x); series for x < s+1, continued
// fraction otherwise. Domain s > 0, x >= 0.
double regularized_incomplete_gamma(double s, double x);

// Regularized incomplete beta I_x(a, b) via Lentz continued fractions.
double regularized_incomplete_beta(double a, double b, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chi_square_upper_tail(double x, double df);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
};

// Welch's two-sample t-test from summary statistics (unbiased variances).
WelchResult welch_t_test(double mean1, double var1, std::size_t n1, double mean2, double var2,
                         std::size_t n2);

// Benjamini-Hochberg adjusted values, in the input order.
std::vector<double> benjamini_hochberg(const std::vector<double>& p_values);

// P(X >= x) drawing n from a population of size total with k successes,
// computed through lgamma log-binomials.
double hypergeometric_upper_tail(std::size_t total, std::size_t k, std::size_t n, std::size_t x);

// ---- differential expression ----

enum class DegStatus { up, down, ns };

const char* deg_status_name(DegStatus s);

struct DegResult {
    std::string feature_id;
    double log2_fold_change = 0.0;  // in-group mean minus out-group mean (log2 data)
    double p_value = 1.0;
    double q_value = 1.0;
    DegStatus status = DegStatus::ns;
};

// Welch test per feature with BH correction. Requires >= 2 samples per group.
std::vector<DegResult> deg(const ExpressionMatrix& x, const std::vector<bool>& in_group,
                           double lfc_threshold = 1.0, double q_threshold = 0.05);

// ---- gene-set overrepresentation ----

struct GeneSet {
    std::string set_id;
    std::string description;
    std::set<std::string> members;
};

// GMT: one set per line, set_id <TAB> description <TAB> member1 <TAB> ...
std::vector<GeneSet> load_gmt(const std::string& path);

struct EnrichResult {
    std::string set_id;
    std::size_t set_size = 0;  // after intersecting with the universe
    std::size_t overlap = 0;
    double p = 1.0;
    double q = 1.0;
};

// Upper-tail hypergeometric test per set, BH across sets. The query must be
// a subset of the universe; sets are intersected with the universe first.
std::vector<EnrichResult> enrich(const std::set<std::string>& query,
                                 const std::vector<GeneSet>& sets,
                                 const std::set<std::string>& universe);

// ---- survival ----

struct SurvivalRecord {
    std::string sample_id;
    double time = 0.0;
    bool event = false;  // true = event observed, false = censored
    std::size_t group = 0;
};

struct KmCurve {
    std::vector<double> times;        // distinct event times, ascending
    std::vector<std::size_t> at_risk;  // n_i just before each event time
    std::vector<std::size_t> events;   // d_i at each event time
    std::vector<double> survival;      // S(t_i), non-increasing from 1
};

// Product-limit estimator; at tied times events precede censorings.
KmCurve km_curve(const std::vector<SurvivalRecord>& records);

struct LogrankResult {
    double chi_square = 0.0;
    std::size_t df = 0;
    double p = 1.0;
};

// k-sample log-rank test with the hypergeometric covariance of the
// observed-minus-expected event counts.
LogrankResult logrank(const std::vector<SurvivalRecord>& records, std::size_t k);

}  // namespace vqclust
