#include "vqclust/codebook.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace vqclust {

QuantizeResult quantize(const std::vector<double>& z_e, const Codebook& codebook,
                        std::size_t groups) {
    const std::size_t dc = codebook.code_dim();
    const std::size_t m = codebook.size();
    if (groups == 0 || z_e.size() != groups * dc)
        throw std::invalid_argument("quantize: latent dim must equal groups * code_dim");

    QuantizeResult res;
    res.z_q.resize(z_e.size());
    res.indices.resize(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const double* slot = z_e.data() + g * dc;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t c = 0; c < m; ++c) {
            double d = squared_distance(slot, codebook.vectors.row(c), dc);
            if (d < best) {
                best = d;
                best_idx = c;
            }
        }
        res.indices[g] = best_idx;
        const double* code = codebook.vectors.row(best_idx);
        for (std::size_t j = 0; j < dc; ++j) res.z_q[g * dc + j] = code[j];
    }
    return res;
}

std::vector<std::vector<double>> posterior(const std::vector<double>& z_e,
                                           const Codebook& codebook, std::size_t groups) {
    QuantizeResult q = quantize(z_e, codebook, groups);
    std::vector<std::vector<double>> rows(groups, std::vector<double>(codebook.size(), 0.0));
    for (std::size_t g = 0; g < groups; ++g) rows[g][q.indices[g]] = 1.0;
    return rows;
}

double codebook_perplexity(const std::vector<std::size_t>& code_indices, std::size_t m) {
    if (code_indices.empty()) throw std::invalid_argument("codebook_perplexity: empty indices");
    std::vector<double> counts(m, 0.0);
    for (std::size_t idx : code_indices) {
        if (idx >= m) throw std::invalid_argument("codebook_perplexity: index out of range");
        counts[idx] += 1.0;
    }
    const double n = static_cast<double>(code_indices.size());
    double entropy = 0.0;
    for (double c : counts) {
        if (c == 0.0) continue;
        double p = c / n;
        entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

}  // namespace vqclust
