#include "vqclust/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace vqclust {

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.first_moment[i]))
            throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(i));

    state.step += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i].data;
        auto& v = state.second_moment[i].data;
        auto& p = params[i].data;
        const auto& g = grads[i].data;
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            double m_hat = m[j] / bc1;
            double v_hat = v[j] / bc2;
            p[j] -= state.cfg.lr * m_hat / (std::sqrt(v_hat) + state.cfg.eps);
        }
    }
}

}  // namespace vqclust
