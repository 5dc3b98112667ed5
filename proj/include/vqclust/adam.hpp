#pragma once

#include <cstdint>
#include <vector>

#include "vqclust/tensor.hpp"

namespace vqclust {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;

    void init(const std::vector<Tensor>& params) {
        first_moment.clear();
        second_moment.clear();
        for (const auto& p : params) {
            first_moment.emplace_back(p.shape, 0.0);
            second_moment.emplace_back(p.shape, 0.0);
        }
        step = 0;
    }
};

// Standard Adam update with bias correction; increments the step counter.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace vqclust
