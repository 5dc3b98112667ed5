#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vqclust/tensor.hpp"

namespace vqclust {

// Self-describing text container for parameter tensors. Values are stored as
// the hex bit pattern of each double, so save/load round-trips bit-exactly.
struct Checkpoint {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::vector<std::pair<std::string, std::string>> meta;     // config echo
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add_meta(const std::string& key, const std::string& value) {
        meta.emplace_back(key, value);
    }
    void add_tensor(const std::string& name, Tensor t) {
        tensors.emplace_back(name, std::move(t));
    }
    const Tensor& tensor(const std::string& name) const;
    std::string meta_value(const std::string& key) const;
    bool has_meta(const std::string& key) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace vqclust
