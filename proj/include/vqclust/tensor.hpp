#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqclust {

// Dense row-major tensor. Rank 1 and 2 cover everything the models need.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(count(shape), fill);
    }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }

    static Tensor vector1d(std::vector<double> v) {
        Tensor t;
        t.shape = {v.size()};
        t.data = std::move(v);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        if (v.size() != rows * cols) throw std::invalid_argument("Tensor::matrix: size mismatch");
        Tensor t;
        t.shape = {rows, cols};
        t.data = std::move(v);
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return rank() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }
};

inline std::string shape_string(const Tensor& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape[i]);
    }
    return s + ")";
}

}  // namespace vqclust
