#include "vqclust/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vqclust {

namespace {

std::string double_to_hex(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

double hex_to_double(const std::string& s) {
    std::uint64_t bits = std::stoull(s, nullptr, 16);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw std::runtime_error("checkpoint: no tensor named '" + name + "'");
}

std::string Checkpoint::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return v;
    throw std::runtime_error("checkpoint: no meta key '" + key + "'");
}

bool Checkpoint::has_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return true;
    return false;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "vqclust-checkpoint 1\n";
    out << "seed " << seed << "\n";
    out << "step " << step << "\n";
    for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
    for (const auto& [name, t] : tensors) {
        out << "tensor " << name << " " << t.rank();
        for (std::size_t d : t.shape) out << " " << d;
        out << "\n";
        for (std::size_t i = 0; i < t.size(); ++i) {
            out << double_to_hex(t.data[i]);
            out << (((i + 1) % 8 == 0 || i + 1 == t.size()) ? "\n" : " ");
        }
    }
    out << "end\n";
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "vqclust-checkpoint 1")
        throw std::runtime_error(path + ": not a checkpoint file");

    Checkpoint ck;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "end") break;
        if (tag == "seed") {
            ss >> ck.seed;
        } else if (tag == "step") {
            ss >> ck.step;
        } else if (tag == "meta") {
            std::string key, rest;
            ss >> key;
            std::getline(ss, rest);
            if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
            ck.meta.emplace_back(key, rest);
        } else if (tag == "tensor") {
            std::string name;
            std::size_t rank = 0;
            ss >> name >> rank;
            std::vector<std::size_t> shape(rank);
            for (auto& d : shape) ss >> d;
            Tensor t(shape);
            std::size_t read = 0;
            while (read < t.size()) {
                std::string hex;
                if (!(in >> hex)) throw std::runtime_error(path + ": truncated tensor " + name);
                t.data[read++] = hex_to_double(hex);
            }
            std::getline(in, line);  // consume rest of the last value line
            ck.tensors.emplace_back(name, std::move(t));
        } else {
            throw std::runtime_error(path + ": unknown record '" + tag + "'");
        }
    }
    return ck;
}

}  // namespace vqclust
