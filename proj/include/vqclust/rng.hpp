#pragma once

#include <cstdint>
#include <cmath>
#include <cstddef>
#include <vector>

namespace vqclust {

// Deterministic PRNG with hand-rolled distributions. std::normal_distribution
// and friends are implementation-defined, so every stream the project emits
// goes through this generator to keep reruns byte-identical.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // splitmix64 expansion of the seed into xoshiro256** state
        std::uint64_t x = seed;
        for (int i = 0; i < 4; ++i) state_[i] = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1) with 53 bits of precision
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    // standard normal via Box-Muller (cached second value)
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stage seeds are derived from one root seed plus a stage counter, so each
// pipeline stage can be rerun on its own and still reproduce exactly.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stage) {
    std::uint64_t x = root ^ (0x632be59bd9b4e019ULL * (stage + 1));
    return Rng::splitmix64(x);
}

}  // namespace vqclust
