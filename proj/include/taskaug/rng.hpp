// Counter-based random stream: a draw is a pure function of (key, counter),
// so replaying a stream or splitting substreams never depends on evaluation
// order. Substreams derive by key hashing and are disjoint for any practical
// number of draws.
#pragma once

#include <cmath>
#include <cstdint>

#include "taskaug/tensor.hpp"

namespace taskaug {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}
}  // namespace detail

struct RngStream {
    std::uint64_t key = 0;
    std::uint64_t counter = 0;

    static RngStream from_seed(std::uint64_t seed) {
        return RngStream{detail::mix64(seed + 0x9E3779B97F4A7C15ULL), 0};
    }

    // Independent substream; does not advance this stream's counter.
    RngStream child(std::uint64_t k) const {
        return RngStream{detail::mix64(key ^ detail::mix64(k + 0xD1B54A32D192ED03ULL)), 0};
    }

    std::uint64_t next_u64() {
        ++counter;
        return detail::mix64(key + 0x9E3779B97F4A7C15ULL * counter);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // (0, 1], safe under log()
    double uniform_pos() { return 1.0 - uniform(); }

    // Box-Muller; consumes two uniforms per call.
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gumbel() { return -std::log(-std::log(uniform_pos())); }

    Tensor uniform_tensor(std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.data) v = uniform();
        return t;
    }

    Tensor normal_tensor(std::vector<std::size_t> shape) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.data) v = normal();
        return t;
    }

    // Fisher-Yates over [0, n)
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = next_u64() % i;
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }
};

}  // namespace taskaug
