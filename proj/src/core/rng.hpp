#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "core/tensor.hpp"

namespace gadan {

/// Seeded random source. Sampling is stateless beyond the engine itself
/// (no cached spare normals), so serializing the engine captures the full
/// stream position -- required for checkpoint resume equivalence.
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        // Rejection to avoid modulo bias.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller; the second value of each pair is
    /// discarded so the engine state alone determines the stream.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Tensor normal_tensor(std::vector<int64_t> shape, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * normal();
        return t;
    }

    /// Derive an independent engine for a subsystem.
    Rng fork() { return Rng(engine_()); }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void deserialize(const std::string& state) {
        std::istringstream is(state);
        is >> engine_;
        if (!is) throw std::runtime_error("Rng: bad serialized state");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace gadan
