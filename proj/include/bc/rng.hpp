#pragma once

#include <cstdint>
#include <random>

#include "bc/tensor.hpp"

namespace bc {

// Seeded RNG used everywhere noise or shuffles are drawn. Deterministic for a
// given seed on a given platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::uint64_t integer(std::uint64_t upper) { // in [0, upper)
        return std::uniform_int_distribution<std::uint64_t>(0, upper - 1)(engine_);
    }

    Tensor normal_tensor(Shape s) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = normal();
        return t;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace bc
