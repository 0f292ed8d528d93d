#pragma once

#include <string>
#include <vector>

#include "bc/layers.hpp"
#include "bc/prune.hpp"

namespace bc {

// Sign bit is always present and excluded from these counts.
struct FloatFormat {
    int exponent_bits; // w >= 2
    int mantissa_bits; // p >= 1, excluding the implicit leading bit
};

struct FormatLimits {
    double underflow;     // smallest positive normal, 2^(2 - 2^(w-1))
    double overflow;      // (2 - 2^-p) 2^(2^(w-1) - 1)
    double unit_roundoff; // 2^-p
};

FormatLimits format_limits(const FloatFormat& fmt);

enum class RoundoffRule { SqrtMeanVariance, MeanVariance };

std::string roundoff_rule_name(RoundoffRule r);

struct MantissaBits {
    int bits;
    bool clamped; // u >= 1 forced p = 1
};

// p = ceil(-log2 u), clamped to [1, 23]. DomainError for u <= 0.
MantissaBits mantissa_bits_from_roundoff(double u);

struct QuantLayer {
    std::size_t layer = 0;
    double mean_var = 0.0;      // over retained weights
    double unit_roundoff = 0.0;
    int mantissa_bits = 0;
    int total_bits = 0;         // mantissa + 3 exponent + 1 sign
    bool clamped = false;
    bool fully_pruned = false;  // no retained weights; 0 bits
};

struct QuantReport {
    RoundoffRule rule = RoundoffRule::SqrtMeanVariance;
    std::vector<QuantLayer> layers;
};

// Per-layer bit precision from the mean posterior marginal variance of the
// retained weights.
QuantReport assign_bits(const Network& net, const PruneReport& prune,
                        RoundoffRule rule = RoundoffRule::SqrtMeanVariance);

} // namespace bc
