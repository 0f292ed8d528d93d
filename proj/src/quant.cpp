#include "bc/quant.hpp"

#include <cmath>

namespace bc {

FormatLimits format_limits(const FloatFormat& fmt) {
    if (fmt.exponent_bits < 2 || fmt.mantissa_bits < 1)
        throw DomainError("format_limits: need w >= 2, p >= 1");
    double half_range = std::exp2(fmt.exponent_bits - 1);
    FormatLimits lim;
    lim.underflow = std::exp2(2.0 - half_range);
    lim.overflow = (2.0 - std::exp2(-fmt.mantissa_bits)) * std::exp2(half_range - 1.0);
    lim.unit_roundoff = std::exp2(-fmt.mantissa_bits);
    return lim;
}

std::string roundoff_rule_name(RoundoffRule r) {
    return r == RoundoffRule::SqrtMeanVariance ? "sqrt_mean_variance" : "mean_variance";
}

MantissaBits mantissa_bits_from_roundoff(double u) {
    if (!(u > 0.0)) throw DomainError("mantissa_bits_from_roundoff: u must be positive");
    if (u >= 1.0) return {1, true};
    int p = static_cast<int>(std::ceil(-std::log2(u)));
    if (p < 1) return {1, true};
    if (p > 23) return {23, false};
    return {p, false};
}

QuantReport assign_bits(const Network& net, const PruneReport& prune, RoundoffRule rule) {
    QuantReport rep;
    rep.rule = rule;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const LayerPruneInfo& info = prune.layers[li];
        Tensor V = net.layers[li]->marginal_variance();
        double sum = 0.0;
        std::size_t n = 0;
        const Shape& ws = V.shape;
        if (ws.size() == 2) {
            for (std::size_t i = 0; i < ws[0]; ++i) {
                if (!info.keep_in[i]) continue;
                for (std::size_t j = 0; j < ws[1]; ++j)
                    if (info.keep_out[j]) { sum += V.at(i, j); ++n; }
            }
        } else {
            for (std::size_t a = 0; a < ws[0] * ws[1]; ++a)
                for (std::size_t c = 0; c < ws[2]; ++c) {
                    if (!info.keep_in[c]) continue;
                    for (std::size_t f = 0; f < ws[3]; ++f)
                        if (info.keep_out[f]) { sum += V[(a * ws[2] + c) * ws[3] + f]; ++n; }
                }
        }
        QuantLayer q;
        q.layer = li;
        if (n == 0) {
            q.fully_pruned = true;
            rep.layers.push_back(q);
            continue;
        }
        q.mean_var = sum / static_cast<double>(n);
        q.unit_roundoff = rule == RoundoffRule::SqrtMeanVariance ? std::sqrt(q.mean_var)
                                                                 : q.mean_var;
        MantissaBits mb = mantissa_bits_from_roundoff(q.unit_roundoff);
        q.mantissa_bits = mb.bits;
        q.clamped = mb.clamped;
        q.total_bits = mb.bits + 3 + 1;
        rep.layers.push_back(q);
    }
    return rep;
}

} // namespace bc
