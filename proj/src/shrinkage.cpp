#include "bc/shrinkage.hpp"

#include <algorithm>
#include <cmath>

#include "bc/error.hpp"
#include "bc/rng.hpp"

namespace bc {

std::vector<double> sample_half_cauchy(double s, std::size_t n, std::uint64_t seed) {
    if (!(s > 0.0)) throw DomainError("sample_half_cauchy: scale must be positive");
    Rng rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = std::abs(s * std::tan(M_PI * rng.uniform() / 2.0));
    return out;
}

double shrinkage(double z) { return 1.0 / (1.0 + z * z); }

std::vector<double> shrinkage_map(const std::vector<double>& z) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = shrinkage(z[i]);
    return out;
}

namespace {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double betacf(double a, double b, double x) {
    constexpr int max_it = 300;
    constexpr double eps = 1e-14, tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_it; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace

double reg_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw DomainError("reg_incomplete_beta: a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double ks_against_beta(std::vector<double> lambdas, double a, double b) {
    if (lambdas.empty()) throw DomainError("ks_against_beta: empty sample");
    std::sort(lambdas.begin(), lambdas.end());
    double n = static_cast<double>(lambdas.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        double cdf = reg_incomplete_beta(a, b, lambdas[i]);
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
        ks = std::max(ks, std::abs(static_cast<double>(i + 1) / n - cdf));
    }
    return ks;
}

double beta_inv_cdf(double a, double b, double p) {
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (reg_incomplete_beta(a, b, mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> sample_beta(double a, double b, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(n);
    for (double& v : out) v = beta_inv_cdf(a, b, rng.uniform());
    return out;
}

double endpoint_mass(const std::vector<double>& lambdas, double eps) {
    std::size_t k = 0;
    for (double v : lambdas)
        if (v <= eps || v >= 1.0 - eps) ++k;
    return lambdas.empty() ? 0.0 : static_cast<double>(k) / static_cast<double>(lambdas.size());
}

} // namespace bc
