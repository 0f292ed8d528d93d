#include "bc/dists.hpp"

#include <cmath>
#include <limits>

#include "bc/error.hpp"

namespace bc {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

void require_positive(double v, const char* name) {
    if (!(v > 0.0)) throw DomainError(std::string(name) + " must be positive");
}

} // namespace

double GaussianParams::sigma2() const { return std::exp(log_sigma2); }

double kl_conditional_gaussian(double mu, double sigma2) {
    require_positive(sigma2, "sigma2");
    return 0.5 * (-std::log(sigma2) + sigma2 + mu * mu - 1.0);
}

double neg_kl_nj_scale(double log_alpha) {
    if (!std::isfinite(log_alpha)) {
        // Limits: alpha -> inf gives 0 (fully noisy group), alpha -> 0 gives -inf.
        return log_alpha > 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    return NJConstants::k1 * sigmoid(NJConstants::k2 + NJConstants::k3 * log_alpha) -
           0.5 * softplus(-log_alpha) - NJConstants::k1;
}

double lognormal_entropy(double mu, double sigma2) {
    require_positive(sigma2, "sigma2");
    return 0.5 * std::log(sigma2) + mu + 0.5 + 0.5 * kLog2Pi;
}

double neg_kl_lognormal_from_invgamma(const LogNormalParams& q, double alpha, double beta) {
    require_positive(alpha, "alpha");
    require_positive(beta, "beta");
    double s2 = q.sigma2();
    return alpha * std::log(beta) - std::lgamma(alpha) - alpha * q.mu -
           beta * std::exp(-q.mu + 0.5 * s2) +
           0.5 * (q.log_sigma2 + 1.0 + kLog2Pi);
}

double neg_kl_lognormal_from_gamma(const LogNormalParams& q, double alpha, double beta) {
    require_positive(alpha, "alpha");
    require_positive(beta, "beta");
    double s2 = q.sigma2();
    return -alpha * std::log(beta) - std::lgamma(alpha) + alpha * q.mu -
           std::exp(q.mu + 0.5 * s2) / beta +
           0.5 * (q.log_sigma2 + 1.0 + kLog2Pi);
}

double horseshoe_scale_neg_kl(const LogNormalParams& s_a, const LogNormalParams& s_b,
                              const std::vector<LogNormalParams>& alphas,
                              const std::vector<LogNormalParams>& betas, double tau0) {
    require_positive(tau0, "tau0");
    if (alphas.size() != betas.size())
        throw DomainError("horseshoe_scale_neg_kl: alpha/beta group counts differ");
    double total = neg_kl_lognormal_from_gamma(s_a, 0.5, tau0 * tau0) +
                   neg_kl_lognormal_from_invgamma(s_b, 0.5, 1.0);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        total += neg_kl_lognormal_from_gamma(alphas[i], 0.5, 1.0);
        total += neg_kl_lognormal_from_invgamma(betas[i], 0.5, 1.0);
    }
    return total;
}

} // namespace bc
