#pragma once

#include <cstddef>
#include <vector>

namespace bc {

// mu / log-variance pair of a Gaussian, or of the normal underlying a
// log-normal.
struct GaussianParams {
    double mu = 0.0;
    double log_sigma2 = 0.0;
    double sigma2() const;
};
using LogNormalParams = GaussianParams;

// Fitted constants of the normal-Jeffreys scale KL approximation. Fixed,
// never user-configurable.
struct NJConstants {
    static constexpr double k1 = 0.63576;
    static constexpr double k2 = 1.87320;
    static constexpr double k3 = 1.48695;
};

// KL(N(mu, sigma2) || N(0, 1)) = 0.5 (log(1/sigma2) + sigma2 + mu^2 - 1).
// Per-weight term of the conditional weight KL; sums over a matrix.
double kl_conditional_gaussian(double mu, double sigma2);

// Approximate -KL(q(z)||p(z)) per group under the normal-Jeffreys scale
// prior, as a function of log alpha = log sigma2_z - log mu_z^2.
// Monotone nondecreasing, bounded above by 0.
double neg_kl_nj_scale(double log_alpha);

// Entropy of LN(mu, sigma2): 0.5 log sigma2 + mu + 0.5 + 0.5 log(2 pi).
double lognormal_entropy(double mu, double sigma2);

// -KL(LN(q) || InverseGamma(alpha, beta)), scale parametrization.
double neg_kl_lognormal_from_invgamma(const LogNormalParams& q, double alpha, double beta);

// -KL(LN(q) || Gamma(alpha, beta)), scale parametrization.
double neg_kl_lognormal_from_gamma(const LogNormalParams& q, double alpha, double beta);

// Total -KL over the horseshoe scale hierarchy of one layer:
//   s_a ~ Gamma(0.5, tau0^2), s_b ~ InverseGamma(0.5, 1),
//   alpha_i ~ Gamma(0.5, 1),  beta_i ~ InverseGamma(0.5, 1),
// each with a log-normal posterior. Composed from the general formulas above.
double horseshoe_scale_neg_kl(const LogNormalParams& s_a, const LogNormalParams& s_b,
                              const std::vector<LogNormalParams>& alphas,
                              const std::vector<LogNormalParams>& betas, double tau0);

} // namespace bc
