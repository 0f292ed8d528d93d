#pragma once

#include <cstdint>
#include <vector>

namespace bc {

// |s tan(pi U / 2)|, U ~ Uniform(0,1): half-Cauchy C+(0, s).
std::vector<double> sample_half_cauchy(double s, std::size_t n, std::uint64_t seed);

// lambda = 1 / (1 + z^2), in (0, 1].
double shrinkage(double z);
std::vector<double> shrinkage_map(const std::vector<double>& z);

// Regularized incomplete beta I_x(a, b) by continued fraction, |err| < 1e-10.
double reg_incomplete_beta(double a, double b, double x);

// Kolmogorov-Smirnov sup-distance of the sample against Beta(a, b).
double ks_against_beta(std::vector<double> lambdas, double a, double b);

// Inverse CDF of Beta(a, b) by bisection.
double beta_inv_cdf(double a, double b, double p);

std::vector<double> sample_beta(double a, double b, std::size_t n, std::uint64_t seed);

// Fraction of samples within eps of either endpoint of [0, 1].
double endpoint_mass(const std::vector<double>& lambdas, double eps = 0.01);

} // namespace bc
