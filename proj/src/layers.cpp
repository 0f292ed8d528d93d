#include "bc/layers.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace bc {

LayerMask all_ones_mask(std::size_t n) { return LayerMask(n, 1); }

std::vector<const Tensor*> Layer::params() const {
    auto mut = const_cast<Layer*>(this)->params();
    return {mut.begin(), mut.end()};
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
const double kLgammaHalf = std::lgamma(0.5);

void check_mask(const LayerMask& mask, std::size_t groups, const char* kind) {
    if (mask.size() != groups)
        throw ShapeError(std::string(kind) + ": mask has " + std::to_string(mask.size()) +
                         " entries for " + std::to_string(groups) + " groups");
}

// 0.5 sum(-log s2 + s2 + mu^2 - 1) with s2 = exp(ls); KL to a standard normal.
Var gaussian_kl_expr(Var mu, Var ls) {
    Var s2 = vexp(ls);
    Var term = add_scalar(add(sub(s2, ls), square(mu)), -1.0);
    return mul_scalar(sum(term), 0.5);
}

// Positive KL of the normal-Jeffreys scale posterior, from log alpha.
Var nj_scale_kl_expr(Var mu_z, Var ls_z) {
    Var log_alpha = sub(ls_z, vlog(square(mu_z)));
    Var t1 = mul_scalar(
        sigmoid(add_scalar(mul_scalar(log_alpha, NJConstants::k3), NJConstants::k2)),
        NJConstants::k1);
    Var t2 = mul_scalar(softplus(mul_scalar(log_alpha, -1.0)), 0.5);
    Var neg_kl = add_scalar(sub(t1, t2), -NJConstants::k1);
    return mul_scalar(sum(neg_kl), -1.0);
}

// Positive KL(LN(mu, exp(ls)) || Gamma(0.5, beta)), elementwise-summed.
Var ln_gamma_kl_expr(Var mu, Var ls, double beta) {
    Var e = vexp(add(mu, mul_scalar(vexp(ls), 0.5)));
    Var neg_kl = add_scalar(
        add(add(mul_scalar(mu, 0.5), mul_scalar(e, -1.0 / beta)),
            mul_scalar(add_scalar(ls, 1.0 + kLog2Pi), 0.5)),
        -0.5 * std::log(beta) - kLgammaHalf);
    return mul_scalar(sum(neg_kl), -1.0);
}

// Positive KL(LN(mu, exp(ls)) || InverseGamma(0.5, beta)), elementwise-summed.
Var ln_invgamma_kl_expr(Var mu, Var ls, double beta) {
    Var e = vexp(add(mul_scalar(mu, -1.0), mul_scalar(vexp(ls), 0.5)));
    Var neg_kl = add_scalar(
        add(add(mul_scalar(mu, -0.5), mul_scalar(e, -beta)),
            mul_scalar(add_scalar(ls, 1.0 + kLog2Pi), 0.5)),
        0.5 * std::log(beta) - kLgammaHalf);
    return mul_scalar(sum(neg_kl), -1.0);
}

// Shared tail of the dense algorithms: pre-activation sampling from
// M_h = Hhat M_w + b, V_h = Hhat^2 Sigma_w + sigma_b^2.
Var dense_preact(Tape& tape, Var Hhat, Var M_W, Var lS_W, Var b_mu, Var b_ls, Rng& rng) {
    Var M_h = add(matmul(Hhat, M_W), b_mu);
    Var V_h = add(matmul(square(Hhat), vexp(lS_W)), vexp(b_ls));
    std::size_t K = Hhat.value().shape[0], B = M_W.value().shape[1];
    Var E = tape.constant(rng.normal_tensor({K, B}));
    return add(M_h, mul(vsqrt(V_h), E));
}

// Shared tail of the convolutional algorithms: scale sample Z applied to the
// output-map moments, M_h Z + b + sqrt(V_h Z^2 + sigma_b^2) E.
Var conv_preact(Tape& tape, Var H, Var Z, Var M_W, Var lS_W, Var b_mu, Var b_ls,
                Padding pad, Rng& rng) {
    Var M_h = conv2d(H, M_W, pad);
    Var V_h = conv2d(square(H), vexp(lS_W), pad);
    Var mean = add(mul(M_h, Z), b_mu);
    Var var = add(mul(V_h, square(Z)), vexp(b_ls));
    Var E = tape.constant(rng.normal_tensor(M_h.value().shape));
    return add(mean, mul(vsqrt(var), E));
}

} // namespace

// --- GNJDense -------------------------------------------------------------------

GNJDense::GNJDense(std::size_t in_dim, std::size_t out_dim)
    : M_W({in_dim, out_dim}),
      log_Sigma_W({in_dim, out_dim}),
      mu_z({in_dim}),
      log_sigma2_z({in_dim}),
      bias_mu({out_dim}),
      bias_log_sigma2({out_dim}) {}

std::vector<Tensor*> GNJDense::params() {
    return {&M_W, &log_Sigma_W, &mu_z, &log_sigma2_z, &bias_mu, &bias_log_sigma2};
}

void GNJDense::stage(Tape& tape) {
    staged_.clear();
    for (Tensor* p : params()) staged_.push_back(tape.param(*p));
}

Var GNJDense::forward_train(Tape& tape, Var H, Rng& rng) {
    const std::size_t K = H.value().shape[0], A = M_W.shape[0];
    if (H.value().rank() != 2 || H.value().shape[1] != A)
        throw ShapeError("gnj_dense: input " + shape_str(H.value().shape) +
                         " does not match weight " + shape_str(M_W.shape));
    Var sigma_z = vexp(mul_scalar(staged_[3], 0.5));
    Var Ehat = tape.constant(rng.normal_tensor({K, A}));
    Var Z = add(mul(sigma_z, Ehat), staged_[2]);
    Var Hhat = mul(H, Z);
    return dense_preact(tape, Hhat, staged_[0], staged_[1], staged_[4], staged_[5], rng);
}

Tensor GNJDense::forward_det(const Tensor& H, const LayerMask& mask) const {
    check_mask(mask, groups(), "gnj_dense");
    const std::size_t A = M_W.shape[0], B = M_W.shape[1];
    if (H.rank() != 2 || H.shape[1] != A)
        throw ShapeError("gnj_dense: input " + shape_str(H.shape) +
                         " does not match weight " + shape_str(M_W.shape));
    Tensor Hs = H;
    for (std::size_t k = 0; k < H.shape[0]; ++k)
        for (std::size_t i = 0; i < A; ++i)
            Hs.at(k, i) *= mask[i] ? mu_z[i] : 0.0;
    Tensor out = matmul(Hs, M_W);
    for (std::size_t k = 0; k < out.shape[0]; ++k)
        for (std::size_t j = 0; j < B; ++j) out.at(k, j) += bias_mu[j];
    return out;
}

Var GNJDense::kl_weights(Tape&) {
    return add(gaussian_kl_expr(staged_[0], staged_[1]),
               gaussian_kl_expr(staged_[4], staged_[5]));
}

Var GNJDense::kl_scales(Tape&, double) { return nj_scale_kl_expr(staged_[2], staged_[3]); }

std::vector<double> GNJDense::scores() const {
    std::vector<double> s(groups());
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = mu_z[i] == 0.0 ? std::numeric_limits<double>::infinity()
                              : log_sigma2_z[i] - std::log(mu_z[i] * mu_z[i]);
    return s;
}

Tensor GNJDense::marginal_variance() const {
    Tensor V(M_W.shape);
    for (std::size_t i = 0; i < M_W.shape[0]; ++i) {
        double s2z = std::exp(log_sigma2_z[i]);
        double mz2 = mu_z[i] * mu_z[i];
        for (std::size_t j = 0; j < M_W.shape[1]; ++j) {
            double s2 = std::exp(log_Sigma_W.at(i, j));
            double mu = M_W.at(i, j);
            V.at(i, j) = s2z * (s2 + mu * mu) + s2 * mz2;
        }
    }
    return V;
}

Tensor GNJDense::folded_weights(const LayerMask& mask) const {
    check_mask(mask, groups(), "gnj_dense");
    Tensor W = M_W;
    for (std::size_t i = 0; i < M_W.shape[0]; ++i) {
        double s = mask[i] ? mu_z[i] : 0.0;
        for (std::size_t j = 0; j < M_W.shape[1]; ++j) W.at(i, j) *= s;
    }
    return W;
}

// --- GNJConv --------------------------------------------------------------------

GNJConv::GNJConv(std::size_t kh, std::size_t kw, std::size_t c_in, std::size_t filters,
                 Padding pad_)
    : M_W({kh, kw, c_in, filters}),
      log_Sigma_W({kh, kw, c_in, filters}),
      mu_z({filters}),
      log_sigma2_z({filters}),
      bias_mu({filters}),
      bias_log_sigma2({filters}),
      pad(pad_) {}

std::vector<Tensor*> GNJConv::params() {
    return {&M_W, &log_Sigma_W, &mu_z, &log_sigma2_z, &bias_mu, &bias_log_sigma2};
}

void GNJConv::stage(Tape& tape) {
    staged_.clear();
    for (Tensor* p : params()) staged_.push_back(tape.param(*p));
}

Var GNJConv::forward_train(Tape& tape, Var H, Rng& rng) {
    const std::size_t K = H.value().shape[0], F = groups();
    Var sigma_z = vexp(mul_scalar(staged_[3], 0.5));
    Var Ehat = tape.constant(rng.normal_tensor({K, 1, 1, F}));
    Var Z = add(mul(sigma_z, Ehat), staged_[2]); // [K,1,1,F]
    return conv_preact(tape, H, Z, staged_[0], staged_[1], staged_[4], staged_[5], pad,
                       rng);
}

Tensor GNJConv::forward_det(const Tensor& H, const LayerMask& mask) const {
    check_mask(mask, groups(), "gnj_conv");
    Tensor out = conv2d(H, M_W, pad);
    const std::size_t F = groups();
    for (std::size_t n = 0; n < out.size(); n += F)
        for (std::size_t f = 0; f < F; ++f)
            out[n + f] = mask[f] ? mu_z[f] * out[n + f] + bias_mu[f] : 0.0;
    return out;
}

Var GNJConv::kl_weights(Tape&) {
    return add(gaussian_kl_expr(staged_[0], staged_[1]),
               gaussian_kl_expr(staged_[4], staged_[5]));
}

Var GNJConv::kl_scales(Tape&, double) { return nj_scale_kl_expr(staged_[2], staged_[3]); }

std::vector<double> GNJConv::scores() const {
    std::vector<double> s(groups());
    for (std::size_t f = 0; f < s.size(); ++f)
        s[f] = mu_z[f] == 0.0 ? std::numeric_limits<double>::infinity()
                              : log_sigma2_z[f] - std::log(mu_z[f] * mu_z[f]);
    return s;
}

Tensor GNJConv::marginal_variance() const {
    Tensor V(M_W.shape);
    const std::size_t F = groups();
    for (std::size_t n = 0; n < M_W.size(); ++n) {
        std::size_t f = n % F;
        double s2z = std::exp(log_sigma2_z[f]);
        double mz2 = mu_z[f] * mu_z[f];
        double s2 = std::exp(log_Sigma_W[n]);
        double mu = M_W[n];
        V[n] = s2z * (s2 + mu * mu) + s2 * mz2;
    }
    return V;
}

Tensor GNJConv::folded_weights(const LayerMask& mask) const {
    check_mask(mask, groups(), "gnj_conv");
    Tensor W = M_W;
    const std::size_t F = groups();
    for (std::size_t n = 0; n < W.size(); ++n) {
        std::size_t f = n % F;
        W[n] *= mask[f] ? mu_z[f] : 0.0;
    }
    return W;
}

// --- GHSDense -------------------------------------------------------------------

GHSDense::GHSDense(std::size_t in_dim, std::size_t out_dim)
    : M_W({in_dim, out_dim}),
      log_Sigma_W({in_dim, out_dim}),
      mu_alpha({in_dim}),
      log_sigma2_alpha({in_dim}),
      mu_beta({in_dim}),
      log_sigma2_beta({in_dim}),
      mu_sa({1}),
      log_sigma2_sa({1}),
      mu_sb({1}),
      log_sigma2_sb({1}),
      bias_mu({out_dim}),
      bias_log_sigma2({out_dim}) {}

std::vector<Tensor*> GHSDense::params() {
    return {&M_W,   &log_Sigma_W,     &mu_alpha, &log_sigma2_alpha,
            &mu_beta, &log_sigma2_beta, &mu_sa,    &log_sigma2_sa,
            &mu_sb,   &log_sigma2_sb,   &bias_mu,  &bias_log_sigma2};
}

void GHSDense::stage(Tape& tape) {
    staged_.clear();
    for (Tensor* p : params()) staged_.push_back(tape.param(*p));
}

namespace {

// log s sample per batch row, [K,1]: mu_s + sigma_s eps with the global
// log-normal parameters implied by (s_a, s_b).
Var ghs_log_s(Tape& tape, Var mu_sa, Var ls_sa, Var mu_sb, Var ls_sb, std::size_t K,
              Rng& rng) {
    Var mu_s = mul_scalar(add(mu_sa, mu_sb), 0.5);
    Var sigma_s = vsqrt(mul_scalar(add(vexp(ls_sa), vexp(ls_sb)), 0.25));
    Var eps = tape.constant(rng.normal_tensor({K, 1}));
    return add(mul(sigma_s, eps), mu_s);
}

// Local scale sample Z = exp(mu_zt + sigma_zt ehat + log s), with ehat of the
// given noise shape ([K,A] dense, [K,1,1,F] conv).
Var ghs_scale_sample(Tape& tape, Var mu_a, Var ls_a, Var mu_b, Var ls_b, Var log_s,
                     Shape noise_shape, Rng& rng) {
    Var mu_zt = mul_scalar(add(mu_a, mu_b), 0.5);
    Var sigma_zt = vsqrt(mul_scalar(add(vexp(ls_a), vexp(ls_b)), 0.25));
    Var ehat = tape.constant(rng.normal_tensor(std::move(noise_shape)));
    return vexp(add(add(mul(sigma_zt, ehat), mu_zt), log_s));
}

ImpliedScales implied_from(const Tensor& mu_a, const Tensor& ls_a, const Tensor& mu_b,
                           const Tensor& ls_b, const Tensor& mu_sa, const Tensor& ls_sa,
                           const Tensor& mu_sb, const Tensor& ls_sb) {
    ImpliedScales s;
    s.mu_s = 0.5 * (mu_sa[0] + mu_sb[0]);
    s.sigma2_s = 0.25 * (std::exp(ls_sa[0]) + std::exp(ls_sb[0]));
    std::size_t n = mu_a.size();
    s.mu_z_tilde.resize(n);
    s.sigma2_z_tilde.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.mu_z_tilde[i] = 0.5 * (mu_a[i] + mu_b[i]);
        s.sigma2_z_tilde[i] = 0.25 * (std::exp(ls_a[i]) + std::exp(ls_b[i]));
    }
    return s;
}

Var ghs_scale_kl_expr(const std::vector<Var>& st, double tau0) {
    // staged order: [2..5] local alpha/beta, [6..9] global s_a/s_b
    Var kl = ln_gamma_kl_expr(st[6], st[7], tau0 * tau0);
    kl = add(kl, ln_invgamma_kl_expr(st[8], st[9], 1.0));
    kl = add(kl, ln_gamma_kl_expr(st[2], st[3], 1.0));
    kl = add(kl, ln_invgamma_kl_expr(st[4], st[5], 1.0));
    return kl;
}

} // namespace

Var GHSDense::forward_train(Tape& tape, Var H, Rng& rng) {
    const std::size_t K = H.value().shape[0], A = M_W.shape[0];
    if (H.value().rank() != 2 || H.value().shape[1] != A)
        throw ShapeError("ghs_dense: input " + shape_str(H.value().shape) +
                         " does not match weight " + shape_str(M_W.shape));
    Var log_s = ghs_log_s(tape, staged_[6], staged_[7], staged_[8], staged_[9], K, rng);
    Var Z = ghs_scale_sample(tape, staged_[2], staged_[3], staged_[4], staged_[5], log_s,
                             {K, A}, rng);
    Var Hhat = mul(H, Z);
    return dense_preact(tape, Hhat, staged_[0], staged_[1], staged_[10], staged_[11], rng);
}

Tensor GHSDense::forward_det(const Tensor& H, const LayerMask& mask) const {
    check_mask(mask, groups(), "ghs_dense");
    ImpliedScales sc = implied_scales();
    const std::size_t A = M_W.shape[0], B = M_W.shape[1];
    Tensor Hs = H;
    for (std::size_t k = 0; k < H.shape[0]; ++k)
        for (std::size_t i = 0; i < A; ++i) {
            double mu_z = sc.mu_z_tilde[i] + sc.mu_s;
            double s2_z = sc.sigma2_z_tilde[i] + sc.sigma2_s;
            Hs.at(k, i) *= mask[i] ? std::exp(mu_z + 0.5 * s2_z) : 0.0;
        }
    Tensor out = matmul(Hs, M_W);
    for (std::size_t k = 0; k < out.shape[0]; ++k)
        for (std::size_t j = 0; j < B; ++j) out.at(k, j) += bias_mu[j];
    return out;
}

Var GHSDense::kl_weights(Tape&) {
    return add(gaussian_kl_expr(staged_[0], staged_[1]),
               gaussian_kl_expr(staged_[10], staged_[11]));
}

Var GHSDense::kl_scales(Tape&, double tau0) { return ghs_scale_kl_expr(staged_, tau0); }

std::vector<double> GHSDense::scores() const {
    ImpliedScales sc = implied_scales();
    std::vector<double> s(groups());
    for (std::size_t i = 0; i < s.size(); ++i)
        s[i] = (sc.sigma2_z_tilde[i] + sc.sigma2_s) - (sc.mu_z_tilde[i] + sc.mu_s);
    return s;
}

Tensor GHSDense::marginal_variance() const {
    ImpliedScales sc = implied_scales();
    Tensor V(M_W.shape);
    for (std::size_t i = 0; i < M_W.shape[0]; ++i) {
        double mu_z = sc.mu_z_tilde[i] + sc.mu_s;
        double s2_z = sc.sigma2_z_tilde[i] + sc.sigma2_s;
        double e2 = std::exp(2.0 * mu_z + s2_z);
        double vz = (std::exp(s2_z) - 1.0) * e2;
        for (std::size_t j = 0; j < M_W.shape[1]; ++j) {
            double s2 = std::exp(log_Sigma_W.at(i, j));
            double mu = M_W.at(i, j);
            V.at(i, j) = vz * (s2 + mu * mu) + s2 * e2;
        }
    }
    return V;
}

Tensor GHSDense::folded_weights(const LayerMask& mask) const {
    check_mask(mask, groups(), "ghs_dense");
    ImpliedScales sc = implied_scales();
    Tensor W = M_W;
    for (std::size_t i = 0; i < M_W.shape[0]; ++i) {
        double s = mask[i] ? std::exp(sc.mu_z_tilde[i] + sc.mu_s +
                                      0.5 * (sc.sigma2_z_tilde[i] + sc.sigma2_s))
                           : 0.0;
        for (std::size_t j = 0; j < M_W.shape[1]; ++j) W.at(i, j) *= s;
    }
    return W;
}

ImpliedScales GHSDense::implied_scales() const {
    return implied_from(mu_alpha, log_sigma2_alpha, mu_beta, log_sigma2_beta, mu_sa,
                        log_sigma2_sa, mu_sb, log_sigma2_sb);
}

// --- GHSConv --------------------------------------------------------------------

GHSConv::GHSConv(std::size_t kh, std::size_t kw, std::size_t c_in, std::size_t filters,
                 Padding pad_)
    : M_W({kh, kw, c_in, filters}),
      log_Sigma_W({kh, kw, c_in, filters}),
      mu_alpha({filters}),
      log_sigma2_alpha({filters}),
      mu_beta({filters}),
      log_sigma2_beta({filters}),
      mu_sa({1}),
      log_sigma2_sa({1}),
      mu_sb({1}),
      log_sigma2_sb({1}),
      bias_mu({filters}),
      bias_log_sigma2({filters}),
      pad(pad_) {}

std::vector<Tensor*> GHSConv::params() {
    return {&M_W,   &log_Sigma_W,     &mu_alpha, &log_sigma2_alpha,
            &mu_beta, &log_sigma2_beta, &mu_sa,    &log_sigma2_sa,
            &mu_sb,   &log_sigma2_sb,   &bias_mu,  &bias_log_sigma2};
}

void GHSConv::stage(Tape& tape) {
    staged_.clear();
    for (Tensor* p : params()) staged_.push_back(tape.param(*p));
}

Var GHSConv::forward_train(Tape& tape, Var H, Rng& rng) {
    const std::size_t K = H.value().shape[0], F = groups();
    Var log_s = ghs_log_s(tape, staged_[6], staged_[7], staged_[8], staged_[9], K, rng);
    Var log_s4 = reshape(log_s, {K, 1, 1, 1});
    Var Z = ghs_scale_sample(tape, staged_[2], staged_[3], staged_[4], staged_[5], log_s4,
                             {K, 1, 1, F}, rng);
    return conv_preact(tape, H, Z, staged_[0], staged_[1], staged_[10], staged_[11], pad,
                       rng);
}

Tensor GHSConv::forward_det(const Tensor& H, const LayerMask& mask) const {
    check_mask(mask, groups(), "ghs_conv");
    ImpliedScales sc = implied_scales();
    Tensor out = conv2d(H, M_W, pad);
    const std::size_t F = groups();
    for (std::size_t n = 0; n < out.size(); n += F)
        for (std::size_t f = 0; f < F; ++f) {
            double mu_z = sc.mu_z_tilde[f] + sc.mu_s;
            double s2_z = sc.sigma2_z_tilde[f] + sc.sigma2_s;
            out[n + f] = mask[f]
                             ? std::exp(mu_z + 0.5 * s2_z) * out[n + f] + bias_mu[f]
                             : 0.0;
        }
    return out;
}

Var GHSConv::kl_weights(Tape&) {
    return add(gaussian_kl_expr(staged_[0], staged_[1]),
               gaussian_kl_expr(staged_[10], staged_[11]));
}

Var GHSConv::kl_scales(Tape&, double tau0) { return ghs_scale_kl_expr(staged_, tau0); }

std::vector<double> GHSConv::scores() const {
    ImpliedScales sc = implied_scales();
    std::vector<double> s(groups());
    for (std::size_t f = 0; f < s.size(); ++f)
        s[f] = (sc.sigma2_z_tilde[f] + sc.sigma2_s) - (sc.mu_z_tilde[f] + sc.mu_s);
    return s;
}

Tensor GHSConv::marginal_variance() const {
    ImpliedScales sc = implied_scales();
    Tensor V(M_W.shape);
    const std::size_t F = groups();
    for (std::size_t n = 0; n < M_W.size(); ++n) {
        std::size_t f = n % F;
        double mu_z = sc.mu_z_tilde[f] + sc.mu_s;
        double s2_z = sc.sigma2_z_tilde[f] + sc.sigma2_s;
        double e2 = std::exp(2.0 * mu_z + s2_z);
        double s2 = std::exp(log_Sigma_W[n]);
        double mu = M_W[n];
        V[n] = (std::exp(s2_z) - 1.0) * e2 * (s2 + mu * mu) + s2 * e2;
    }
    return V;
}

Tensor GHSConv::folded_weights(const LayerMask& mask) const {
    check_mask(mask, groups(), "ghs_conv");
    ImpliedScales sc = implied_scales();
    Tensor W = M_W;
    const std::size_t F = groups();
    for (std::size_t n = 0; n < W.size(); ++n) {
        std::size_t f = n % F;
        double s = mask[f] ? std::exp(sc.mu_z_tilde[f] + sc.mu_s +
                                      0.5 * (sc.sigma2_z_tilde[f] + sc.sigma2_s))
                           : 0.0;
        W[n] *= s;
    }
    return W;
}

ImpliedScales GHSConv::implied_scales() const {
    return implied_from(mu_alpha, log_sigma2_alpha, mu_beta, log_sigma2_beta, mu_sa,
                        log_sigma2_sa, mu_sb, log_sigma2_sb);
}

// --- Arch -----------------------------------------------------------------------

Arch Arch::mlp(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw ShapeError("mlp arch needs at least two dims");
    Arch a;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        a.items.push_back({ArchItem::Kind::Dense, dims[i], dims[i + 1]});
    return a;
}

Arch Arch::lenet5() {
    Arch a;
    a.items.push_back({ArchItem::Kind::Conv, 5, 5, 1, 20});
    a.items.push_back({ArchItem::Kind::Pool});
    a.items.push_back({ArchItem::Kind::Conv, 5, 5, 20, 50});
    a.items.push_back({ArchItem::Kind::Pool});
    a.items.push_back({ArchItem::Kind::Flatten});
    a.items.push_back({ArchItem::Kind::Dense, 800, 500});
    a.items.push_back({ArchItem::Kind::Dense, 500, 10});
    return a;
}

Arch Arch::parse(const std::string& text) {
    if (text == "lenet5") return lenet5();
    std::vector<std::size_t> dims;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, '-')) {
        if (tok.empty()) throw ShapeError("bad architecture string: " + text);
        dims.push_back(std::stoul(tok));
    }
    return mlp(dims);
}

std::string Arch::to_string() const {
    if (!items.empty() && items[0].kind == ArchItem::Kind::Conv) return "lenet5";
    std::string out;
    for (const auto& it : items)
        if (it.kind == ArchItem::Kind::Dense) {
            if (out.empty()) out = std::to_string(it.a);
            out += "-" + std::to_string(it.b);
        }
    return out;
}

std::size_t Arch::bayes_layer_count() const {
    std::size_t n = 0;
    for (const auto& it : items)
        if (it.kind == ArchItem::Kind::Dense || it.kind == ArchItem::Kind::Conv) ++n;
    return n;
}

// --- Network --------------------------------------------------------------------

Network make_network(const Arch& arch, PriorKind prior, double tau0) {
    Network net;
    net.prior = prior;
    net.arch = arch;
    net.tau0 = tau0;
    for (const auto& it : arch.items) {
        if (it.kind == ArchItem::Kind::Dense) {
            if (prior == PriorKind::GNJ)
                net.layers.push_back(std::make_unique<GNJDense>(it.a, it.b));
            else
                net.layers.push_back(std::make_unique<GHSDense>(it.a, it.b));
        } else if (it.kind == ArchItem::Kind::Conv) {
            if (prior == PriorKind::GNJ)
                net.layers.push_back(std::make_unique<GNJConv>(it.a, it.b, it.c, it.d));
            else
                net.layers.push_back(std::make_unique<GHSConv>(it.a, it.b, it.c, it.d));
        }
    }
    return net;
}

ModelMask Network::full_mask() const {
    ModelMask m;
    for (const auto& l : layers) m.push_back(all_ones_mask(l->groups()));
    return m;
}

namespace {
Shape flat_shape(const Shape& s) {
    return {s[0], numel(s) / s[0]};
}
} // namespace

Var Network::forward_train(Tape& tape, const Tensor& X, Rng& rng) {
    Var h = tape.constant(X);
    // MLPs accept image-shaped input directly.
    if (!arch.items.empty() && arch.items[0].kind == ArchItem::Kind::Dense &&
        X.rank() != 2)
        h = reshape(h, flat_shape(X.shape));
    std::size_t li = 0;
    const std::size_t n_bayes = layers.size();
    for (const auto& it : arch.items) {
        switch (it.kind) {
        case ArchItem::Kind::Dense:
        case ArchItem::Kind::Conv:
            layers[li]->stage(tape);
            h = layers[li]->forward_train(tape, h, rng);
            if (li + 1 < n_bayes) h = relu(h);
            ++li;
            break;
        case ArchItem::Kind::Pool:
            h = mean_pool2(h);
            break;
        case ArchItem::Kind::Flatten:
            h = reshape(h, flat_shape(h.value().shape));
            break;
        }
    }
    return h;
}

Tensor Network::forward_det(const Tensor& X, const ModelMask& masks) const {
    if (masks.size() != layers.size())
        throw ShapeError("forward_det: mask count does not match layer count");
    Tensor h = X;
    if (!arch.items.empty() && arch.items[0].kind == ArchItem::Kind::Dense &&
        h.rank() != 2)
        h = Tensor(flat_shape(h.shape), h.data);
    std::size_t li = 0;
    const std::size_t n_bayes = layers.size();
    for (const auto& it : arch.items) {
        switch (it.kind) {
        case ArchItem::Kind::Dense:
        case ArchItem::Kind::Conv:
            h = layers[li]->forward_det(h, masks[li]);
            if (li + 1 < n_bayes) h = relu(h);
            ++li;
            break;
        case ArchItem::Kind::Pool:
            h = mean_pool2(h);
            break;
        case ArchItem::Kind::Flatten:
            h = Tensor(flat_shape(h.shape), h.data);
            break;
        }
    }
    return h;
}

Var Network::kl_weights(Tape& tape) {
    Var total = layers[0]->kl_weights(tape);
    for (std::size_t i = 1; i < layers.size(); ++i)
        total = add(total, layers[i]->kl_weights(tape));
    return total;
}

Var Network::kl_scales(Tape& tape) {
    Var total = layers[0]->kl_scales(tape, tau0);
    for (std::size_t i = 1; i < layers.size(); ++i)
        total = add(total, layers[i]->kl_scales(tape, tau0));
    return total;
}

double Network::error_rate(const Tensor& X, const std::vector<int>& labels,
                           const ModelMask& masks) const {
    const std::size_t N = X.shape[0];
    const std::size_t chunk = 1000;
    std::size_t wrong = 0;
    std::size_t row = numel(X.shape) / N;
    for (std::size_t start = 0; start < N; start += chunk) {
        std::size_t n = std::min(chunk, N - start);
        Shape s = X.shape;
        s[0] = n;
        Tensor batch(s, std::vector<double>(X.data.begin() + start * row,
                                            X.data.begin() + (start + n) * row));
        Tensor logits = forward_det(batch, masks);
        std::size_t C = logits.shape[1];
        for (std::size_t k = 0; k < n; ++k) {
            const double* rowp = &logits.data[k * C];
            std::size_t best = 0;
            for (std::size_t c = 1; c < C; ++c)
                if (rowp[c] > rowp[best]) best = c;
            if (static_cast<int>(best) != labels[start + k]) ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(N);
}

} // namespace bc
