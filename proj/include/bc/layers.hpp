#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bc/autograd.hpp"
#include "bc/dists.hpp"
#include "bc/rng.hpp"
#include "bc/tensor.hpp"

namespace bc {

enum class PriorKind { GNJ, GHS };

// Binary keep-mask over one layer's groups (1 = keep).
using LayerMask = std::vector<std::uint8_t>;
// One mask per Bayesian layer, in network order.
using ModelMask = std::vector<LayerMask>;

LayerMask all_ones_mask(std::size_t n);

// Composed log-normal parameters of the per-group scale z_i (local and global
// parts folded together for GHS; for GNJ these are the Gaussian z parameters).
struct ImpliedScales {
    std::vector<double> mu_z_tilde, sigma2_z_tilde; // per group
    double mu_s = 0.0, sigma2_s = 0.0;              // global (GHS only)
};

// A variational layer. Parameters live here as plain tensors; stage() places
// them on a tape as tracked leaves for one training step.
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;
    virtual PriorKind prior() const = 0;
    virtual std::size_t groups() const = 0;

    // Parameter tensors in a fixed, serialization-stable order.
    virtual std::vector<Tensor*> params() = 0;
    std::vector<const Tensor*> params() const;

    // Weight log-variance tensors subject to std-ceiling clamping.
    virtual std::vector<Tensor*> weight_log_vars() = 0;

    virtual void stage(Tape& tape) = 0;
    virtual Var forward_train(Tape& tape, Var H, Rng& rng) = 0;
    virtual Tensor forward_det(const Tensor& H, const LayerMask& mask) const = 0;

    // Positive KL terms over the staged leaves (call after stage()).
    virtual Var kl_weights(Tape& tape) = 0;
    virtual Var kl_scales(Tape& tape, double tau0) = 0;

    // Per-group pruning scores (larger = more prunable).
    virtual std::vector<double> scores() const = 0;
    // Marginal posterior variance per weight, shaped like the weight means.
    virtual Tensor marginal_variance() const = 0;
    // Test-time weights with scales folded in and masked groups zeroed.
    virtual Tensor folded_weights(const LayerMask& mask) const = 0;
    virtual const Tensor& bias_mean() const = 0;
    virtual const Tensor& weight_mean() const = 0;

    // Tape leaves created by the latest stage(), in params() order.
    const std::vector<Var>& staged() const { return staged_; }

protected:
    std::vector<Var> staged_;
};

// --- fully connected, group normal-Jeffreys (input-neuron groups) ------------
class GNJDense : public Layer {
public:
    GNJDense(std::size_t in_dim, std::size_t out_dim);

    Tensor M_W, log_Sigma_W;        // [A,B]
    Tensor mu_z, log_sigma2_z;      // [A]
    Tensor bias_mu, bias_log_sigma2; // [B]

    std::string kind() const override { return "gnj_dense"; }
    PriorKind prior() const override { return PriorKind::GNJ; }
    std::size_t groups() const override { return M_W.shape[0]; }
    std::vector<Tensor*> params() override;
    std::vector<Tensor*> weight_log_vars() override { return {&log_Sigma_W}; }
    void stage(Tape& tape) override;
    Var forward_train(Tape& tape, Var H, Rng& rng) override;
    Tensor forward_det(const Tensor& H, const LayerMask& mask) const override;
    Var kl_weights(Tape& tape) override;
    Var kl_scales(Tape& tape, double tau0) override;
    std::vector<double> scores() const override;
    Tensor marginal_variance() const override;
    Tensor folded_weights(const LayerMask& mask) const override;
    const Tensor& bias_mean() const override { return bias_mu; }
    const Tensor& weight_mean() const override { return M_W; }
};

// --- convolutional, group normal-Jeffreys (output-filter groups) -------------
class GNJConv : public Layer {
public:
    GNJConv(std::size_t kh, std::size_t kw, std::size_t c_in, std::size_t filters,
            Padding pad = Padding::Valid);

    Tensor M_W, log_Sigma_W;         // [kh,kw,Ci,F]
    Tensor mu_z, log_sigma2_z;       // [F]
    Tensor bias_mu, bias_log_sigma2; // [F]
    Padding pad;

    std::string kind() const override { return "gnj_conv"; }
    PriorKind prior() const override { return PriorKind::GNJ; }
    std::size_t groups() const override { return M_W.shape[3]; }
    std::vector<Tensor*> params() override;
    std::vector<Tensor*> weight_log_vars() override { return {&log_Sigma_W}; }
    void stage(Tape& tape) override;
    Var forward_train(Tape& tape, Var H, Rng& rng) override;
    Tensor forward_det(const Tensor& H, const LayerMask& mask) const override;
    Var kl_weights(Tape& tape) override;
    Var kl_scales(Tape& tape, double tau0) override;
    std::vector<double> scores() const override;
    Tensor marginal_variance() const override;
    Tensor folded_weights(const LayerMask& mask) const override;
    const Tensor& bias_mean() const override { return bias_mu; }
    const Tensor& weight_mean() const override { return M_W; }
};

// --- fully connected, group horseshoe ----------------------------------------
class GHSDense : public Layer {
public:
    GHSDense(std::size_t in_dim, std::size_t out_dim);

    Tensor M_W, log_Sigma_W;                     // [A,B]
    Tensor mu_alpha, log_sigma2_alpha;           // [A] local Gamma part
    Tensor mu_beta, log_sigma2_beta;             // [A] local inverse-Gamma part
    Tensor mu_sa, log_sigma2_sa;                 // [1] global Gamma part
    Tensor mu_sb, log_sigma2_sb;                 // [1] global inverse-Gamma part
    Tensor bias_mu, bias_log_sigma2;             // [B]

    std::string kind() const override { return "ghs_dense"; }
    PriorKind prior() const override { return PriorKind::GHS; }
    std::size_t groups() const override { return M_W.shape[0]; }
    std::vector<Tensor*> params() override;
    std::vector<Tensor*> weight_log_vars() override { return {&log_Sigma_W}; }
    void stage(Tape& tape) override;
    Var forward_train(Tape& tape, Var H, Rng& rng) override;
    Tensor forward_det(const Tensor& H, const LayerMask& mask) const override;
    Var kl_weights(Tape& tape) override;
    Var kl_scales(Tape& tape, double tau0) override;
    std::vector<double> scores() const override;
    Tensor marginal_variance() const override;
    Tensor folded_weights(const LayerMask& mask) const override;
    const Tensor& bias_mean() const override { return bias_mu; }
    const Tensor& weight_mean() const override { return M_W; }

    ImpliedScales implied_scales() const;
};

// --- convolutional, group horseshoe -------------------------------------------
class GHSConv : public Layer {
public:
    GHSConv(std::size_t kh, std::size_t kw, std::size_t c_in, std::size_t filters,
            Padding pad = Padding::Valid);

    Tensor M_W, log_Sigma_W;           // [kh,kw,Ci,F]
    Tensor mu_alpha, log_sigma2_alpha; // [F]
    Tensor mu_beta, log_sigma2_beta;   // [F]
    Tensor mu_sa, log_sigma2_sa;       // [1]
    Tensor mu_sb, log_sigma2_sb;       // [1]
    Tensor bias_mu, bias_log_sigma2;   // [F]
    Padding pad;

    std::string kind() const override { return "ghs_conv"; }
    PriorKind prior() const override { return PriorKind::GHS; }
    std::size_t groups() const override { return M_W.shape[3]; }
    std::vector<Tensor*> params() override;
    std::vector<Tensor*> weight_log_vars() override { return {&log_Sigma_W}; }
    void stage(Tape& tape) override;
    Var forward_train(Tape& tape, Var H, Rng& rng) override;
    Tensor forward_det(const Tensor& H, const LayerMask& mask) const override;
    Var kl_weights(Tape& tape) override;
    Var kl_scales(Tape& tape, double tau0) override;
    std::vector<double> scores() const override;
    Tensor marginal_variance() const override;
    Tensor folded_weights(const LayerMask& mask) const override;
    const Tensor& bias_mean() const override { return bias_mu; }
    const Tensor& weight_mean() const override { return M_W; }

    ImpliedScales implied_scales() const;
};

// --- network ------------------------------------------------------------------

struct ArchItem {
    enum class Kind { Dense, Conv, Pool, Flatten };
    Kind kind;
    std::size_t a = 0, b = 0, c = 0, d = 0; // Dense: in,out; Conv: kh,kw,ci,co
};

struct Arch {
    std::vector<ArchItem> items;

    static Arch mlp(const std::vector<std::size_t>& dims);
    static Arch lenet5();
    // "784-300-100" for dense chains, or the name "lenet5".
    static Arch parse(const std::string& text);
    std::string to_string() const;
    std::size_t bayes_layer_count() const;
};

struct Network {
    PriorKind prior = PriorKind::GNJ;
    Arch arch;
    double tau0 = 1e-5;
    std::vector<std::unique_ptr<Layer>> layers;

    std::size_t layer_count() const { return layers.size(); }
    ModelMask full_mask() const;

    // Pre-softmax logits. Stochastic path builds the local-reparametrized
    // graph; deterministic path folds scales into means and applies the mask.
    Var forward_train(Tape& tape, const Tensor& X, Rng& rng);
    Tensor forward_det(const Tensor& X, const ModelMask& masks) const;

    // Sum of the layers' KL terms over staged leaves.
    Var kl_weights(Tape& tape);
    Var kl_scales(Tape& tape);

    // Fraction of misclassified samples under deterministic forward.
    double error_rate(const Tensor& X, const std::vector<int>& labels,
                      const ModelMask& masks) const;
};

// Builds uninitialized layers for an architecture (parameters all zero).
Network make_network(const Arch& arch, PriorKind prior, double tau0 = 1e-5);

} // namespace bc
