#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bc/data.hpp"
#include "bc/layers.hpp"

namespace bc {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    std::size_t warmup_epochs = 10;
    std::uint64_t seed = 1;
    // Per-layer ceilings on exp(0.5 log_Sigma_W); <= 0 means unconstrained.
    std::vector<double> std_ceilings;
    double tau0 = 1e-5;
};

struct ElboBreakdown {
    double neg_log_likelihood = 0.0; // batch NLL in nats, scaled by N/K
    double kl_weights = 0.0;
    double kl_scales = 0.0;
    double kl_scale = 1.0;           // warm-up multiplier applied in total
    double total = 0.0;              // -nll - kl_scale (kl_weights + kl_scales)
};

struct EpochLog {
    std::size_t epoch;
    double train_nll;  // mean per-sample NLL over the epoch
    double kl_weights;
    double kl_scales;
    double test_error;
};

// Linear KL annealing: min(1, epoch / warmup_epochs); 1 when warmup is 0.
double warmup_schedule(std::size_t epoch, std::size_t warmup_epochs);

// Builds and initializes a network: He-scheme weight means, log-stds from
// N(-9, 1e-4), scale posteriors with E[z] ~= 1 and Var[z] ~= 1e-8.
Network init_model(const Arch& arch, PriorKind prior, std::uint64_t seed,
                   double tau0 = 1e-5);

// Clamps weight stds to per-layer ceilings after an optimizer step.
void constrain_stds(Network& net, const std::vector<double>& ceilings);

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long t = 0;
};

// One standard Adam update (descent). Throws TrainError on non-finite grads.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// One-sample ELBO over a batch, as an autograd graph. `loss` is the scalar to
// minimize (negative ELBO divided by N_total). Network params must not be
// staged on the tape beforehand; this stages them.
struct ElboGraph {
    Var loss;
    ElboBreakdown breakdown;
};
ElboGraph elbo(Network& net, Tape& tape, const Tensor& X, const std::vector<int>& y,
               std::size_t n_total, double kl_scale, Rng& rng);

// Full training loop; logs one record per epoch (also streamed to `log_out`
// as "epoch nll kl_w kl_z test_err" lines when non-null).
std::vector<EpochLog> train(Network& net, const TrainConfig& cfg, const Dataset& train_set,
                            const Dataset& test_set, std::ostream* log_out = nullptr);

} // namespace bc
