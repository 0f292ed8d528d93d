#include "bc/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace bc {

double warmup_schedule(std::size_t epoch, std::size_t warmup_epochs) {
    if (warmup_epochs == 0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

namespace {

const double kLogInitVar = std::log(1e-8);

std::size_t fan_in_of(const Layer& l) {
    const Shape& ws = l.weight_mean().shape;
    return ws.size() == 2 ? ws[0] : ws[0] * ws[1] * ws[2];
}

void init_common(Layer& l, Rng& rng) {
    Tensor& M_W = *l.params()[0];
    Tensor& lS_W = *l.params()[1];
    double std_w = std::sqrt(2.0 / static_cast<double>(fan_in_of(l)));
    for (double& v : M_W.data) v = std_w * rng.normal();
    // log-std drawn from N(-9, 1e-4); stored as log-variance.
    for (double& v : lS_W.data) v = 2.0 * (-9.0 + 0.01 * rng.normal());
}

void init_bias(Tensor& bias_mu, Tensor& bias_ls, Rng& rng) {
    for (double& v : bias_mu.data) v = 0.0;
    for (double& v : bias_ls.data) v = 2.0 * (-9.0 + 0.01 * rng.normal());
}

template <class T>
void init_gnj(T& l, Rng& rng) {
    init_common(l, rng);
    for (double& v : l.mu_z.data) v = 1.0;
    for (double& v : l.log_sigma2_z.data) v = kLogInitVar;
    init_bias(l.bias_mu, l.bias_log_sigma2, rng);
}

template <class T>
void init_ghs(T& l, Rng& rng) {
    init_common(l, rng);
    // E[s z~] ~= 1 and Var ~= 1e-8, split equally across the four log-normal
    // factors. The means get a small positive bias so the composed prune
    // score sigma2_z - mu_z starts negative: a fresh model keeps every group
    // at the default threshold 0.
    const double m = 5e-7;
    auto fill = [&](Tensor& mu, Tensor& ls) {
        for (double& v : mu.data) v = m;
        for (double& v : ls.data) v = kLogInitVar;
    };
    fill(l.mu_alpha, l.log_sigma2_alpha);
    fill(l.mu_beta, l.log_sigma2_beta);
    fill(l.mu_sa, l.log_sigma2_sa);
    fill(l.mu_sb, l.log_sigma2_sb);
    init_bias(l.bias_mu, l.bias_log_sigma2, rng);
}

int find_nonfinite_layer(Network& net) {
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        for (Tensor* p : net.layers[i]->params())
            if (!all_finite(*p)) return static_cast<int>(i);
    return -1;
}

} // namespace

Network init_model(const Arch& arch, PriorKind prior, std::uint64_t seed, double tau0) {
    Network net = make_network(arch, prior, tau0);
    Rng rng(seed);
    for (auto& l : net.layers) {
        if (auto* g = dynamic_cast<GNJDense*>(l.get()))
            init_gnj(*g, rng);
        else if (auto* g = dynamic_cast<GNJConv*>(l.get()))
            init_gnj(*g, rng);
        else if (auto* g = dynamic_cast<GHSDense*>(l.get()))
            init_ghs(*g, rng);
        else if (auto* g = dynamic_cast<GHSConv*>(l.get()))
            init_ghs(*g, rng);
    }
    return net;
}

void constrain_stds(Network& net, const std::vector<double>& ceilings) {
    for (std::size_t i = 0; i < net.layers.size() && i < ceilings.size(); ++i) {
        double c = ceilings[i];
        if (!(c > 0.0)) continue;
        double cap = 2.0 * std::log(c);
        for (Tensor* t : net.layers[i]->weight_log_vars())
            for (double& v : t->data) v = std::min(v, cap);
    }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size())
        throw TrainError("adam_step: params/grads size mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), 0.0);
            state.v[i].assign(params[i]->size(), 0.0);
        }
    }
    ++state.t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            double gj = g[j];
            if (!std::isfinite(gj))
                throw TrainError("adam_step: non-finite gradient in parameter " +
                                 std::to_string(i));
            state.m[i][j] = beta1 * state.m[i][j] + (1.0 - beta1) * gj;
            state.v[i][j] = beta2 * state.v[i][j] + (1.0 - beta2) * gj * gj;
            double mh = state.m[i][j] / bc1;
            double vh = state.v[i][j] / bc2;
            p[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

ElboGraph elbo(Network& net, Tape& tape, const Tensor& X, const std::vector<int>& y,
               std::size_t n_total, double kl_scale, Rng& rng) {
    if (y.empty()) throw TrainError("elbo: empty batch");
    if (kl_scale < 0.0 || kl_scale > 1.0)
        throw TrainError("elbo: kl_scale must be in [0,1]");
    Var logits = net.forward_train(tape, X, rng);
    Var mean_nll = softmax_cross_entropy(logits, y);
    Var klw = net.kl_weights(tape);
    Var klz = net.kl_scales(tape);
    double n = static_cast<double>(n_total);
    // Negative ELBO scaled by 1/N: per-datapoint loss to minimize.
    Var loss = add(mean_nll, mul_scalar(add(klw, klz), kl_scale / n));

    ElboGraph g;
    g.loss = loss;
    g.breakdown.neg_log_likelihood = mean_nll.value()[0] * n;
    g.breakdown.kl_weights = klw.value()[0];
    g.breakdown.kl_scales = klz.value()[0];
    g.breakdown.kl_scale = kl_scale;
    g.breakdown.total = -g.breakdown.neg_log_likelihood -
                        kl_scale * (g.breakdown.kl_weights + g.breakdown.kl_scales);
    if (!std::isfinite(g.breakdown.total)) {
        int li = find_nonfinite_layer(net);
        throw TrainError("non-finite ELBO" +
                         (li >= 0 ? " at layer " + std::to_string(li) : std::string()));
    }
    return g;
}

std::vector<EpochLog> train(Network& net, const TrainConfig& cfg, const Dataset& train_set,
                            const Dataset& test_set, std::ostream* log_out) {
    if (cfg.batch_size < 1) throw TrainError("batch_size must be >= 1");
    if (cfg.warmup_epochs > cfg.epochs)
        throw TrainError("warmup_epochs must be <= epochs");
    Rng rng(cfg.seed);
    AdamState state;
    std::vector<Tensor*> params;
    for (auto& l : net.layers)
        for (Tensor* p : l->params()) params.push_back(p);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    ModelMask full = net.full_mask();
    std::vector<EpochLog> logs;
    Tensor X;
    std::vector<int> y;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double kl_scale = warmup_schedule(epoch, cfg.warmup_epochs);
        std::shuffle(order.begin(), order.end(), rng.engine());
        double nll_sum = 0.0;
        double last_klw = 0.0, last_klz = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t k = std::min(cfg.batch_size, order.size() - start);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + k);
            gather(train_set, idx, X, y);

            Tape tape;
            ElboGraph g = elbo(net, tape, X, y, train_set.size(), kl_scale, rng);
            tape.backward(g.loss);

            std::vector<const Tensor*> grads;
            for (auto& l : net.layers)
                for (const Var& v : l->staged()) grads.push_back(&tape.grad(v.id));
            adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2,
                      cfg.eps);
            constrain_stds(net, cfg.std_ceilings);

            nll_sum += g.breakdown.neg_log_likelihood /
                       static_cast<double>(train_set.size()) * static_cast<double>(k);
            last_klw = g.breakdown.kl_weights;
            last_klz = g.breakdown.kl_scales;
        }
        double test_err = net.error_rate(test_set.inputs, test_set.labels, full);
        EpochLog lg{epoch, nll_sum / static_cast<double>(train_set.size()), last_klw,
                    last_klz, test_err};
        logs.push_back(lg);
        if (log_out)
            *log_out << lg.epoch << ' ' << lg.train_nll << ' ' << lg.kl_weights << ' '
                     << lg.kl_scales << ' ' << lg.test_error << '\n';
    }
    return logs;
}

} // namespace bc
