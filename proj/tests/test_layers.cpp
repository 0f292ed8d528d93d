#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "bc/dists.hpp"
#include "bc/layers.hpp"
#include "bc/rng.hpp"

using namespace bc;

namespace {

void fill(Tensor& t, double v) {
    for (double& x : t.data) x = v;
}

struct Moments {
    double mean, var;
};

Moments sample_moments(std::size_t n, Rng& rng, const std::function<double(Rng&)>& draw) {
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = draw(rng);
        s += v;
        s2 += v * v;
    }
    double mean = s / n;
    return {mean, s2 / n - mean * mean};
}

} // namespace

TEST_CASE("gnj scores: spec examples") {
    GNJDense l(3, 2);
    l.mu_z = Tensor(Shape{3}, {1.0, 1.0, 0.1});
    l.log_sigma2_z = Tensor(Shape{3}, {std::log(1e-8), std::log(1.0), std::log(1.0)});
    l.mu_z[1] = 1.0; // sigma2 = mu^2 -> score 0
    auto s = l.scores();
    CHECK(s[0] == doctest::Approx(-18.4207).epsilon(1e-4));
    CHECK(s[1] == doctest::Approx(0.0));
    CHECK(s[2] == doctest::Approx(4.6052).epsilon(1e-4));
    l.mu_z[0] = 0.0;
    CHECK(std::isinf(l.scores()[0]));
}

TEST_CASE("ghs scores: spec examples") {
    GHSDense l(1, 1);
    SUBCASE("all zeros") {
        // mu = 0 and sigma2 = ... exp(0) terms do not vanish; force them.
        fill(l.log_sigma2_alpha, -700);
        fill(l.log_sigma2_beta, -700);
        fill(l.log_sigma2_sa, -700);
        fill(l.log_sigma2_sb, -700);
        CHECK(l.scores()[0] == doctest::Approx(0.0));
    }
    SUBCASE("mu_zt=2, mu_s=1, s2_zt=0.5, s2_s=0.5 -> -2") {
        fill(l.mu_alpha, 2.0);
        fill(l.mu_beta, 2.0);
        fill(l.log_sigma2_alpha, 0.0); // 0.25(1+1) = 0.5
        fill(l.log_sigma2_beta, 0.0);
        fill(l.mu_sa, 1.0);
        fill(l.mu_sb, 1.0);
        fill(l.log_sigma2_sa, 0.0);
        fill(l.log_sigma2_sb, 0.0);
        CHECK(l.scores()[0] == doctest::Approx(-2.0));
        // Score equals -log mode of LN(mu_z, s2_z): mode = exp(mu - s2).
        double mu_z = 2 + 1, s2_z = 0.5 + 0.5;
        CHECK(l.scores()[0] == doctest::Approx(-(mu_z - s2_z)));
    }
}

TEST_CASE("gnj deterministic forward folds scales into means") {
    Rng rng(1);
    GNJDense l(4, 3);
    l.M_W = rng.normal_tensor({4, 3});
    l.mu_z = rng.normal_tensor({4});
    l.bias_mu = rng.normal_tensor({3});
    Tensor H = rng.normal_tensor({2, 4});
    LayerMask mask{1, 0, 1, 1};

    Tensor out = l.forward_det(H, mask);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = l.bias_mu[j];
            for (std::size_t i = 0; i < 4; ++i)
                if (mask[i]) acc += H.at(k, i) * l.mu_z[i] * l.M_W.at(i, j);
            CHECK(out.at(k, j) == doctest::Approx(acc).epsilon(1e-12));
        }
    CHECK_THROWS_AS(l.forward_det(H, LayerMask{1, 1}), ShapeError);
}

TEST_CASE("gnj dense local reparametrization matches hierarchy sampling") {
    GNJDense l(2, 1);
    l.M_W = Tensor(Shape{2, 1}, {0.8, -0.5});
    l.log_Sigma_W = Tensor(Shape{2, 1}, {std::log(0.09), std::log(0.04)});
    l.mu_z = Tensor(Shape{2}, {1.2, 0.7});
    l.log_sigma2_z = Tensor(Shape{2}, {std::log(0.25), std::log(0.16)});
    l.bias_mu = Tensor(Shape{1}, {0.3});
    l.bias_log_sigma2 = Tensor(Shape{1}, {std::log(0.01)});
    Tensor H(Shape{1, 2}, {1.5, -2.0});

    double mean = l.bias_mu[0], var = std::exp(l.bias_log_sigma2[0]);
    for (int i = 0; i < 2; ++i) {
        double m = l.M_W[i], s2 = std::exp(l.log_Sigma_W[i]);
        double mz = l.mu_z[i], s2z = std::exp(l.log_sigma2_z[i]);
        double h = H[i];
        mean += h * mz * m;
        var += h * h * (s2z * (s2 + m * m) + s2 * mz * mz);
    }

    const std::size_t n = 40000;
    Rng r1(11), r2(12);
    Moments lr = sample_moments(n, r1, [&](Rng& rng) {
        Tape tape;
        l.stage(tape);
        return l.forward_train(tape, tape.constant(H), rng).value()[0];
    });
    Moments direct = sample_moments(n, r2, [&](Rng& rng) {
        double acc = l.bias_mu[0] + std::exp(0.5 * l.bias_log_sigma2[0]) * rng.normal();
        for (int i = 0; i < 2; ++i) {
            double w = l.M_W[i] + std::exp(0.5 * l.log_Sigma_W[i]) * rng.normal();
            double z = l.mu_z[i] + std::exp(0.5 * l.log_sigma2_z[i]) * rng.normal();
            acc += H[i] * z * w;
        }
        return acc;
    });
    CHECK(lr.mean == doctest::Approx(mean).epsilon(0.03));
    CHECK(direct.mean == doctest::Approx(mean).epsilon(0.03));
    CHECK(lr.var == doctest::Approx(var).epsilon(0.05));
    CHECK(direct.var == doctest::Approx(var).epsilon(0.05));
}

TEST_CASE("ghs dense local reparametrization matches hierarchy sampling") {
    GHSDense l(1, 1);
    l.M_W = Tensor(Shape{1, 1}, {0.6});
    l.log_Sigma_W = Tensor(Shape{1, 1}, {std::log(0.04)});
    fill(l.mu_alpha, -0.2);
    fill(l.log_sigma2_alpha, std::log(0.09));
    fill(l.mu_beta, 0.1);
    fill(l.log_sigma2_beta, std::log(0.16));
    fill(l.mu_sa, -0.3);
    fill(l.log_sigma2_sa, std::log(0.04));
    fill(l.mu_sb, 0.2);
    fill(l.log_sigma2_sb, std::log(0.09));
    l.bias_mu = Tensor(Shape{1}, {0.1});
    l.bias_log_sigma2 = Tensor(Shape{1}, {std::log(0.01)});
    Tensor H(Shape{1, 1}, {1.3});

    const std::size_t n = 40000;
    Rng r1(21), r2(22);
    Moments lr = sample_moments(n, r1, [&](Rng& rng) {
        Tape tape;
        l.stage(tape);
        return l.forward_train(tape, tape.constant(H), rng).value()[0];
    });
    Moments direct = sample_moments(n, r2, [&](Rng& rng) {
        double log_sa = l.mu_sa[0] + std::exp(0.5 * l.log_sigma2_sa[0]) * rng.normal();
        double log_sb = l.mu_sb[0] + std::exp(0.5 * l.log_sigma2_sb[0]) * rng.normal();
        double log_a = l.mu_alpha[0] + std::exp(0.5 * l.log_sigma2_alpha[0]) * rng.normal();
        double log_b = l.mu_beta[0] + std::exp(0.5 * l.log_sigma2_beta[0]) * rng.normal();
        double z = std::exp(0.5 * (log_sa + log_sb + log_a + log_b));
        double w = l.M_W[0] + std::exp(0.5 * l.log_Sigma_W[0]) * rng.normal();
        double b = l.bias_mu[0] + std::exp(0.5 * l.bias_log_sigma2[0]) * rng.normal();
        return H[0] * z * w + b;
    });
    CHECK(lr.mean == doctest::Approx(direct.mean).epsilon(0.03));
    CHECK(lr.var == doctest::Approx(direct.var).epsilon(0.06));
}

TEST_CASE("gnj conv local reparametrization matches hierarchy sampling") {
    GNJConv l(1, 1, 1, 1);
    l.M_W = Tensor(Shape{1, 1, 1, 1}, {0.9});
    l.log_Sigma_W = Tensor(Shape{1, 1, 1, 1}, {std::log(0.04)});
    l.mu_z = Tensor(Shape{1}, {0.8});
    l.log_sigma2_z = Tensor(Shape{1}, {std::log(0.09)});
    l.bias_mu = Tensor(Shape{1}, {-0.2});
    l.bias_log_sigma2 = Tensor(Shape{1}, {std::log(0.01)});
    Tensor H(Shape{1, 1, 1, 1}, {1.7});

    const std::size_t n = 40000;
    Rng r1(31), r2(32);
    Moments lr = sample_moments(n, r1, [&](Rng& rng) {
        Tape tape;
        l.stage(tape);
        return l.forward_train(tape, tape.constant(H), rng).value()[0];
    });
    Moments direct = sample_moments(n, r2, [&](Rng& rng) {
        double w = l.M_W[0] + std::exp(0.5 * l.log_Sigma_W[0]) * rng.normal();
        double z = l.mu_z[0] + std::exp(0.5 * l.log_sigma2_z[0]) * rng.normal();
        double b = l.bias_mu[0] + std::exp(0.5 * l.bias_log_sigma2[0]) * rng.normal();
        return H[0] * w * z + b;
    });
    CHECK(lr.mean == doctest::Approx(direct.mean).epsilon(0.03));
    CHECK(lr.var == doctest::Approx(direct.var).epsilon(0.06));
}

TEST_CASE("ghs conv local reparametrization matches hierarchy sampling") {
    GHSConv l(1, 1, 1, 1);
    l.M_W = Tensor(Shape{1, 1, 1, 1}, {0.7});
    l.log_Sigma_W = Tensor(Shape{1, 1, 1, 1}, {std::log(0.09)});
    fill(l.mu_alpha, 0.1);
    fill(l.log_sigma2_alpha, std::log(0.09));
    fill(l.mu_beta, -0.1);
    fill(l.log_sigma2_beta, std::log(0.04));
    fill(l.mu_sa, 0.05);
    fill(l.log_sigma2_sa, std::log(0.04));
    fill(l.mu_sb, -0.15);
    fill(l.log_sigma2_sb, std::log(0.09));
    l.bias_mu = Tensor(Shape{1}, {0.25});
    l.bias_log_sigma2 = Tensor(Shape{1}, {std::log(0.01)});
    Tensor H(Shape{1, 1, 1, 1}, {-1.1});

    const std::size_t n = 40000;
    Rng r1(41), r2(42);
    Moments lr = sample_moments(n, r1, [&](Rng& rng) {
        Tape tape;
        l.stage(tape);
        return l.forward_train(tape, tape.constant(H), rng).value()[0];
    });
    Moments direct = sample_moments(n, r2, [&](Rng& rng) {
        double log_sa = l.mu_sa[0] + std::exp(0.5 * l.log_sigma2_sa[0]) * rng.normal();
        double log_sb = l.mu_sb[0] + std::exp(0.5 * l.log_sigma2_sb[0]) * rng.normal();
        double log_a = l.mu_alpha[0] + std::exp(0.5 * l.log_sigma2_alpha[0]) * rng.normal();
        double log_b = l.mu_beta[0] + std::exp(0.5 * l.log_sigma2_beta[0]) * rng.normal();
        double z = std::exp(0.5 * (log_sa + log_sb + log_a + log_b));
        double w = l.M_W[0] + std::exp(0.5 * l.log_Sigma_W[0]) * rng.normal();
        double b = l.bias_mu[0] + std::exp(0.5 * l.bias_log_sigma2[0]) * rng.normal();
        return H[0] * w * z + b;
    });
    CHECK(lr.mean == doctest::Approx(direct.mean).epsilon(0.03));
    CHECK(lr.var == doctest::Approx(direct.var).epsilon(0.06));
}

TEST_CASE("autograd KL expressions agree with the pure closed forms") {
    Rng rng(5);
    SUBCASE("gnj") {
        GNJDense l(3, 2);
        l.M_W = rng.normal_tensor({3, 2});
        l.log_Sigma_W = rng.normal_tensor({3, 2});
        l.mu_z = rng.normal_tensor({3});
        l.log_sigma2_z = rng.normal_tensor({3});
        l.bias_mu = rng.normal_tensor({2});
        l.bias_log_sigma2 = rng.normal_tensor({2});
        Tape tape;
        l.stage(tape);

        double klw = 0;
        for (std::size_t i = 0; i < l.M_W.size(); ++i)
            klw += kl_conditional_gaussian(l.M_W[i], std::exp(l.log_Sigma_W[i]));
        for (std::size_t i = 0; i < l.bias_mu.size(); ++i)
            klw += kl_conditional_gaussian(l.bias_mu[i], std::exp(l.bias_log_sigma2[i]));
        CHECK(l.kl_weights(tape).value()[0] == doctest::Approx(klw).epsilon(1e-10));

        double klz = 0;
        for (double s : l.scores()) klz -= neg_kl_nj_scale(s);
        CHECK(l.kl_scales(tape, 1e-5).value()[0] == doctest::Approx(klz).epsilon(1e-10));
    }
    SUBCASE("ghs") {
        GHSDense l(3, 2);
        for (Tensor* p : l.params()) *p = rng.normal_tensor(p->shape);
        for (double& v : l.log_Sigma_W.data) v = -std::abs(v) - 1;
        Tape tape;
        l.stage(tape);
        double tau0 = 1e-3;

        std::vector<LogNormalParams> alphas, betas;
        for (std::size_t i = 0; i < 3; ++i) {
            alphas.push_back({l.mu_alpha[i], l.log_sigma2_alpha[i]});
            betas.push_back({l.mu_beta[i], l.log_sigma2_beta[i]});
        }
        double klz = -horseshoe_scale_neg_kl({l.mu_sa[0], l.log_sigma2_sa[0]},
                                             {l.mu_sb[0], l.log_sigma2_sb[0]}, alphas,
                                             betas, tau0);
        CHECK(l.kl_scales(tape, tau0).value()[0] == doctest::Approx(klz).epsilon(1e-10));
    }
}

TEST_CASE("gnj marginal variance: degenerate cases and monte carlo") {
    GNJDense l(2, 2);
    l.M_W = Tensor(Shape{2, 2}, {2.0, 1.0, -1.0, 0.5});
    l.log_Sigma_W = Tensor(Shape{2, 2}, {0.0, std::log(0.5), std::log(2.0), 0.0});
    SUBCASE("sigma2_z = 0, mu_z = 1 -> V = Sigma") {
        l.mu_z = Tensor(Shape{2}, {1.0, 1.0});
        fill(l.log_sigma2_z, -700);
        Tensor V = l.marginal_variance();
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(V[i] == doctest::Approx(std::exp(l.log_Sigma_W[i])));
    }
    SUBCASE("sigma2_z = 1, mu_z = 0, mu = 2, sigma2 = 1 -> 5") {
        fill(l.mu_z, 0.0);
        fill(l.log_sigma2_z, 0.0);
        CHECK(l.marginal_variance()[0] == doctest::Approx(5.0));
    }
    SUBCASE("monte carlo") {
        l.mu_z = Tensor(Shape{2}, {0.9, -0.4});
        l.log_sigma2_z = Tensor(Shape{2}, {std::log(0.3), std::log(0.7)});
        Tensor V = l.marginal_variance();
        Rng rng(6);
        std::size_t n = 400000;
        double s = 0, s2 = 0;
        for (std::size_t k = 0; k < n; ++k) {
            double z = l.mu_z[0] + std::sqrt(0.3) * rng.normal();
            double w = l.M_W[0] + std::exp(0.5 * l.log_Sigma_W[0]) * rng.normal();
            s += z * w;
            s2 += z * w * z * w;
        }
        double emp = s2 / n - (s / n) * (s / n);
        CHECK(V[0] == doctest::Approx(emp).epsilon(0.02));
    }
}

TEST_CASE("ghs marginal variance: degenerate cases and monte carlo") {
    GHSConv l(1, 1, 1, 1);
    l.M_W = Tensor(Shape{1, 1, 1, 1}, {1.5});
    l.log_Sigma_W = Tensor(Shape{1, 1, 1, 1}, {std::log(0.36)});
    SUBCASE("sigma2_z = 0, mu_z = 0 -> sigma2") {
        fill(l.log_sigma2_alpha, -700);
        fill(l.log_sigma2_beta, -700);
        fill(l.log_sigma2_sa, -700);
        fill(l.log_sigma2_sb, -700);
        CHECK(l.marginal_variance()[0] == doctest::Approx(0.36));
    }
    SUBCASE("sigma2_z = 0, mu_z = ln 2 -> 4 sigma2") {
        fill(l.log_sigma2_alpha, -700);
        fill(l.log_sigma2_beta, -700);
        fill(l.log_sigma2_sa, -700);
        fill(l.log_sigma2_sb, -700);
        fill(l.mu_alpha, std::log(2.0));
        fill(l.mu_beta, std::log(2.0)); // mu_zt = log 2, mu_s = 0
        CHECK(l.marginal_variance()[0] == doctest::Approx(4 * 0.36));
    }
    SUBCASE("monte carlo") {
        fill(l.mu_alpha, -0.3);
        fill(l.log_sigma2_alpha, std::log(0.2));
        fill(l.mu_beta, 0.1);
        fill(l.log_sigma2_beta, std::log(0.1));
        fill(l.mu_sa, -0.1);
        fill(l.log_sigma2_sa, std::log(0.05));
        fill(l.mu_sb, 0.0);
        fill(l.log_sigma2_sb, std::log(0.1));
        ImpliedScales sc = l.implied_scales();
        double mu_z = sc.mu_z_tilde[0] + sc.mu_s;
        double s_z = std::sqrt(sc.sigma2_z_tilde[0] + sc.sigma2_s);
        Rng rng(7);
        std::size_t n = 400000;
        double s = 0, s2 = 0;
        for (std::size_t k = 0; k < n; ++k) {
            double z = std::exp(mu_z + s_z * rng.normal());
            double w = l.M_W[0] + 0.6 * rng.normal();
            s += z * w;
            s2 += z * w * z * w;
        }
        double emp = s2 / n - (s / n) * (s / n);
        CHECK(l.marginal_variance()[0] == doctest::Approx(emp).epsilon(0.02));
    }
}

TEST_CASE("arch parsing") {
    Arch a = Arch::parse("784-300-100");
    CHECK(a.items.size() == 2);
    CHECK(a.to_string() == "784-300-100");
    CHECK(a.bayes_layer_count() == 2);
    Arch l5 = Arch::parse("lenet5");
    CHECK(l5.to_string() == "lenet5");
    CHECK(l5.bayes_layer_count() == 4);
    CHECK_THROWS_AS(Arch::parse("784--300"), ShapeError);
    CHECK_THROWS_AS(Arch::parse("784"), ShapeError);
}

TEST_CASE("network forward determinism and mask validation") {
    Network net = make_network(Arch::parse("6-4-3"), PriorKind::GNJ);
    Rng init(3);
    for (auto& l : net.layers)
        for (Tensor* p : l->params()) *p = init.normal_tensor(p->shape);
    Tensor X = Rng(9).normal_tensor({5, 6});

    Rng r1(13), r2(13);
    Tape t1, t2;
    Var o1 = net.forward_train(t1, X, r1);
    Var o2 = net.forward_train(t2, X, r2);
    CHECK(o1.value().data == o2.value().data);

    CHECK_THROWS_AS(net.forward_det(X, ModelMask{}), ShapeError);
    Tensor logits = net.forward_det(X, net.full_mask());
    CHECK(logits.shape == Shape{5, 3});
}
