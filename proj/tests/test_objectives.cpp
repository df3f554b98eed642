#include <catch2/catch.hpp>

#include "dps/backbone.hpp"
#include "dps/generators.hpp"
#include "dps/objectives.hpp"
#include "dps/rng.hpp"
#include "test_helpers.hpp"

using namespace dps;

TEST_CASE("kld_loss") {
    SECTION("p = rho = 0.5 gives exactly zero") {
        Tensor p = Tensor::from({4}, {0.5, 0.5, 0.5, 0.5});
        CHECK(kld_loss({{p}}, 0.5, 1).value() == 0.0);
    }
    SECTION("single unit p=0.9, rho=0.5 matches the closed-form Bernoulli KL") {
        const double oracle = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
        Tensor p = Tensor::from({1}, {0.9});
        const double got = kld_loss({{p}}, 0.5, 1).value();
        CHECK(got == Approx(oracle).margin(1e-12));
        CHECK(got == Approx(0.36806).margin(5e-6));
    }
    SECTION("KL is non-negative for random (p, rho)") {
        RngStream rng(19);
        for (int i = 0; i < 1000; ++i) {
            Tensor p = Tensor::from({1}, {rng.uniform(0.001, 0.999)});
            CHECK(kld_loss({{p}}, rng.uniform(0.001, 0.999), 1).value() >= -1e-15);
        }
    }
    SECTION("probabilities at exactly 0 or 1 are rejected") {
        CHECK_THROWS_AS(kld_loss({{Tensor::from({1}, {1.0})}}, 0.5, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(kld_loss({{Tensor::from({1}, {0.0})}}, 0.5, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(kld_loss({{Tensor::from({1}, {0.5})}}, 1.0, 1),
                        std::invalid_argument);
    }
    SECTION("averaging denominators follow the two formulas") {
        auto bern_kl = [](double p, double r) {
            return p * std::log(p / r) + (1 - p) * std::log((1 - p) / (1 - r));
        };
        // 2 generators, 3 samples, 2 units each; graph-task denominator N*K
        std::vector<std::vector<Tensor>> probs(2);
        double total = 0.0;
        double v = 0.1;
        for (auto& gen : probs)
            for (int s = 0; s < 3; ++s) {
                Tensor p = Tensor::from({2}, {v, 1.0 - v});
                total += bern_kl(v, 0.4) + bern_kl(1.0 - v, 0.4);
                v += 0.07;
                gen.push_back(p);
            }
        CHECK(kld_loss(probs, 0.4, 2).value() == Approx(total / (3.0 * 2.0)).margin(1e-12));
        // edge-mask variant divides by N*(K+1) instead
        CHECK(kld_loss(probs, 0.4, 3).value() == Approx(total / (3.0 * 3.0)).margin(1e-12));
    }
    SECTION("kld decreases monotonically as p interpolates toward rho") {
        RngStream rng(29);
        const double rho = 0.5;
        std::vector<double> base(6);
        for (double& x : base) x = rng.uniform(0.05, 0.95);
        double prev = std::numeric_limits<double>::infinity();
        for (double t : {1.0, 0.75, 0.5, 0.25, 0.05, 0.0}) {
            std::vector<double> interp(base.size());
            for (std::size_t i = 0; i < base.size(); ++i)
                interp[i] = rho + t * (base[i] - rho);
            const double v = kld_loss({{Tensor::from({6}, interp)}}, rho, 1).value();
            CHECK(v <= prev + 1e-12);
            prev = v;
        }
        CHECK(prev == Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("ce_loss") {
    SECTION("uniform logits over 3 classes cost ln 3 per sample") {
        Tensor logits = Tensor::zeros({2, 3});
        Tensor ce = softmax_cross_entropy(logits, {0, 2});
        DomainBatch b;
        b.ce = {ce, ce};
        CHECK(ce_loss(b).value() == Approx(std::log(3.0)).margin(1e-12));
    }
    SECTION("saturated correct prediction costs < 1e-9") {
        Tensor logits = Tensor::from({1, 3}, {50.0, 0.0, 0.0});
        DomainBatch b;
        b.ce = {softmax_cross_entropy(logits, {0}), softmax_cross_entropy(logits, {0})};
        CHECK(ce_loss(b).value() < 1e-9);
    }
    SECTION("identical domains average to the single-domain value") {
        Tensor logits = Tensor::from({2, 2}, {0.3, -0.4, 1.2, 0.1});
        Tensor ce = softmax_cross_entropy(logits, {0, 1});
        const double single = (ce.data()[0] + ce.data()[1]) / 2.0;
        DomainBatch b;
        b.ce = {ce, ce};
        CHECK(ce_loss(b).value() == Approx(single).margin(1e-12));
        b.ce = {ce, ce, ce};
        CHECK(ce_loss(b).value() == Approx(single).margin(1e-12));
    }
    SECTION("label out of range propagates as an error") {
        CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({1, 2}), {2}),
                        std::invalid_argument);
    }
}

TEST_CASE("energy_score") {
    SECTION("logits [0,0] score -ln 2") {
        CHECK(energy_score(Tensor::from({2}, {0.0, 0.0})).value() ==
              Approx(-std::log(2.0)).margin(1e-9));
    }
    SECTION("single-class logit z scores -z") {
        CHECK(energy_score(Tensor::from({1}, {3.7})).value() == Approx(-3.7).margin(1e-12));
    }
    SECTION("constant logit shift moves the energy by -c exactly") {
        Tensor logits = Tensor::from({3}, {0.2, -1.0, 2.5});
        const double base = energy_score(logits).value();
        for (double c : {-5.0, 0.1, 12.0})
            CHECK(energy_score(scalar_add(logits, c)).value() ==
                  Approx(base - c).margin(1e-12));
    }
}

TEST_CASE("dist_loss") {
    SECTION("equal energies across domains give zero") {
        Tensor e = Tensor::from({3}, {1.0, -2.0, 0.5});
        DomainBatch b;
        b.energy = {e, e, e};
        b.ce = b.energy;
        CHECK(dist_loss(b).value() == Approx(0.0).margin(1e-15));
    }
    SECTION("N=1, K=1, energies {0,2} evaluate to 2") {
        DomainBatch b;
        b.energy = {Tensor::from({1}, {0.0}), Tensor::from({1}, {2.0})};
        CHECK(dist_loss(b).value() == Approx(2.0).margin(1e-12));
    }
    SECTION("matches the brute-force pairwise oracle for K <= 5") {
        RngStream rng(37);
        for (int k = 1; k <= 5; ++k) {
            const int n = 4;
            std::vector<std::vector<double>> e(static_cast<std::size_t>(k) + 1,
                                               std::vector<double>(n));
            DomainBatch b;
            for (auto& dom : e) {
                for (double& v : dom) v = rng.uniform(-2.0, 2.0);
                b.energy.push_back(Tensor::from({static_cast<std::size_t>(n)}, dom));
            }
            double oracle = 0.0;
            for (int s = 0; s < n; ++s) {
                double pair_sum = 0.0;
                for (int j = 0; j <= k; ++j)
                    for (int l = j + 1; l <= k; ++l)
                        pair_sum += 0.5 * (e[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] -
                                           e[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)]) *
                                    (e[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] -
                                     e[static_cast<std::size_t>(l)][static_cast<std::size_t>(s)]);
                oracle += 2.0 / (k * (k + 1.0)) * pair_sum;
            }
            oracle /= n;
            CHECK(dist_loss(b).value() == Approx(oracle).margin(1e-12));
        }
    }
    SECTION("invariant under relabeling of the generator domains") {
        RngStream rng(41);
        DomainBatch b;
        for (int d = 0; d < 4; ++d) {
            std::vector<double> v(3);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            b.energy.push_back(Tensor::from({3}, v));
        }
        const double base = dist_loss(b).value();
        DomainBatch perm;
        perm.energy = {b.energy[2], b.energy[0], b.energy[1], b.energy[3]};
        CHECK(dist_loss(perm).value() == Approx(base).margin(1e-12));
    }
    SECTION("missing domain energies are an error") {
        DomainBatch b;
        b.energy = {Tensor::from({2}, {0.0, 1.0}), Tensor()};
        CHECK_THROWS_AS(dist_loss(b), std::invalid_argument);
        b.energy = {Tensor::from({2}, {0.0, 1.0}), Tensor::from({1}, {0.0})};
        CHECK_THROWS_AS(dist_loss(b), std::invalid_argument);
    }
}

TEST_CASE("rex_variance_loss") {
    SECTION("equal per-domain losses give zero") {
        Tensor ce = Tensor::from({2}, {0.7, 0.7});
        DomainBatch b;
        b.ce = {ce, ce, ce};
        CHECK(rex_variance_loss(b).value() == Approx(0.0).margin(1e-12));
    }
    SECTION("per-domain means {0,2} give variance 1") {
        DomainBatch b;
        b.ce = {Tensor::from({2}, {0.0, 0.0}), Tensor::from({2}, {2.0, 2.0})};
        CHECK(rex_variance_loss(b).value() == Approx(1.0).margin(1e-12));
    }
    SECTION("invariant under a constant shift of every domain loss") {
        RngStream rng(43);
        DomainBatch b;
        for (int d = 0; d < 3; ++d) {
            std::vector<double> v(4);
            for (double& x : v) x = rng.uniform(0.0, 2.0);
            b.ce.push_back(Tensor::from({4}, v));
        }
        const double base = rex_variance_loss(b).value();
        DomainBatch shifted;
        for (const Tensor& t : b.ce) shifted.ce.push_back(scalar_add(t, 1.37));
        CHECK(rex_variance_loss(shifted).value() == Approx(base).margin(1e-10));
    }
}

TEST_CASE("outer and inner objectives") {
    RngStream rng(47);
    DomainBatch b;
    std::vector<std::vector<Tensor>> probs(2);
    for (int d = 0; d < 3; ++d) {
        std::vector<double> ce(4), en(4);
        for (double& x : ce) x = rng.uniform(0.1, 2.0);
        for (double& x : en) x = rng.uniform(-2.0, 0.5);
        b.ce.push_back(Tensor::from({4}, ce));
        b.energy.push_back(Tensor::from({4}, en));
    }
    for (auto& gen : probs)
        for (int s = 0; s < 4; ++s) {
            std::vector<double> p(3);
            for (double& x : p) x = rng.uniform(0.1, 0.9);
            gen.push_back(Tensor::from({3}, p));
        }

    SECTION("alpha = beta = 0 reduces both to the cross entropy") {
        const double ce = ce_loss(b).value();
        CHECK(outer_loss(b, 0.0).value() == Approx(ce).margin(1e-15));
        CHECK(inner_loss(b, probs, 0.0, 0.0, 0.5, 2).value() == Approx(ce).margin(1e-15));
    }
    SECTION("inner - outer = beta*kld - 2*alpha*dist") {
        const double alpha = 0.7, beta = 0.3, rho = 0.5;
        const double gap = inner_loss(b, probs, alpha, beta, rho, 2).value() -
                           outer_loss(b, alpha).value();
        const double expect =
            beta * kld_loss(probs, rho, 2).value() - 2.0 * alpha * dist_loss(b).value();
        CHECK(gap == Approx(expect).margin(1e-12));
    }
    SECTION("identical augmented domains leave only source-pair distance") {
        DomainBatch same;
        Tensor e = Tensor::from({2}, {0.4, -0.2});
        Tensor es = Tensor::from({2}, {1.0, 1.0});
        same.energy = {e, e, es};  // two identical generator domains + source
        same.ce = same.energy;
        // pairs (0,1) vanish; (0,2) and (1,2) remain
        double manual = 0.0;
        for (int s = 0; s < 2; ++s) {
            const double d = e.data()[static_cast<std::size_t>(s)] -
                             es.data()[static_cast<std::size_t>(s)];
            manual += 2.0 / (2.0 * 3.0) * (0.5 * d * d + 0.5 * d * d);
        }
        manual /= 2.0;
        CHECK(dist_loss(same).value() == Approx(manual).margin(1e-12));
        // and with energies equal everywhere, outer collapses to the CE
        same.energy = {e, e, e};
        CHECK(outer_loss(same, 0.9).value() == Approx(ce_loss(same).value()).margin(1e-12));
    }
    SECTION("negative weights rejected") {
        CHECK_THROWS_AS(outer_loss(b, -0.1), std::invalid_argument);
        CHECK_THROWS_AS(inner_loss(b, probs, 0.1, -0.2, 0.5, 2), std::invalid_argument);
    }
}

TEST_CASE("full objective gradients on a 4-node toy graph") {
    LabeledGraph g;
    g.n = 4;
    g.feat_dim = 2;
    g.edges = {{0, 1}, {1, 2}, {2, 3}, {0, 2}};
    g.x = {0.4, -0.3, 0.9, 0.2, -0.5, 0.7, 0.1, -0.8};
    g.y = 1;
    const int classes = 3, k = 2;

    RngStream grng(101), prng(102), nrng(103);
    GeneratorParams gp = init_generators(k, 2, 3, Mask::Kind::node, 1, grng);
    PredictorParams pp = init_predictor(2, 3, classes, 2, prng);

    std::vector<std::vector<double>> noise(static_cast<std::size_t>(k),
                                           std::vector<double>(4));
    for (auto& nv : noise)
        for (double& v : nv) {
            const double u = nrng.uniform_open();
            v = std::log(u / (1.0 - u));
        }

    std::vector<Tensor> params;
    for (auto& [name, t] : named_params(gp)) params.push_back(t);
    for (auto& [name, t] : named_params(pp)) params.push_back(t);

    ConcreteSampleConfig cfg;
    auto build = [&](bool outer) {
        DomainBatch batch;
        std::vector<std::vector<Tensor>> probs(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            Tensor p = node_probs(g, gp, static_cast<std::size_t>(i));
            probs[static_cast<std::size_t>(i)].push_back(p);
            Tensor m = sample_concrete_with_noise(p, cfg, noise[static_cast<std::size_t>(i)]);
            Tensor logits = predictor_logits(g, Mask{Mask::Kind::node, m}, pp);
            batch.ce.push_back(softmax_cross_entropy(logits, {g.y}));
            batch.energy.push_back(energy_score(logits));
        }
        Tensor src = predictor_logits(g, std::nullopt, pp);
        batch.ce.push_back(softmax_cross_entropy(src, {g.y}));
        batch.energy.push_back(energy_score(src));
        return outer ? outer_loss(batch, 0.5)
                     : inner_loss(batch, probs, 0.5, 0.1, 0.5, static_cast<std::size_t>(k));
    };

    CHECK(dps::testing::max_relative_grad_error(params, [&] { return build(false); }) <= 1e-4);
    CHECK(dps::testing::max_relative_grad_error(params, [&] { return build(true); }) <= 1e-4);
}
