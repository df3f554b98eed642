#include <catch2/catch.hpp>

#include "dps/metrics.hpp"
#include "dps/rng.hpp"

using namespace dps;

TEST_CASE("prediction metrics") {
    SECTION("perfect predictions score 1 across the board") {
        std::vector<int> labels = {0, 1, 0, 1, 1};
        CHECK(accuracy(labels, labels) == 1.0);
        CHECK(macro_f1(labels, labels) == Approx(1.0).margin(1e-12));
        CHECK(roc_auc({0.1, 0.9, 0.2, 0.8, 0.7}, labels) == Approx(1.0).margin(1e-12));
    }
    SECTION("random scores concentrate AUC near 0.5") {
        RngStream rng(3);
        std::vector<int> labels(10000);
        std::vector<double> scores(10000);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            labels[i] = rng.bernoulli(0.5) ? 1 : 0;
            scores[i] = rng.uniform();
        }
        const double auc = roc_auc(scores, labels);
        CHECK(auc >= 0.48);
        CHECK(auc <= 0.52);
    }
    SECTION("all-one-class predictions on balanced binary labels") {
        std::vector<int> labels = {0, 1, 0, 1};
        std::vector<int> preds = {1, 1, 1, 1};
        CHECK(accuracy(preds, labels) == Approx(0.5).margin(1e-12));
        // predicted class: precision 0.5, recall 1 -> F1 2/3; other class 0
        CHECK(macro_f1(preds, labels) == Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("tied scores resolve to AUC 0.5 via midranks") {
        CHECK(roc_auc({0.4, 0.4, 0.4, 0.4}, {0, 1, 0, 1}) == Approx(0.5).margin(1e-12));
    }
    SECTION("single-class labels rejected for AUC") {
        CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
        CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {0, 2}), std::invalid_argument);
    }
}

TEST_CASE("domain_distance (Wasserstein-1)") {
    SECTION("identical lists have zero distance") {
        CHECK(domain_distance({0.3, -1.0, 2.0}, {0.3, -1.0, 2.0}) == Approx(0.0).margin(1e-15));
    }
    SECTION("point masses {0,0} vs {1,1} are distance 1") {
        CHECK(domain_distance({0.0, 0.0}, {1.0, 1.0}) == Approx(1.0).margin(1e-12));
    }
    SECTION("unequal sizes: {0,1} vs {0.5} by hand") {
        CHECK(domain_distance({0.0, 1.0}, {0.5}) == Approx(0.5).margin(1e-12));
    }
    SECTION("symmetric on random inputs") {
        RngStream rng(11);
        for (int t = 0; t < 50; ++t) {
            std::vector<double> a(static_cast<std::size_t>(rng.uniform_int(1, 20)));
            std::vector<double> b(static_cast<std::size_t>(rng.uniform_int(1, 20)));
            for (double& v : a) v = rng.uniform(-3.0, 3.0);
            for (double& v : b) v = rng.uniform(-3.0, 3.0);
            CHECK(domain_distance(a, b) == Approx(domain_distance(b, a)).margin(1e-12));
        }
    }
    SECTION("triangle inequality on random triples") {
        RngStream rng(13);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> a(8), b(8), c(8);
            for (double& v : a) v = rng.uniform(-2.0, 2.0);
            for (double& v : b) v = rng.uniform(-2.0, 2.0);
            for (double& v : c) v = rng.uniform(-2.0, 2.0);
            CHECK(domain_distance(a, c) <=
                  domain_distance(a, b) + domain_distance(b, c) + 1e-9);
        }
    }
    SECTION("empty list rejected") {
        CHECK_THROWS_AS(domain_distance({}, {1.0}), std::invalid_argument);
    }
}

TEST_CASE("equipredictivity_gap") {
    CHECK(equipredictivity_gap({0.4, 0.4, 0.4}) == Approx(0.0).margin(1e-15));
    CHECK(equipredictivity_gap({0.5, 0.7, 0.9}) == Approx(0.4).margin(1e-12));
    CHECK(equipredictivity_gap({0.9, 0.5, 0.7}) == Approx(0.4).margin(1e-12));
}

TEST_CASE("diversity report") {
    SECTION("identical generator domains have zero intra distance") {
        std::vector<double> src = {1.0, 2.0};
        std::vector<std::vector<double>> doms = {{0.0, 0.5}, {0.0, 0.5}, {0.0, 0.5}};
        DiversityReport r = diversity_from_energies(src, doms);
        REQUIRE(r.d_intra.has_value());
        CHECK(*r.d_intra == Approx(0.0).margin(1e-15));
        CHECK(r.d_source.size() == 3);
        for (double d : r.d_source) CHECK(d > 0.0);
    }
    SECTION("K = 2: intra equals the single pairwise distance") {
        std::vector<std::vector<double>> doms = {{0.0, 1.0}, {2.0, 3.0}};
        DiversityReport r = diversity_from_energies({0.0}, doms);
        REQUIRE(r.d_intra.has_value());
        CHECK(*r.d_intra == Approx(domain_distance(doms[0], doms[1])).margin(1e-12));
    }
    SECTION("matches a brute-force pair loop for K <= 5") {
        RngStream rng(17);
        for (int k = 2; k <= 5; ++k) {
            std::vector<double> src(6);
            for (double& v : src) v = rng.uniform(-1.0, 1.0);
            std::vector<std::vector<double>> doms(static_cast<std::size_t>(k),
                                                  std::vector<double>(6));
            for (auto& d : doms)
                for (double& v : d) v = rng.uniform(-1.0, 1.0);
            DiversityReport r = diversity_from_energies(src, doms);
            double total = 0.0;
            int pairs = 0;
            for (int i = 0; i < k; ++i)
                for (int j = i + 1; j < k; ++j) {
                    total += domain_distance(doms[static_cast<std::size_t>(i)],
                                             doms[static_cast<std::size_t>(j)]);
                    ++pairs;
                }
            REQUIRE(r.d_intra.has_value());
            CHECK(*r.d_intra == Approx(total / pairs).margin(1e-12));
            for (int i = 0; i < k; ++i)
                CHECK(r.d_source[static_cast<std::size_t>(i)] ==
                      Approx(domain_distance(src, doms[static_cast<std::size_t>(i)]))
                          .margin(1e-12));
        }
    }
    SECTION("K = 1: intra distance reported absent") {
        DiversityReport r = diversity_from_energies({0.0, 1.0}, {{0.5, 0.5}});
        CHECK_FALSE(r.d_intra.has_value());
        CHECK(r.d_source.size() == 1);
    }
    SECTION("invariant under a common shift of all energies") {
        RngStream rng(19);
        std::vector<double> src(5);
        std::vector<std::vector<double>> doms(3, std::vector<double>(5));
        for (double& v : src) v = rng.uniform(-1.0, 1.0);
        for (auto& d : doms)
            for (double& v : d) v = rng.uniform(-1.0, 1.0);
        DiversityReport base = diversity_from_energies(src, doms);
        const double c = 3.21;
        std::vector<double> src2 = src;
        for (double& v : src2) v += c;
        auto doms2 = doms;
        for (auto& d : doms2)
            for (double& v : d) v += c;
        DiversityReport shifted = diversity_from_energies(src2, doms2);
        CHECK(*shifted.d_intra == Approx(*base.d_intra).margin(1e-12));
        for (std::size_t i = 0; i < base.d_source.size(); ++i)
            CHECK(shifted.d_source[i] == Approx(base.d_source[i]).margin(1e-12));
    }
    SECTION("distance matrix is symmetric with zero diagonal") {
        DiversityReport r = diversity_from_energies({0.0, 2.0}, {{1.0}, {3.0, 4.0}});
        for (std::size_t i = 0; i < r.matrix.size(); ++i) {
            CHECK(r.matrix[i][i] == 0.0);
            for (std::size_t j = 0; j < r.matrix.size(); ++j)
                CHECK(r.matrix[i][j] == r.matrix[j][i]);
        }
    }
}
