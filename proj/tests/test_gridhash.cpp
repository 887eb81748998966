#include "fixtures.hpp"
#include "forster/error.hpp"
#include "forster/gridhash.hpp"

#include <doctest.h>

#include <cmath>

using namespace forster;
using namespace forster::gridhash;

TEST_CASE("grid partition of identical points is one piece") {
    Rng rng(1);
    MatrixXd Q = MatrixXd::Constant(3, 7, 0.37);
    for (int s = 0; s < 50; ++s) CHECK(grid_partition(Q, 0.5, rng).pieces.size() == 1);
}

TEST_CASE("grid partition same-piece distance bound") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 1 + static_cast<int>(rng.below(4));
        MatrixXd Q = 3.0 * fixtures::gaussian(k, 40, rng);
        const double rho = rng.uniform(0.2, 2.0);
        auto P = grid_partition(Q, rho, rng);
        P.validate();
        REQUIRE(P.support_size() == 40);
        for (const auto& piece : P.pieces)
            for (int u : piece)
                for (int v : piece) REQUIRE((Q.col(u) - Q.col(v)).norm() <= rho * std::sqrt(k) + 1e-12);
    }
}

TEST_CASE("grid partition separation rate in 1d") {
    Rng rng(3);
    MatrixXd Q(1, 2);
    Q << 0.1, 0.4;
    const int trials = 100000;
    int sep = 0;
    for (int s = 0; s < trials; ++s) sep += grid_partition(Q, 1.0, rng).pieces.size() == 2;
    const double rate = static_cast<double>(sep) / trials;
    const double se = std::sqrt(0.6 * 0.4 / trials);
    CHECK(rate <= 0.6 + 3 * se);
}

TEST_CASE("soc approximation parameters and small cases") {
    Rng rng(4);
    MatrixXd Q = MatrixXd::Zero(2, 2);
    auto s = soc_approximation(Q, 2.0, 0.1, rng);
    CHECK(s.m == static_cast<int>(std::ceil(2 * std::log2(2 / 0.1))));
    CHECK(s.gamma == 64.0);
    CHECK(s.alpha == doctest::Approx(2.0 * s.m));
    const MatrixXd X = soc::materialize_weights(s.soc);
    CHECK(X(0, 1) == doctest::Approx(s.alpha));

    // pair beyond sqrt(gamma) never shares a box
    MatrixXd far(2, 2);
    far << 0, 9, 0, 0;
    for (int t = 0; t < 20; ++t) {
        auto f = soc_approximation(far, 1.0, 0.1, rng);
        CHECK(soc::materialize_weights(f.soc)(0, 1) == 0.0);
    }
}

TEST_CASE("soc approximation definition on random clouds") {
    Rng rng(5);
    int failures = 0;
    const double delta = 0.1;
    for (int trial = 0; trial < 100; ++trial) {
        MatrixXd Q = 4.0 * fixtures::gaussian(4, 50, rng);
        auto s = soc_approximation(Q, 1.0, delta, rng);
        auto c = check_soc_approximation(Q, s);
        REQUIRE(c.bounded);
        REQUIRE(c.cutoff);
        failures += !c.covers;
    }
    CHECK(failures <= 10);
}

TEST_CASE("interval partition small cases") {
    Rng rng(6);
    VectorXd same = VectorXd::Constant(5, 1.25);
    for (int s = 0; s < 100; ++s) {
        auto P = interval_partition_1d(same, 0.3, rng);
        CHECK((P.support_size() == 0 || (P.support_size() == 5 && P.pieces.size() == 1)));
    }
}

TEST_CASE("interval partition close pairs never split") {
    Rng rng(7);
    for (int trial = 0; trial < 2000; ++trial) {
        VectorXd x(2);
        const double rho = rng.uniform(0.1, 2.0);
        x << rng.uniform(-5, 5), 0.0;
        x(1) = x(0) + rng.uniform(-rho, rho);
        auto P = interval_partition_1d(x, rho, rng);
        if (P.contains(0) && P.contains(1)) REQUIRE(P.same_piece(0, 1));
    }
}

TEST_CASE("interval partition far pairs split at rate one quarter") {
    Rng rng(8);
    VectorXd x(2);
    x << 0.0, 1.6;
    const int trials = 100000;
    int hit = 0;
    for (int s = 0; s < trials; ++s) {
        auto P = interval_partition_1d(x, 1.0, rng);
        hit += P.contains(0) && P.contains(1) && !P.same_piece(0, 1);
    }
    const double rate = static_cast<double>(hit) / trials;
    CHECK(rate >= 0.25 - 3 * std::sqrt(0.25 * 0.75 / trials));
}

TEST_CASE("asoc 1d covers a pair at the matched scale") {
    Rng rng(9);
    const double D = 3.0;
    VectorXd x(2);
    x << 0.0, D;
    auto a = asoc_approximation_1d(x, 4.0, D * D, 1.0, 0.1, rng);
    double best = 0;
    for (const auto& t : a.terms)
        if (t.mask.active(0, 1)) best = std::max(best, t.weight);
    CHECK(best >= D * D);
    CHECK(check_asoc_approximation(x.transpose(), a).ok());
}

TEST_CASE("asoc terms never exceed beta g") {
    Rng rng(10);
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        VectorXd x = 2.0 * fixtures::gaussian_vec(30, rng);
        const double span = x.maxCoeff() - x.minCoeff();
        auto a = asoc_approximation_1d(x, 4.0, span * span, 50.0, 0.1, rng);
        auto c = check_asoc_approximation(x.transpose(), a);
        REQUIRE(c.bounded);
        REQUIRE(c.cutoff);
        failures += !c.covers;
    }
    CHECK(failures <= 10);
}

TEST_CASE("asoc in k dimensions") {
    Rng rng(11);
    MatrixXd Q = fixtures::gaussian(3, 20, rng);
    double gamma = 0;
    for (int j = 0; j < 3; ++j) gamma = std::max(gamma, std::pow(Q.row(j).maxCoeff() - Q.row(j).minCoeff(), 2));
    auto a = asoc_approximation(Q, 4.0, gamma, 20.0, 0.1, rng);
    CHECK(check_asoc_approximation(Q, a).ok());
    CHECK_THROWS_AS(asoc_approximation(Q, 4.0, 0.5 * gamma, 20.0, 0.1, rng), Error);

    // k = 1 matches the 1d entry point on the same seed
    Rng r1(12), r2(12);
    VectorXd x = fixtures::gaussian_vec(10, rng);
    const double g = std::pow(x.maxCoeff() - x.minCoeff(), 2);
    auto one = asoc_approximation_1d(x, 4.0, g, 10.0, 0.1, r1);
    auto kd = asoc_approximation(x.transpose(), 4.0, g, 10.0, 0.1, r2);
    CHECK((family_weights(one) - family_weights(kd)).norm() == 0.0);
}

TEST_CASE("lazy ladder terms match the eager family") {
    Rng rng(13);
    MatrixXd Q = fixtures::gaussian(2, 15, rng);
    Rng a(21), b(21);
    auto fam = asoc_approximation(Q, 4.0, 100.0, 30.0, 0.2, a);
    auto L = asoc_ladder(15, 2, 4.0, 100.0, 30.0, 0.2, b.split(b.engine()()));
    REQUIRE(L.m() == fam.m);
    for (long long i = 0; i < L.m(); i += 7) {
        auto t = L.term(Q, i);
        CHECK(t.weight == fam.terms[i].weight);
        CHECK(t.mask.pieces.pieces == fam.terms[i].mask.pieces.pieces);
    }
}
