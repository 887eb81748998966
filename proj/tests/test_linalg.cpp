#include <doctest.h>

#include "fixtures.hpp"
#include "forster/error.hpp"
#include "forster/linalg.hpp"

#include <sstream>

using namespace forster;
using namespace forster::linalg;

TEST_CASE("leverage scores of the identity are one") {
    const VectorXd tau = leverage_scores(MatrixXd::Identity(3, 3));
    CHECK((tau.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("leverage scores of e1, e2, e1+e2 are 2/3") {
    MatrixXd A(3, 2);
    A << 1, 0, 0, 1, 1, 1;
    const VectorXd tau = leverage_scores(A);
    for (int i = 0; i < 3; ++i) CHECK(tau(i) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("leverage scores sum to d and lie in [0,1]") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const MatrixXd A = fixtures::gaussian(30, 6, rng);
        const VectorXd tau = leverage_scores(A);
        CHECK(std::abs(tau.sum() - 6.0) < 1e-8);
        CHECK(tau.minCoeff() >= 0.0);
        CHECK(tau.maxCoeff() <= 1.0 + 1e-9);
    }
}

TEST_CASE("rank deficient input is rejected") {
    MatrixXd A(3, 2);
    A << 1, 0, 2, 0, 3, 0;
    try {
        leverage_scores(A);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RankDeficient);
    }
}

TEST_CASE("scaled gram of the three-row fixture") {
    const MatrixXd Z = scaled_gram(fixtures::three_rows(), VectorXd::Zero(3));
    MatrixXd expect(2, 2);
    expect << 1.5, 0.5, 0.5, 1.5;
    CHECK((Z - expect).norm() < 1e-14);
    CHECK((scaled_gram(MatrixXd::Identity(2, 2), VectorXd::Zero(2)) - MatrixXd::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("scaled gram shift law") {
    Rng rng(3);
    const MatrixXd A = fixtures::gaussian(10, 3, rng);
    const VectorXd t = fixtures::gaussian_vec(10, rng);
    const MatrixXd Z0 = scaled_gram(A, t);
    const MatrixXd Z1 = scaled_gram(A, t.array() + 0.7);
    CHECK((Z1 - std::exp(0.7) * Z0).norm() <= 1e-12 * Z1.norm());
}

TEST_CASE("scaled gram overflow") {
    VectorXd t(2);
    t << 800.0, 0.0;
    CHECK_THROWS_AS(scaled_gram(MatrixXd::Identity(2, 2), t), Error);
}

TEST_CASE("inverse square root") {
    CHECK((inv_sqrt(MatrixXd::Identity(4, 4)) - MatrixXd::Identity(4, 4)).norm() < 1e-14);
    MatrixXd D = MatrixXd::Zero(2, 2);
    D.diagonal() << 4, 9;
    const MatrixXd R = inv_sqrt(D);
    CHECK(R(0, 0) == doctest::Approx(0.5));
    CHECK(R(1, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(std::abs(R(0, 1)) < 1e-15);
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd M = fixtures::random_spd(6, rng);
        const MatrixXd Rm = inv_sqrt(M);
        CHECK(fixtures::op_norm_sym(Rm * M * Rm - MatrixXd::Identity(6, 6)) <= 1e-8);
    }
    MatrixXd bad = MatrixXd::Zero(2, 2);
    bad.diagonal() << 1, 1e-16;
    CHECK_THROWS_AS(inv_sqrt(bad), Error);
}

TEST_CASE("verify_rip fixtures") {
    const auto id = verify_rip(MatrixXd::Identity(3, 3), VectorXd::Ones(3), MatrixXd::Identity(3, 3), 1e-6);
    CHECK(id.pass);
    CHECK(id.eig_min == doctest::Approx(1.0));
    CHECK(id.eig_max == doctest::Approx(1.0));

    const auto cert = verify_rip(fixtures::three_rows(), VectorXd::Constant(3, 2.0 / 3.0), MatrixXd::Identity(2, 2), 0.1);
    CHECK_FALSE(cert.pass);
    CHECK(cert.eig_min == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(cert.eig_max == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(cert.epsilon_achieved == doctest::Approx(std::log(1.5)).epsilon(1e-12));
}

TEST_CASE("verify_rip is monotone in eps") {
    const auto cert = verify_rip(fixtures::three_rows(), VectorXd::Constant(3, 2.0 / 3.0), MatrixXd::Identity(2, 2), 0.5);
    CHECK(cert.pass);
    for (double e : {0.6, 1.0, 3.0})
        CHECK(verify_rip(fixtures::three_rows(), VectorXd::Constant(3, 2.0 / 3.0), MatrixXd::Identity(2, 2), e).pass);
}

TEST_CASE("verify_rip degenerate row") {
    MatrixXd A(2, 2);
    A << 1, 0, 0, 0;
    CHECK_THROWS_AS(verify_rip(A, VectorXd::Ones(2), MatrixXd::Identity(2, 2), 0.1), Error);
}

TEST_CASE("dataset validation") {
    Dataset ds = Dataset::with_uniform_marginals(fixtures::three_rows());
    CHECK_NOTHROW(ds.validate());
    CHECK(ds.c(0) == doctest::Approx(2.0 / 3.0));
    ds.c(0) = 0.9;
    CHECK_THROWS_AS(ds.validate(), Error);
    Dataset wide = Dataset::with_uniform_marginals(MatrixXd::Ones(1, 2));
    CHECK_THROWS_AS(wide.validate(), Error);
}

TEST_CASE("matrix text round trip and parse errors") {
    MatrixXd M(2, 3);
    M << 1.5, -2, 3e-10, 0.1, 1.0 / 3.0, 7;
    std::stringstream ss;
    write_matrix(ss, M);
    const MatrixXd back = read_matrix(ss);
    CHECK((back - M).norm() == 0.0);

    std::istringstream bad("2 2\n1 2\n3\n");
    try {
        read_matrix(bad);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::istringstream vec("# comment\n0.5\n\n0.25\n");
    const VectorXd v = read_vector(vec);
    REQUIRE(v.size() == 2);
    CHECK(v(1) == 0.25);
}
