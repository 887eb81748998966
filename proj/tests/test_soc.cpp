#include "fixtures.hpp"
#include "forster/error.hpp"
#include "forster/soc.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

using namespace forster;
using namespace forster::soc;

namespace {

Partition random_partition(int n, int max_pieces, double keep, Rng& rng) {
    std::vector<long long> labels(n);
    for (int v = 0; v < n; ++v) labels[v] = rng.uniform() < keep ? static_cast<long long>(rng.below(max_pieces)) : -1;
    return Partition::from_labels(labels);
}

double min_gen_eig(const MatrixXd& X, const MatrixXd& Y, double* max_out) {
    // generalized eigenvalues of (X, Y) on range(Y)
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Y);
    const double top = es.eigenvalues().maxCoeff();
    std::vector<int> keep;
    for (int i = 0; i < Y.rows(); ++i)
        if (es.eigenvalues()(i) > 1e-9 * top) keep.push_back(i);
    MatrixXd U(Y.rows(), keep.size());
    VectorXd s(keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j) {
        U.col(j) = es.eigenvectors().col(keep[j]);
        s(j) = 1.0 / std::sqrt(es.eigenvalues()(keep[j]));
    }
    const MatrixXd W = U * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatrixXd> g(W.transpose() * X * W, Eigen::EigenvaluesOnly);
    *max_out = g.eigenvalues().maxCoeff();
    return g.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("refinement of two small partitions") {
    auto P = Partition::from_pieces(3, {{0, 1}, {2}});
    auto A = Partition::from_pieces(3, {{0}, {1, 2}});
    auto R = mutual_refinement(P, A);
    CHECK(R.pieces.size() == 3);
    for (int v = 0; v < 3; ++v)
        for (int u = 0; u < 3; ++u) CHECK(R.same_piece(u, v) == (u == v));
    auto same = mutual_refinement(P, P);
    CHECK(same.pieces == P.pieces);
}

TEST_CASE("refinement matches pairwise brute force") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(100));
        auto P = random_partition(n, 6, 0.8, rng);
        auto A = random_partition(n, 6, 0.8, rng);
        auto R = mutual_refinement(P, A);
        R.validate();
        for (int u = 0; u < n; ++u) {
            CHECK(R.contains(u) == (P.contains(u) && A.contains(u)));
            for (int v = 0; v < n; ++v) REQUIRE(R.same_piece(u, v) == (P.same_piece(u, v) && A.same_piece(u, v)));
        }
    }
}

TEST_CASE("clique matvec row") {
    SocRep v{5, {}};
    v.add(1.0, Partition::from_pieces(5, {{0, 1, 2}}));
    VectorXd e0 = VectorXd::Unit(5, 0);
    VectorXd full = soc_masked_matvec(v, AsocRep::full(5), e0);
    VectorXd want(5);
    want << 2, -1, -1, 0, 0;
    CHECK((full - want).norm() < 1e-15);
    CHECK((soc_matvec(v, e0) - want).norm() < 1e-15);
}

TEST_CASE("masked clique matvec keeps cross-piece edges") {
    SocRep v{3, {}};
    v.add(1.0, Partition::whole(3));
    AsocRep a{Partition::from_pieces(3, {{0, 1}, {2}})};
    VectorXd y = soc_masked_matvec(v, a, VectorXd::Unit(3, 0));
    CHECK(y(0) == doctest::Approx(1.0));
    CHECK(y(1) == doctest::Approx(0.0));
    CHECK(y(2) == doctest::Approx(-1.0));
}

TEST_CASE("masked matvec equals dense materialization") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(120));
        SocRep v{n, {}};
        const int K = 1 + static_cast<int>(rng.below(5));
        for (int j = 0; j < K; ++j) v.add(rng.uniform(0.0, 3.0), random_partition(n, 4, 0.9, rng));
        AsocRep a{random_partition(n, 5, 0.85, rng)};
        const VectorXd u = fixtures::gaussian_vec(n, rng);
        const MatrixXd L = materialize_dense(v, &a);
        const VectorXd fast = soc_masked_matvec(v, a, u);
        const VectorXd ref = L * u;
        REQUIRE((fast - ref).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
        // mask pairwise check
        for (int x = 0; x < n; ++x)
            for (int y = x + 1; y < n; ++y)
                if (!a.active(x, y)) REQUIRE(L(x, y) == 0.0);
    }
}

TEST_CASE("masked matvec is linear") {
    Rng rng(8);
    const int n = 40;
    SocRep v{n, {}};
    for (int j = 0; j < 3; ++j) v.add(1.0 + j, random_partition(n, 3, 1.0, rng));
    AsocRep a{random_partition(n, 4, 0.7, rng)};
    const VectorXd x = fixtures::gaussian_vec(n, rng), y = fixtures::gaussian_vec(n, rng);
    const VectorXd lhs = soc_masked_matvec(v, a, 2.0 * x - 3.0 * y);
    const VectorXd rhs = 2.0 * soc_masked_matvec(v, a, x) - 3.0 * soc_masked_matvec(v, a, y);
    CHECK((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
}

TEST_CASE("materialize small cases") {
    SocRep empty{4, {}};
    CHECK(materialize_dense(empty).isZero());
    SocRep one{4, {}};
    one.add(1.0, Partition::whole(4));
    MatrixXd want = 4.0 * MatrixXd::Identity(4, 4) - MatrixXd::Ones(4, 4);
    CHECK((materialize_dense(one) - want).norm() < 1e-15);
    SocRep big{501, {}};
    CHECK_THROWS_AS(materialize_dense(big), Error);
}

TEST_CASE("materialize columns agree with matvec") {
    Rng rng(2);
    const int n = 25;
    SocRep v{n, {}};
    v.add(0.7, random_partition(n, 3, 0.9, rng));
    v.add(1.3, random_partition(n, 2, 0.9, rng));
    AsocRep a{random_partition(n, 3, 0.9, rng)};
    const MatrixXd L = materialize_dense(v, &a);
    for (int i = 0; i < n; ++i) CHECK((L.col(i) - soc_masked_matvec(v, a, VectorXd::Unit(n, i))).norm() < 1e-12);
    CHECK(L.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("balanced split") {
    auto s = balanced_split({1, 1, 1});
    CHECK((s.size() == 1 || s.size() == 2));
    CHECK(balanced_split({2, 2, 2}) == std::vector<int>{0, 1});
    try {
        balanced_split({3, 1});
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::PrerequisiteViolated);
    }
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<long long> sz;
        const int k = 3 + static_cast<int>(rng.below(10));
        for (int i = 0; i < k; ++i) sz.push_back(1 + static_cast<long long>(rng.below(5)));
        long long Z = 0, mx = 0;
        for (auto x : sz) Z += x, mx = std::max(mx, x);
        if (3 * mx > Z) continue;
        long long sum = 0;
        for (int i : balanced_split(sz)) sum += sz[i];
        CHECK(3 * sum >= Z);
        CHECK(3 * sum <= 2 * Z);
    }
}

TEST_CASE("bipartite sparsifier with one edge is exact") {
    Rng rng(1);
    auto G = sparsify_bipartite(2, {0}, {1}, 0.1, rng);
    REQUIRE(G.nnz() == 1);
    CHECK(G.edges[0].w == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("bipartite sparsifier spectral sandwich") {
    Rng rng(9);
    std::vector<int> L, R;
    for (int i = 0; i < 20; ++i) L.push_back(i), R.push_back(20 + i);
    auto G = sparsify_bipartite(40, L, R, 0.01, rng);
    G.validate();
    const double V = 40;
    CHECK(static_cast<double>(G.nnz()) <= std::ceil(9.0 * V * std::log(V / 0.01)));
    SocRep exact{40, {}};
    exact.add(1.0, Partition::whole(40));
    AsocRep a{Partition::from_pieces(40, {L, R})};
    double hi = 0;
    const double lo = min_gen_eig(G.dense(), materialize_dense(exact, &a), &hi);
    CHECK(lo >= std::exp(-1.0));
    CHECK(hi <= std::exp(1.0));
    CHECK(G.dense().rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("clique asoc sparsifier") {
    Rng rng(4);
    Partition one = Partition::from_pieces(10, {{0, 1, 2, 3}});
    CHECK(sparsify_clique_asoc(one, 0.1, rng).nnz() == 0);

    const int n = 60;
    std::vector<long long> labels(n);
    for (int v = 0; v < n; ++v) labels[v] = static_cast<long long>(rng.below(5));
    Partition P = Partition::from_labels(labels);
    auto G = sparsify_clique_asoc(P, 0.1, rng);
    G.validate();
    SocRep exact{n, {}};
    exact.add(1.0, Partition::whole(n));
    AsocRep a{P};
    double hi = 0;
    const double lo = min_gen_eig(G.dense(), materialize_dense(exact, &a), &hi);
    CHECK(lo >= std::exp(-1.0));
    CHECK(hi <= std::exp(1.0));
}

TEST_CASE("tsv round trip and parse errors") {
    SparseLaplacian L;
    L.n = 4;
    L.edges = {{2, 0, 0.5}, {1, 3, 2.0}, {0, 2, 0.25}};
    L.normalize();
    REQUIRE(L.nnz() == 2);
    CHECK(L.edges[0].u == 0);
    CHECK(L.edges[0].w == doctest::Approx(0.75));
    std::stringstream ss;
    write_tsv(ss, L);
    auto back = read_tsv(ss, 4);
    CHECK(back.nnz() == 2);
    CHECK((back.dense() - L.dense()).norm() < 1e-15);
    std::istringstream bad("0\t1\t1.0\n1\tx\t2\n");
    try {
        read_tsv(bad);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}
