#include "fixtures.hpp"
#include "forster/error.hpp"
#include "forster/smoothed.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace forster;
using namespace forster::smoothed;

TEST_CASE("zero noise keeps the base") {
    Rng rng(1);
    const MatrixXd base = random_unit_rows(10, 3, rng);
    const auto s = generate_smoothed(base, 0.0, rng);
    CHECK(s.A == base);
    CHECK(s.mu == doctest::Approx(1.0));
    CHECK(s.guard_ok);
    CHECK_THROWS_AS(generate_smoothed(2.0 * base, 0.1, rng), Error);
}

TEST_CASE("noise energy matches n d sigma^2") {
    Rng rng(2);
    const int n = 20, d = 5;
    const double sigma = 0.3;
    const MatrixXd base = random_unit_rows(n, d, rng);
    const int trials = 400;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < trials; ++i) {
        const auto s = generate_smoothed(base, sigma, rng, NormGuard::Off);
        const double e = (s.A - base).squaredNorm();
        sum += e;
        sumsq += e * e;
    }
    const double mean = sum / trials;
    const double se = std::sqrt((sumsq / trials - mean * mean) / trials);
    CHECK(std::abs(mean - n * d * sigma * sigma) <= 3.0 * se);
}

TEST_CASE("norm guard rate at tiny sigma") {
    Rng rng(3);
    const int n = 10, d = 3;
    const double delta = 0.1;
    const double sigma = delta / (10.0 * n * d);
    const MatrixXd base = random_unit_rows(n, d, rng);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) bad += !generate_smoothed(base, sigma, rng, NormGuard::Mark).guard_ok;
    CHECK(bad <= 100);
    // a huge sigma trips the guard, and resampling reports the attempts
    const auto s = generate_smoothed(base, 3.0, rng, NormGuard::Resample, 5);
    CHECK(s.resamples >= 1);
}

TEST_CASE("diameter bound values") {
    CHECK(diameter_bound(1, 1, 1, 2, 1, 7) == doctest::Approx(0.0));
    CHECK(diameter_bound(0.5, 2, 0.3, 0.1, 0.25, 1) == doctest::Approx(0.5 * std::log(2.0 / (0.5 * 0.25))));
    CHECK(diameter_bound(0.5, 2, 0.5, 1, 0.5, 2) == doctest::Approx(0.5 * std::log(128.0)));
    CHECK_THROWS_AS(diameter_bound(0, 1, 1, 1, 1, 2), Error);
}

TEST_CASE("diameter bound is monotone") {
    const double b = diameter_bound(0.5, 2.0, 0.5, 0.3, 0.2, 4);
    CHECK(diameter_bound(0.5, 2.0, 0.6, 0.3, 0.2, 4) <= b);
    CHECK(diameter_bound(0.5, 2.0, 0.5, 0.4, 0.2, 4) <= b);
    CHECK(diameter_bound(0.6, 2.0, 0.5, 0.3, 0.2, 4) <= b);
    CHECK(diameter_bound(0.5, 2.0, 0.5, 0.3, 0.3, 4) <= b);
    CHECK(diameter_bound(0.5, 2.5, 0.5, 0.3, 0.2, 4) >= b);
    CHECK(diameter_bound(0.5, 2.0, 0.5, 0.3, 0.2, 5) >= b);
}

TEST_CASE("rows in a coordinate plane are a witness") {
    // 6 rows in span(e1, e2) out of 8 in R^3
    MatrixXd A(8, 3);
    A << 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1;
    Rng rng(4);
    const auto rep = deepness_witness_check(A, 0.1, 0.0, 200, rng);
    CHECK(rep.verdict() == "violation found");
    const VectorXd c = VectorXd::Constant(8, 3.0 / 8.0);
    for (const auto& w : rep.witnesses) CHECK(subspace_mass(A, c, w.rows, w.k, 0.0) > (1.0 - 0.1) * w.k);
    CHECK(rep.to_json().at("verdict") == "violation found");
}

TEST_CASE("smoothed instance shows no violation") {
    Rng rng(5);
    const int d = 4, n = 4 * d;
    const double sigma = 0.05;
    const auto s = generate_smoothed(random_unit_rows(n, d, rng), sigma, rng);
    // Delta of order delta sigma / n
    const double Delta = 0.1 * sigma / n;
    const auto rep = deepness_witness_check(s.A, 0.1, Delta, 500, rng);
    CHECK(rep.subsets_checked == 500LL * (d - 1));
    CHECK(rep.verdict() == "no violation found");
    CHECK(rep.verdict() != "certified deep");
}

TEST_CASE("conditioning of symmetric designs is zero") {
    Rng rng(6);
    CHECK(measure_conditioning(MatrixXd::Identity(4, 4), VectorXd::Ones(4), {}, rng).t_inf == 0.0);
    MatrixXd A(6, 3);
    A << 2, 0, 0, 0, 2, 0, 0, 0, 2, 2, 0, 0, 0, 2, 0, 0, 0, 2;
    const auto m = measure_conditioning(A, VectorXd::Constant(6, 0.5), {}, rng);
    CHECK(m.t_inf <= 1e-10);
}

TEST_CASE("conditioning ignores row order") {
    Rng rng(7);
    const int n = 16, d = 4;
    const auto s = generate_smoothed(random_unit_rows(n, d, rng), 0.1, rng);
    const VectorXd c = VectorXd::Constant(n, 0.25);
    Rng r1(8), r2(9);
    const auto a = measure_conditioning(s.A, c, {}, r1);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(n);
    P.setIdentity();
    for (int i = n - 1; i > 0; --i) std::swap(P.indices()(i), P.indices()(static_cast<int>(rng.below(i + 1))));
    const MatrixXd B = P * s.A;
    const auto b = measure_conditioning(B, c, {}, r2);
    CHECK(std::abs(a.t_inf - b.t_inf) <= 1e-8);
    CHECK((P * a.t - b.t).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("nonuniform guard") {
    const int n = 12, d = 3;
    CHECK(nonuniform_guard(VectorXd::Constant(n, 0.25), n, d, 1.0).pass);
    VectorXd c = VectorXd::Constant(n, 2.0 / 11.0);
    c(5) = 1.0;
    try {
        nonuniform_guard(c, n, d, 2.0);
        FAIL("expected MarginalTooLarge");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MarginalTooLarge);
        CHECK(std::string(e.what()).find("c[5]") != std::string::npos);
    }
    // Dirichlet marginals against a direct check
    Rng rng(10);
    for (int s = 0; s < 50; ++s) {
        VectorXd w(n);
        for (int i = 0; i < n; ++i) w(i) = -std::log(rng.uniform(1e-300, 1.0));
        w *= d / w.sum();
        const double cc = 2.0;
        const bool direct = (w.array() <= cc * d / n * (1.0 + 1e-12)).all();
        bool passed = true;
        try {
            nonuniform_guard(w, n, d, cc);
        } catch (const Error&) {
            passed = false;
        }
        CHECK(passed == direct);
    }
}

TEST_CASE("bench grid shapes and csv") {
    BenchSpec spec;
    spec.d = {3};
    spec.sigma = {0.1};
    spec.seeds = 1;
    const auto one = run_bench(spec);
    CHECK(one.rows.size() == 1);
    std::ostringstream csv;
    one.write_csv(csv);
    CHECK(csv.str().rfind("n,d,sigma,seed,t_inf,iterations,epsilon_achieved\n", 0) == 0);

    const auto j = nlohmann::json::parse(R"({"d":[3,4],"sigma":[0.1,0.01],"seeds":2,"seed":5})");
    const auto grid = run_bench(BenchSpec::from_json(j));
    CHECK(grid.rows.size() == 8);
    CHECK(grid.fit.all_finite);
    CHECK(grid.summary().contains("C_fit"));
    for (const auto& r : grid.rows) CHECK(r.t_inf <= grid.fit.c_fit * r.d * std::log(1.0 / r.sigma) + 1e-12);
    CHECK_THROWS_AS(BenchSpec::from_json(nlohmann::json::parse(R"({"d":"x"})")), Error);
}

TEST_CASE("tight base grows with log(1/sigma)") {
    Rng rng(12);
    const MatrixXd T = tight_unit_rows(12, 4, 2, rng);
    // 6 rows span a plane, carrying mass 6 * 4/12 = 2
    Eigen::JacobiSVD<MatrixXd> svd(T.topRows(6));
    CHECK(svd.singularValues()(2) <= 1e-12);
    CHECK_THROWS_AS(tight_unit_rows(9, 4, 2, rng), Error);

    BenchSpec spec;
    spec.d = {4, 6};
    spec.sigma = {0.1, 0.001};
    spec.seeds = 4;
    spec.base = "tight";
    spec.seed = 3;
    const auto res = run_bench(spec);
    for (int d : {4, 6}) {
        double hi = 0, lo = 0;
        for (const auto& r : res.rows)
            if (r.d == d) (r.sigma < 0.01 ? lo : hi) += r.t_inf / spec.seeds;
        CHECK(lo > hi);
    }
    CHECK(res.fit.slope > 0.0);
    for (const auto& r : res.rows) CHECK(r.t_inf_mean >= r.t_inf - 1e-12);
}
