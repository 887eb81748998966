#pragma once

#include "forster/linalg.hpp"
#include "forster/newton.hpp"
#include "forster/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace forster::smoothed {

using linalg::MatrixXd;
using linalg::VectorXd;

enum class NormGuard { Off, Mark, Resample };

struct SmoothedInstance {
    MatrixXd base;   // unit rows
    MatrixXd A;      // base + G
    double sigma = 0.0;
    std::uint64_t seed = 0;  // key of the stream that drew G
    double mu = 0.0;  // min squared row norm
    double M = 0.0;   // max squared row norm
    bool guard_ok = true;  // all squared norms in [1/6, 2]
    int resamples = 0;
};

MatrixXd random_unit_rows(int n, int d, Rng& rng);
// unit rows inside a random k-dimensional subspace (rank k)
MatrixXd subspace_unit_rows(int n, int d, int k, Rng& rng);
// n k / d unit rows inside a random k-dim subspace, the rest unrestricted:
// with c = (d/n) 1 that subspace carries mass exactly k, so the noise-free
// instance sits on the boundary of the basis polytope
MatrixXd tight_unit_rows(int n, int d, int k, Rng& rng);

SmoothedInstance generate_smoothed(const MatrixXd& base, double sigma, Rng& rng, NormGuard guard = NormGuard::Mark,
                                   int max_resamples = 100);

// 1/2 log( M/(mu c_min) (4M/(eta Delta^2))^{d-1} )
double diameter_bound(double mu, double M, double eta, double Delta, double c_min, int d);

struct Witness {
    int k = 0;
    std::vector<int> rows;   // subset whose top-k right singular space is the subspace
    double sigma_k1 = 0.0;   // sigma_{k+1} of the subset
    double mass = 0.0;       // weight of all rows within Delta of that subspace
};

struct DeepnessReport {
    double eta = 0.0;
    double Delta = 0.0;
    std::vector<int> m;               // subset size per k = 1..d-1
    std::vector<double> worst_margin; // min sigma_{k+1} - sqrt(m) Delta seen per k
    long long subsets_checked = 0;
    long long candidates = 0;         // subsets failing the singular value test
    std::vector<Witness> witnesses;   // candidates confirmed by the exact projector
    std::string verdict() const { return witnesses.empty() ? "no violation found" : "violation found"; }
    nlohmann::json to_json() const;
};

// Sampling falsifier for (eta, Delta)-deepness at c = (d/n) 1. Never certifies.
DeepnessReport deepness_witness_check(const MatrixXd& A, double eta, double Delta, int samples, Rng& rng);

// re-check of one witness with the exact projector on the full row set
double subspace_mass(const MatrixXd& A, const VectorXd& c, const std::vector<int>& rows, int k, double Delta);

struct Conditioning {
    VectorXd t;          // extremes averaged to 0
    double t_inf = 0.0;
    double t_inf_mean = 0.0;  // |t - mean(t)|_inf
    int iterations = 0;  // driver steps
    int polish_steps = 0;
    double epsilon_achieved = 0.0;
    double grad_norm = 0.0;
};

struct ConditioningOptions {
    double eps = 1e-6;
    newton::NewtonOptions newton;
    int polish_max = 60;
    double polish_tol = 1e-12;   // gradient inf-norm
};

// Solve, then polish with full Newton on the unregularized objective.
Conditioning measure_conditioning(const MatrixXd& A, const VectorXd& c, const ConditioningOptions& opt, Rng& rng);

struct GuardResult {
    bool pass = true;
    int index = -1;
    double bound = 0.0;
};
// c_i <= c_const d / n for all i; throws MarginalTooLarge naming the first offender
GuardResult nonuniform_guard(const VectorXd& c, int n, int d, double c_const);

struct BenchSpec {
    std::vector<int> d{5, 10, 20};
    std::vector<double> sigma{0.1, 0.01};
    int seeds = 10;
    int n_factor = 4;            // n = n_factor d unless n is given
    std::vector<int> n;          // optional explicit n, paired with d
    double eps = 1e-6;
    std::string base = "unit";   // unit | subspace | tight
    std::uint64_t seed = 0;

    static BenchSpec from_json(const nlohmann::json& j);
};

struct BenchRow {
    int n = 0;
    int d = 0;
    double sigma = 0.0;
    int seed = 0;
    double t_inf = 0.0;
    int iterations = 0;
    double epsilon_achieved = 0.0;
    double t_inf_mean = 0.0;     // not written to the CSV
};

struct BenchFit {
    double c_fit = 0.0;          // max t_inf / (d log(1/sigma))
    double slope = 0.0;          // least squares t_inf ~ a + slope x, x = d log(1/sigma)
    double intercept = 0.0;
    double loglog_slope = 0.0;   // of cell means, log t_inf against log x
    bool all_finite = true;
    int runs = 0;
};

BenchFit fit_conditioning(const std::vector<BenchRow>& rows);

struct BenchResult {
    std::vector<BenchRow> rows;
    BenchFit fit;
    void write_csv(std::ostream& out) const;
    nlohmann::json summary() const;
};

BenchResult run_bench(const BenchSpec& spec);

}  // namespace forster::smoothed
