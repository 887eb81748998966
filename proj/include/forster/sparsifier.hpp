#pragma once

#include "forster/gridhash.hpp"
#include "forster/packing.hpp"
#include "forster/rng.hpp"
#include "forster/soc.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <functional>
#include <optional>
#include <vector>

namespace forster::sparsifier {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Matvec-only access to a hidden graph Laplacian. Every column pushed
// through apply() counts as one query.
class ImplicitLaplacianOracle {
public:
    using BlockMatvec = std::function<MatrixXd(const MatrixXd&)>;

    ImplicitLaplacianOracle(int n, BlockMatvec mv, std::optional<double> trace_hint = std::nullopt);
    static ImplicitLaplacianOracle from_dense(MatrixXd L, bool hint_trace = false);
    static ImplicitLaplacianOracle from_sparse(const soc::SparseLaplacian& L, bool hint_trace = false);

    int n() const { return n_; }
    MatrixXd apply(const MatrixXd& V) const;
    VectorXd apply(const VectorXd& v) const;
    long long queries() const { return queries_; }
    std::optional<double> trace_hint() const { return trace_hint_; }
    // 0 means unlimited; exceeding it throws PhaseFailure
    void set_budget(long long b) { budget_ = b; }
    long long budget() const { return budget_; }

private:
    int n_;
    BlockMatvec mv_;
    std::optional<double> trace_hint_;
    long long budget_ = 0;
    mutable long long queries_ = 0;
};

struct OracleCheck {
    double null_residual = 0.0;   // |L 1| / (|L| scale)
    double asymmetry = 0.0;       // max |<u, Lv> - <v, Lu>| relative
    bool ok() const { return null_residual <= 1e-8 && asymmetry <= 1e-8; }
};
OracleCheck check_oracle(const ImplicitLaplacianOracle& L, Rng& rng, int probes = 4);

// Hutchinson estimate of Tr(L) scaled up by three standard errors
double estimate_trace(const ImplicitLaplacianOracle& L, double delta, Rng& rng, double c_probe = 20.0);

enum class AccessMode { DenseReference, Sketched };

struct TraceOptions {
    double c_probe = 20.0;     // probes = ceil(c_probe log(n/delta))
    double c_jl = 64.0;        // sketch rows, identity sketch when >= n
    double cheb_tol = 0.05;
    int degree_cap = 20000;
    bool on_pi = false;        // restrict traces to the complement of the all-ones vector
};

// Chebyshev interpolant of exp(-a x) on [0, R]; err is the measured sup error.
struct ChebyshevExp {
    double a = 1.0;
    double R = 0.0;
    std::vector<double> coef;
    double err = 0.0;
    int degree() const { return static_cast<int>(coef.size()) - 1; }
    double eval(double x) const;
    // p(S) X + err X, an upper approximation of exp(-a S) X for 0 <= S <= R
    MatrixXd apply(const MatrixXd& S, const MatrixXd& X) const;
};
// degree ceil(e a R + log(1/tol)); throws PolynomialDegreeExceeded above cap
ChebyshevExp chebyshev_exp(double a, double R, double tol = 0.05, int degree_cap = 20000);

// Z in [0.9 Tr exp(-S), Tr exp(-S)] for 0 <= S <= R
double trace_exp_estimate(const MatrixXd& S, double R, double delta, Rng& rng, const TraceOptions& opt = {});

// Points with 1/2 g <= f <= g for g_e = <P Y P, L_e>, Y = exp(-S)/Tr exp(-S)
gridhash::PointCloud mmw_embed(const MatrixXd& P, const MatrixXd& S, double R, double delta, Rng& rng,
                               const TraceOptions& opt = {});

// Z in [0.9 Tr(P Y P), Tr(P Y P)]
double trace_pyp_estimate(const MatrixXd& P, const MatrixXd& S, double R, double delta, Rng& rng,
                          const TraceOptions& opt = {});

// (40/9) rho n^4 k^2
double truncation_guard(int n, int k, double rho);

// Exact MMW quantities on the complement of the all-ones vector (dense reference).
struct MmwDense {
    MatrixXd Y;        // Pi exp(-S) Pi / Tr(Pi exp(-S))
    MatrixXd half;     // Y^{1/2}
    double lam_min = 0.0;  // smallest eigenvalue of S on Pi
    double lam_max = 0.0;
};
MmwDense mmw_dense(const MatrixXd& S);

struct MdrOptions {
    AccessMode mode = AccessMode::DenseReference;
    double beta = 8.0;
    double eta = 0.5;
    int max_rounds = 200;
    double target_factor = 64.0;  // stop once 1 / lambda_min(P L(xbar) P) <= target
    int pool = 24;                // ASOC terms drawn per round
    int solves_per_round = 1;     // packing calls on the best-scored terms
    bool full_candidate = true;   // also pack the all-singletons ASOC term each round
    double delta = 0.1;
    TraceOptions trace;
    gridhash::AsocOptions asoc;
    packing::PackingOptions packing;
};

struct MdrResult {
    MatrixXd xbar;               // dense edge weights
    int rounds = 0;
    double factor = 0.0;         // 1 / lambda_min(P L(xbar) P) on Pi
    double top = 0.0;            // lambda_max(P L(xbar) P)
    double q_run_max = 1.0;
    long long packing_calls = 0;
    long long ladder_size = 0;   // terms in the last round's ASOC family
    std::vector<double> gains;   // <G_t, Y_t>
    std::vector<double> gain_norms;  // |G_t|
    std::vector<MatrixXd> Ys;    // dense-reference runs only, when keep_trace is set
    std::vector<MatrixXd> Gs;
};

// lower/upper are the caller bounds for every packing call (both in units of
// the hidden weights). keep_trace stores Y_t and G_t for regret checks.
MdrResult oracle_mdr(const MatrixXd& P, double rho, double lower, double upper, const MdrOptions& opt, Rng& rng,
                     bool keep_trace = false);

// v -> P v with P^2 ~ (L + shift Pi)^+, by trapezoid quadrature of the
// resolvent integral and block CG preconditioned by B ~ L + shift Pi.
struct InvSqrtOptions {
    double h = 0.5;
    double pad = 8.0;
    double cg_tol = 1e-10;
    int cg_max = 2000;
    double margin = 1e-6;   // P is inflated by sqrt(1 + margin)
};

class InvSqrtOperator {
public:
    InvSqrtOperator(const ImplicitLaplacianOracle& L, double shift, const MatrixXd& B, double lam_lo, double lam_hi,
                    const InvSqrtOptions& opt = {});
    MatrixXd apply(const MatrixXd& V) const;
    MatrixXd materialize() const;
    int nodes() const { return static_cast<int>(u_.size()); }
    int max_iterations() const { return max_iters_; }

private:
    const ImplicitLaplacianOracle* L_;
    double shift_;
    MatrixXd V_;
    VectorXd lam_;
    std::vector<double> u_;
    InvSqrtOptions opt_;
    mutable int max_iters_ = 0;
};

// Effective-resistance sampling of L(W) with `samples` draws.
soc::SparseLaplacian resistance_sample(const MatrixXd& W, long long samples, Rng& rng);

struct HomotopyOptions {
    MdrOptions mdr;
    InvSqrtOptions inv;
    double delta = 0.1;
    double phase_ratio = 2.0;
    long long query_budget = 0;   // 0: unlimited
    long long nnz_budget = 0;     // 0: n(n-1)/2
    double sample_c = 4.0;        // resistance samples = sample_c n ln n
    // Skip the homotopy: a single final phase preconditioned by this
    // Laplacian, which should approximate L + Delta Pi within a modest factor.
    std::optional<soc::SparseLaplacian> warm;
};

struct PhaseReport {
    int q = 0;
    double shift = 0.0;
    int rounds = 0;
    double mdr_factor = 0.0;
    double q_run = 1.0;
    double output_factor = 0.0;
    long long queries = 0;
    int cg_iterations = 0;
    int nodes = 0;
};

struct SparsifyResult {
    soc::SparseLaplacian L;      // L + Delta Pi <= L <= f_total (L + Delta Pi)
    double f_total = 0.0;
    double delta_shift = 0.0;
    double trace = 0.0;
    std::vector<PhaseReport> phases;
    long long queries = 0;
    long long nnz = 0;
    nlohmann::json report() const;
};

SparsifyResult sparsify_implicit(const ImplicitLaplacianOracle& L, double Delta, const HomotopyOptions& opt, Rng& rng);

}  // namespace forster::sparsifier
