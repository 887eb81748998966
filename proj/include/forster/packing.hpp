#pragma once

#include "forster/gridhash.hpp"
#include "forster/rng.hpp"
#include "forster/soc.hpp"

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace forster::packing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Dictionary A_e = scale * P L_e P over all pairs e = (u, v). Edge-indexed
// vectors are stored as symmetric n x n weight matrices with zero diagonal.
struct Dictionary {
    MatrixXd P;
    double scale = 1.0;

    int n() const { return static_cast<int>(P.rows()); }
    Dictionary scaled(double f) const { return Dictionary{P, scale * f}; }
    // A(W) = scale * P L(W) P
    MatrixXd apply(const MatrixXd& W) const;
    // [A*(Y)]_e = <Y, A_e>
    MatrixXd adjoint(const MatrixXd& Y) const;
};

// 0/1 masks
MatrixXd mask_from_asoc(const soc::AsocRep& a);
MatrixXd full_mask(int n);
double mask_value(const MatrixXd& C, const MatrixXd& W);  // sum over pairs u < v of C .* W

double lambda_max(const MatrixXd& M);
// (sum |lambda|^p)^(1/p) for symmetric M
double schatten_norm(const MatrixXd& M, double p);

enum class EmbedMode { Exact, Sketched };

struct EmbedOptions {
    EmbedMode mode = EmbedMode::Exact;
    double c_jl = 64.0;      // sketch rows k = ceil(c_jl log(n/delta)), identity sketch when k >= n
    double c_probe = 20.0;   // Hutchinson probes = ceil(c_probe log(n/delta))
    int probe_doublings = 4;
};

struct Embedding {
    MatrixXd Q;             // k x n
    double norm_p = 0.0;    // exact |A(w)|_p
    double z = 0.0;         // estimate of |A(w)|_p^p used for scaling
    int probes = 0;
    MatrixXd g;             // exact A*(Y^{p-1}), for diagnostics and certificates
};

// Points whose squared distances sandwich A*(Y^{p-1}) for Y = A(w)/|A(w)|_p.
// Throws NormEstimateFailed when the trace estimate stays too noisy.
Embedding schatten_embed(const Dictionary& D, const MatrixXd& W, int p, double delta, Rng& rng,
                         const EmbedOptions& opt = {});

struct StepOracleOutput {
    soc::SocRep step;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;  // cutoff in units of the true gradient
    int m = 0;
};

// loss: the embedding guarantees f >= g / loss (1 for the exact embedding)
StepOracleOutput step_oracle(const MatrixXd& Q, double beta, double delta, Rng& rng, double loss = 2.0);

struct DecisionOptions {
    int p = 0;             // 0: automatic, odd >= 3
    int T = 0;             // 0: automatic
    double beta = 0.0;     // 0: automatic, floored at 8
    double delta = 0.1;
    EmbedOptions embed;
    bool track_structure = false;
    long long structure_cap = 20000;
};

struct DecisionResult {
    bool returned = false;
    MatrixXd X;              // w / c^T w when returned
    int steps = 0;
    int p = 0;
    int T = 0;
    double beta = 0.0;
    double alpha = 0.0;
    double gamma = 0.0;
    int m = 0;
    std::vector<double> phi;   // Phi_0 .. Phi_steps
    std::vector<double> ctw;   // c^T w_t
    bool phi_monotone = true;
    // duals over the completed steps, for the dictionary actually used
    double dual_q_norm = 0.0;  // |Ybar|_q
    double dual_theta = 0.0;   // min over supp(c) of A*(Ybar)_e
    double opt_upper = std::numeric_limits<double>::infinity();
    // c o (sum of unit SOC products), only when track_structure
    std::vector<soc::SocTerm> structure;
    bool structure_complete = false;
};

struct DecisionDefaults {
    int p;
    int T;
    double beta;
};
DecisionDefaults decision_defaults(int n, double rho);

DecisionResult soc_packing_decision(const Dictionary& D, const MatrixXd& C, const DecisionOptions& opt, Rng& rng);

struct PackingOptions {
    DecisionOptions decision;
    int max_phases = 0;  // 0: ceil(log2 log2(u/l)) + 2
};

struct PackingResult {
    MatrixXd X;                // feasible: A(X) <= I
    double value = 0.0;        // c^T X
    double lambda_max = 0.0;   // of A(X), <= 1
    double upper = 0.0;        // certified OPT upper bound
    double q_run = 1.0;        // upper / value
    int decisions = 0;
    bool phi_monotone = true;
    std::vector<double> sigmas;
};

// Requires l <= OPT <= u. Throws InconsistentBounds when a certificate contradicts them.
PackingResult packing_optimize(const Dictionary& D, const MatrixXd& C, double lower, double upper,
                               const PackingOptions& opt, Rng& rng);

// Maximum of c^T (s W) over scalars s with A(s W) <= I.
double scalar_scaling_value(const Dictionary& D, const MatrixXd& C, const MatrixXd& W);

// Log-barrier interior point solve of the packing SDP; small instances only.
struct BarrierResult {
    double value = 0.0;
    MatrixXd X;
    double gap = 0.0;  // duality gap bound at exit
};
BarrierResult packing_barrier_opt(const Dictionary& D, const MatrixXd& C, double tol = 1e-7);

}  // namespace forster::packing
