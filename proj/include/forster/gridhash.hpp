#pragma once

#include "forster/rng.hpp"
#include "forster/soc.hpp"

#include <Eigen/Dense>

#include <vector>

namespace forster::gridhash {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Points are the columns of a k x n matrix Q; g_e = |q_u - q_v|^2.
using PointCloud = MatrixXd;

// Axis-aligned boxes of side rho, uniform offset per dimension.
soc::Partition grid_partition(const PointCloud& Q, double rho, Rng& rng);

struct SocApproximation {
    soc::SocRep soc;  // m terms, each weight beta on same-box pairs
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    int m = 0;
};

// gamma <= 0 selects the default 16 k^2
SocApproximation soc_approximation(const PointCloud& Q, double beta, double delta, Rng& rng, double gamma = 0.0);

// Partition of the points in black intervals; support() is S.
soc::Partition interval_partition_1d(const VectorXd& values, double rho, Rng& rng);

struct AsocTerm {
    double weight = 0.0;
    soc::AsocRep mask;
    int coord = 0;
};

// Scale ladder behind an ASOC approximation. Terms are indexed by
// (coordinate, scale, trial) and drawn from a child stream of the seed, so a
// caller may materialize any subset of them lazily.
struct AsocLadder {
    int n = 0;
    int k = 0;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    std::vector<double> rho;  // increasing scales
    int trials = 0;  // per scale and coordinate
    Rng base;

    long long m() const { return static_cast<long long>(k) * static_cast<long long>(rho.size()) * trials; }
    AsocTerm term(const PointCloud& Q, long long index) const;
};

struct AsocOptions {
    double ratio = 1.1;      // geometric ladder ratio
    double trial_c = 8.0;    // trials per scale = ceil(trial_c log(n/delta))
};

AsocLadder asoc_ladder(int n, int k, double beta, double gamma, double alpha, double delta, const Rng& rng,
                       const AsocOptions& opt = {});

struct AsocApproximation {
    std::vector<AsocTerm> terms;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    int m = 0;
};

// Requires beta >= 4, alpha >= 1 and gamma >= max squared difference.
AsocApproximation asoc_approximation_1d(const VectorXd& values, double beta, double gamma, double alpha, double delta,
                                        Rng& rng, const AsocOptions& opt = {});
// One 1d family per coordinate at delta/k each.
AsocApproximation asoc_approximation(const PointCloud& Q, double beta, double gamma, double alpha, double delta,
                                     Rng& rng, const AsocOptions& opt = {});

// Dense checks used by tests and the acceptance harness.
MatrixXd squared_distances(const PointCloud& Q);
MatrixXd family_weights(const AsocApproximation& a);

struct DefinitionCheck {
    bool bounded = true;    // 0 <= x <= alpha, or each term <= beta g
    bool covers = true;     // x >= beta where g <= 1, or sum >= g^(>= gamma/alpha)
    bool cutoff = true;     // x = 0 where g > gamma, or gamma dominates coordinate gaps
    bool ok() const { return bounded && covers && cutoff; }
};

DefinitionCheck check_soc_approximation(const PointCloud& Q, const SocApproximation& s);
DefinitionCheck check_asoc_approximation(const PointCloud& Q, const AsocApproximation& a);

}  // namespace forster::gridhash
