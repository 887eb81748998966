#pragma once

#include "forster/linalg.hpp"
#include "forster/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace fixtures {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// rows e_1, e_2, (e_1 + e_2)/sqrt(2)
inline MatrixXd three_rows() {
    MatrixXd A(3, 2);
    A << 1, 0, 0, 1, 1 / std::sqrt(2.0), 1 / std::sqrt(2.0);
    return A;
}

inline MatrixXd gaussian(Eigen::Index n, Eigen::Index d, forster::Rng& rng) {
    MatrixXd A(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) A(i, j) = rng.normal();
    return A;
}

inline VectorXd gaussian_vec(Eigen::Index n, forster::Rng& rng) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

inline MatrixXd random_spd(Eigen::Index d, forster::Rng& rng) {
    const MatrixXd G = gaussian(d, d, rng);
    return G * G.transpose() + 0.5 * MatrixXd::Identity(d, d);
}

inline double op_norm_sym(const MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace fixtures

namespace fixtures {

// weighted graph Laplacians used as hidden matrices
inline MatrixXd laplacian_from_edges(int n, const std::vector<std::array<double, 3>>& edges) {
    MatrixXd L = MatrixXd::Zero(n, n);
    for (const auto& e : edges) {
        const int u = static_cast<int>(e[0]), v = static_cast<int>(e[1]);
        L(u, u) += e[2];
        L(v, v) += e[2];
        L(u, v) -= e[2];
        L(v, u) -= e[2];
    }
    return L;
}

inline MatrixXd path_laplacian(int n) {
    std::vector<std::array<double, 3>> e;
    for (int i = 0; i + 1 < n; ++i) e.push_back({double(i), double(i + 1), 1.0});
    return laplacian_from_edges(n, e);
}

inline MatrixXd star_laplacian(int n) {
    std::vector<std::array<double, 3>> e;
    for (int i = 1; i < n; ++i) e.push_back({0.0, double(i), 1.0});
    return laplacian_from_edges(n, e);
}

// random recursive tree with weights in [0.5, 2]
inline MatrixXd random_tree_laplacian(int n, forster::Rng& rng) {
    std::vector<std::array<double, 3>> e;
    for (int i = 1; i < n; ++i) e.push_back({double(rng.below(i)), double(i), rng.uniform(0.5, 2.0)});
    return laplacian_from_edges(n, e);
}

// random tree plus extra edges with probability p
inline MatrixXd random_connected_laplacian(int n, double p, forster::Rng& rng) {
    std::vector<std::array<double, 3>> e;
    for (int i = 1; i < n; ++i) e.push_back({double(rng.below(i)), double(i), rng.uniform(0.5, 2.0)});
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (rng.uniform() < p) e.push_back({double(u), double(v), rng.uniform(0.5, 2.0)});
    return laplacian_from_edges(n, e);
}

inline MatrixXd centering(int n) { return MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / n); }

// (L + delta Pi)^{-1/2} on the range of Pi
inline MatrixXd shifted_inv_sqrt(const MatrixXd& L, double delta) {
    const int n = static_cast<int>(L.rows());
    const MatrixXd Pi = centering(n);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(L + delta * Pi);
    VectorXd d = es.eigenvalues();
    const VectorXd one = VectorXd::Constant(n, 1.0 / std::sqrt(double(n)));
    MatrixXd out = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const VectorXd q = es.eigenvectors().col(i);
        if (std::abs(q.dot(one)) > 0.5) continue;  // the constant direction
        out += q * q.transpose() / std::sqrt(d(i));
    }
    return Pi * out * Pi;
}

// Exact minimum of <b, v> + 1/2 v^T L v over [lo, hi] by enumerating which
// coordinates sit at a bound. 3^n reduced solves, so keep n small.
inline double brute_force_qp(const MatrixXd& L, const VectorXd& b, const VectorXd& lo, const VectorXd& hi) {
    const int n = static_cast<int>(b.size());
    int total = 1;
    for (int i = 0; i < n; ++i) total *= 3;
    double best = INFINITY;
    for (int code = 0; code < total; ++code) {
        VectorXd v = VectorXd::Zero(n);
        std::vector<int> fr;
        int c = code;
        for (int i = 0; i < n; ++i, c /= 3) {
            if (c % 3 == 0) v(i) = lo(i);
            else if (c % 3 == 1) v(i) = hi(i);
            else fr.push_back(i);
        }
        if (!fr.empty()) {
            const int m = static_cast<int>(fr.size());
            MatrixXd LF(m, m);
            VectorXd rhs(m);
            const VectorXd Lv = L * v;
            for (int a = 0; a < m; ++a) {
                rhs(a) = -b(fr[a]) - Lv(fr[a]);
                for (int k = 0; k < m; ++k) LF(a, k) = L(fr[a], fr[k]);
            }
            const VectorXd x = LF.completeOrthogonalDecomposition().solve(rhs);
            if ((LF * x - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) continue;
            bool ok = true;
            for (int a = 0; a < m; ++a) {
                if (x(a) < lo(fr[a]) - 1e-12 || x(a) > hi(fr[a]) + 1e-12) ok = false;
                v(fr[a]) = x(a);
            }
            if (!ok) continue;
        }
        best = std::min(best, b.dot(v) + 0.5 * v.dot(L * v));
    }
    return best;
}

// generalized eigenvalue range of (A, B) on the complement of the ones vector
inline std::pair<double, double> pencil(const MatrixXd& A, const MatrixXd& B) {
    const int n = static_cast<int>(A.rows());
    const MatrixXd Pi = fixtures::centering(n);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eb(B + MatrixXd::Constant(n, n, 1.0 / n));
    const MatrixXd Bh = eb.operatorInverseSqrt();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Pi * Bh * A * Bh * Pi);
    // drop the ones direction, which has eigenvalue 0
    const VectorXd ev = es.eigenvalues();
    return {ev(1), ev(n - 1)};
}


}  // namespace fixtures
