#include "forster/gridhash.hpp"

#include "forster/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace forster::gridhash {

namespace {

long long cell(double q, double offset, double rho) {
    const double c = std::floor((q - offset) / rho);
    if (!std::isfinite(c) || std::abs(c) > 9e18) throw Error(ErrorKind::Overflow, "grid cell index out of range");
    return static_cast<long long>(c);
}

// pieces = groups of equal key rows; keys is n x width, row-major
soc::Partition group_by_keys(int n, int width, const std::vector<long long>& keys, const std::vector<char>& keep) {
    std::vector<int> idx;
    for (int v = 0; v < n; ++v)
        if (keep.empty() || keep[v]) idx.push_back(v);
    auto less = [&](int a, int b) {
        return std::lexicographical_compare(keys.begin() + a * width, keys.begin() + (a + 1) * width,
                                            keys.begin() + b * width, keys.begin() + (b + 1) * width);
    };
    std::stable_sort(idx.begin(), idx.end(), less);
    soc::Partition p;
    p.n = n;
    p.membership.assign(n, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i == 0 || less(idx[i - 1], idx[i])) p.pieces.emplace_back();
        p.pieces.back().push_back(idx[i]);
        p.membership[idx[i]] = static_cast<int>(p.pieces.size());
    }
    return p;
}

void check_points(const PointCloud& Q) {
    if (!Q.allFinite()) throw Error(ErrorKind::InvalidArgument, "points must be finite");
}

}  // namespace

soc::Partition grid_partition(const PointCloud& Q, double rho, Rng& rng) {
    if (!(rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "rho must be positive");
    check_points(Q);
    const int k = static_cast<int>(Q.rows()), n = static_cast<int>(Q.cols());
    std::vector<long long> keys(static_cast<std::size_t>(n) * k);
    for (int j = 0; j < k; ++j) {
        const double off = rng.uniform(0.0, rho);
        for (int v = 0; v < n; ++v) keys[static_cast<std::size_t>(v) * k + j] = cell(Q(j, v), off, rho);
    }
    return group_by_keys(n, k, keys, {});
}

SocApproximation soc_approximation(const PointCloud& Q, double beta, double delta, Rng& rng, double gamma) {
    if (!(beta > 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must be in (0,1)");
    const int k = static_cast<int>(Q.rows()), n = static_cast<int>(Q.cols());
    SocApproximation out;
    out.beta = beta;
    out.gamma = gamma > 0.0 ? gamma : 16.0 * k * k;
    out.m = static_cast<int>(std::ceil(2.0 * std::log2(std::max(n, 1) / delta)));
    out.alpha = beta * out.m;
    out.soc.n = n;
    const double rho = std::sqrt(out.gamma / k);
    const Rng base = rng.split(rng.engine()());
    for (int i = 0; i < out.m; ++i) {
        Rng child = base.split(static_cast<std::uint64_t>(i));
        out.soc.add(beta, grid_partition(Q, rho, child));
    }
    return out;
}

soc::Partition interval_partition_1d(const VectorXd& values, double rho, Rng& rng) {
    if (!(rho > 0.0)) throw Error(ErrorKind::InvalidArgument, "rho must be positive");
    if (!values.allFinite()) throw Error(ErrorKind::InvalidArgument, "values must be finite");
    const int n = static_cast<int>(values.size());
    const double off = rng.uniform(0.0, rho);
    const long long flip = rng.coin() ? 1 : 0;
    std::vector<long long> keys(n);
    std::vector<char> keep(n);
    for (int v = 0; v < n; ++v) {
        keys[v] = cell(values(v), off, rho);
        // black intervals: even index after the optional color swap
        keep[v] = static_cast<char>(((keys[v] & 1LL) ^ flip) == 0);
    }
    return group_by_keys(n, 1, keys, keep);
}

AsocTerm AsocLadder::term(const PointCloud& Q, long long index) const {
    if (index < 0 || index >= m()) throw Error(ErrorKind::InvalidArgument, "term index out of range");
    const long long p = static_cast<long long>(rho.size());
    const int coord = static_cast<int>(index / (p * trials));
    const int a = static_cast<int>((index / trials) % p);
    Rng child = base.split(static_cast<std::uint64_t>(index));
    AsocTerm t;
    t.coord = coord;
    t.weight = beta * rho[a] * rho[a];
    t.mask.pieces = interval_partition_1d(Q.row(coord).transpose(), rho[a], child);
    return t;
}

AsocLadder asoc_ladder(int n, int k, double beta, double gamma, double alpha, double delta, const Rng& rng,
                       const AsocOptions& opt) {
    if (!(beta >= 4.0)) throw Error(ErrorKind::InvalidArgument, "beta must be at least 4");
    if (!(alpha >= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be at least 1");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must be in (0,1)");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidArgument, "gamma must be finite");
    if (!(opt.ratio > 1.0)) throw Error(ErrorKind::InvalidArgument, "ladder ratio must exceed 1");
    AsocLadder L;
    L.n = n;
    L.k = k;
    L.alpha = alpha;
    L.beta = beta;
    L.gamma = gamma;
    L.base = rng;
    if (gamma > 0.0) {
        double r = std::sqrt(4.0 * gamma / (9.0 * alpha));
        L.rho.push_back(r);
        while (r * r < gamma / 4.0) {
            r *= opt.ratio;
            L.rho.push_back(r);
        }
    }
    L.trials = static_cast<int>(std::ceil(opt.trial_c * std::log(std::max(n, 2) * static_cast<double>(k) / delta)));
    return L;
}

AsocApproximation asoc_approximation(const PointCloud& Q, double beta, double gamma, double alpha, double delta,
                                     Rng& rng, const AsocOptions& opt) {
    check_points(Q);
    const int k = static_cast<int>(Q.rows()), n = static_cast<int>(Q.cols());
    for (int j = 0; j < k; ++j) {
        const double span = Q.row(j).maxCoeff() - Q.row(j).minCoeff();
        if (n > 0 && span * span > gamma * (1.0 + 1e-12)) {
            throw Error(ErrorKind::PrerequisiteViolated, "gamma is below a squared coordinate difference");
        }
    }
    const AsocLadder L = asoc_ladder(n, k, beta, gamma, alpha, delta, rng.split(rng.engine()()), opt);
    AsocApproximation out;
    out.alpha = alpha;
    out.beta = beta;
    out.gamma = gamma;
    out.m = static_cast<int>(L.m());
    out.terms.reserve(out.m);
    for (long long i = 0; i < L.m(); ++i) out.terms.push_back(L.term(Q, i));
    return out;
}

AsocApproximation asoc_approximation_1d(const VectorXd& values, double beta, double gamma, double alpha, double delta,
                                        Rng& rng, const AsocOptions& opt) {
    return asoc_approximation(values.transpose(), beta, gamma, alpha, delta, rng, opt);
}

MatrixXd squared_distances(const PointCloud& Q) {
    // pairwise differences, not the Gram identity, so boundary tests are exact
    const Eigen::Index n = Q.cols();
    MatrixXd G = MatrixXd::Zero(n, n);
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = u + 1; v < n; ++v) G(u, v) = G(v, u) = (Q.col(u) - Q.col(v)).squaredNorm();
    return G;
}

MatrixXd family_weights(const AsocApproximation& a) {
    if (a.terms.empty()) return MatrixXd();
    const int n = a.terms.front().mask.n();
    MatrixXd W = MatrixXd::Zero(n, n);
    for (const auto& t : a.terms) {
        for (int u = 0; u < n; ++u)
            for (int v = u + 1; v < n; ++v)
                if (t.mask.active(u, v)) W(u, v) += t.weight, W(v, u) += t.weight;
    }
    return W;
}

DefinitionCheck check_soc_approximation(const PointCloud& Q, const SocApproximation& s) {
    DefinitionCheck c;
    const MatrixXd G = squared_distances(Q);
    const MatrixXd X = soc::materialize_weights(s.soc);
    const int n = static_cast<int>(Q.cols());
    const double tol = 1e-12 * std::max(1.0, s.alpha);
    for (int u = 0; u < n; ++u) {
        for (int v = u + 1; v < n; ++v) {
            if (X(u, v) < -tol || X(u, v) > s.alpha + tol) c.bounded = false;
            if (G(u, v) <= 1.0 && X(u, v) < s.beta - tol) c.covers = false;
            if (G(u, v) > s.gamma && X(u, v) != 0.0) c.cutoff = false;
        }
    }
    return c;
}

DefinitionCheck check_asoc_approximation(const PointCloud& Q, const AsocApproximation& a) {
    DefinitionCheck c;
    const int k = static_cast<int>(Q.rows()), n = static_cast<int>(Q.cols());
    const MatrixXd G = squared_distances(Q);
    MatrixXd Gc = MatrixXd::Zero(n, n);  // g^(>= gamma/alpha)
    const double thr = a.gamma / a.alpha;
    for (int j = 0; j < k; ++j) {
        for (int u = 0; u < n; ++u) {
            for (int v = 0; v < n; ++v) {
                const double d2 = (Q(j, u) - Q(j, v)) * (Q(j, u) - Q(j, v));
                if (d2 > a.gamma * (1.0 + 1e-12)) c.cutoff = false;
                if (d2 >= thr) Gc(u, v) += d2;
            }
        }
    }
    MatrixXd sum = MatrixXd::Zero(n, n);
    for (const auto& t : a.terms) {
        for (int u = 0; u < n; ++u) {
            for (int v = u + 1; v < n; ++v) {
                if (!t.mask.active(u, v)) continue;
                if (t.weight > a.beta * G(u, v) * (1.0 + 1e-12)) c.bounded = false;
                sum(u, v) += t.weight;
            }
        }
    }
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (sum(u, v) < Gc(u, v) * (1.0 - 1e-12)) c.covers = false;
    return c;
}

}  // namespace forster::gridhash
