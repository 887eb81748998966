#include "forster/error.hpp"
#include "forster/sparsifier.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace forster::sparsifier {

ImplicitLaplacianOracle::ImplicitLaplacianOracle(int n, BlockMatvec mv, std::optional<double> trace_hint)
    : n_(n), mv_(std::move(mv)), trace_hint_(trace_hint) {
    if (n <= 0) throw Error(ErrorKind::InvalidArgument, "oracle dimension must be positive");
}

ImplicitLaplacianOracle ImplicitLaplacianOracle::from_dense(MatrixXd L, bool hint_trace) {
    const int n = static_cast<int>(L.rows());
    const double tr = L.trace();
    return ImplicitLaplacianOracle(n, [L = std::move(L)](const MatrixXd& V) -> MatrixXd { return L * V; },
                                   hint_trace ? std::optional<double>(tr) : std::nullopt);
}

ImplicitLaplacianOracle ImplicitLaplacianOracle::from_sparse(const soc::SparseLaplacian& L, bool hint_trace) {
    Eigen::SparseMatrix<double> S = L.sparse();
    const double tr = 2.0 * L.total_weight();
    return ImplicitLaplacianOracle(L.n, [S = std::move(S)](const MatrixXd& V) -> MatrixXd { return S * V; },
                                   hint_trace ? std::optional<double>(tr) : std::nullopt);
}

MatrixXd ImplicitLaplacianOracle::apply(const MatrixXd& V) const {
    if (V.rows() != n_) throw Error(ErrorKind::InvalidArgument, "oracle input has the wrong dimension");
    queries_ += V.cols();
    if (budget_ > 0 && queries_ > budget_) {
        throw Error(ErrorKind::PhaseFailure, "matvec query budget " + std::to_string(budget_) + " exceeded");
    }
    return mv_(V);
}

VectorXd ImplicitLaplacianOracle::apply(const VectorXd& v) const {
    const MatrixXd V = v;
    return apply(V).col(0);
}

OracleCheck check_oracle(const ImplicitLaplacianOracle& L, Rng& rng, int probes) {
    const int n = L.n();
    MatrixXd U(n, probes + 1);
    for (int j = 0; j < probes; ++j)
        for (int i = 0; i < n; ++i) U(i, j) = rng.normal();
    U.col(probes).setOnes();
    const MatrixXd LU = L.apply(U);
    const double scale = std::max(LU.leftCols(probes).norm() / std::max(U.leftCols(probes).norm(), 1e-300), 1e-300);
    OracleCheck c;
    c.null_residual = LU.col(probes).norm() / (scale * std::sqrt(static_cast<double>(n)));
    for (int a = 0; a < probes; ++a)
        for (int b = a + 1; b < probes; ++b) {
            const double x = U.col(a).dot(LU.col(b)), y = U.col(b).dot(LU.col(a));
            const double ref = scale * U.col(a).norm() * U.col(b).norm();
            c.asymmetry = std::max(c.asymmetry, std::abs(x - y) / ref);
        }
    return c;
}

double estimate_trace(const ImplicitLaplacianOracle& L, double delta, Rng& rng, double c_probe) {
    if (L.trace_hint()) return *L.trace_hint();
    const int n = L.n();
    const int N = std::max(4, static_cast<int>(std::ceil(c_probe * std::log(std::max(n, 2) / delta))));
    MatrixXd G(n, N);
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < n; ++i) G(i, j) = rng.coin() ? 1.0 : -1.0;
    const VectorXd vals = G.cwiseProduct(L.apply(G)).colwise().sum().transpose();
    const double mean = vals.mean();
    const double se = std::sqrt((vals.array() - mean).square().sum() / (N - 1) / N);
    return mean + 3.0 * se;
}

// --- polynomial and trace machinery ---

double ChebyshevExp::eval(double x) const {
    if (R <= 0.0) return coef.empty() ? 0.0 : coef[0];
    const double t = 2.0 * x / R - 1.0;
    double b1 = 0.0, b2 = 0.0;
    for (int k = degree(); k >= 1; --k) {
        const double b0 = coef[k] + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    return coef[0] + t * b1 - b2;
}

MatrixXd ChebyshevExp::apply(const MatrixXd& S, const MatrixXd& X) const {
    if (R <= 0.0 || degree() == 0) return (coef[0] + err) * X;
    auto T = [&](const MatrixXd& Z) -> MatrixXd { return (2.0 / R) * (S * Z) - Z; };
    MatrixXd b1 = MatrixXd::Zero(X.rows(), X.cols()), b2 = b1;
    for (int k = degree(); k >= 1; --k) {
        MatrixXd b0 = coef[k] * X + 2.0 * T(b1) - b2;
        b2 = std::move(b1);
        b1 = std::move(b0);
    }
    return (coef[0] + err) * X + T(b1) - b2;
}

ChebyshevExp chebyshev_exp(double a, double R, double tol, int degree_cap) {
    if (!(R >= 0.0) || !std::isfinite(R)) throw Error(ErrorKind::InvalidArgument, "R must be finite and >= 0");
    ChebyshevExp c;
    c.a = a;
    c.R = R;
    if (R == 0.0) {
        c.coef = {1.0};
        return c;
    }
    const double dd = std::ceil(std::numbers::e * R + std::log(1.0 / tol));
    if (dd > degree_cap) {
        throw Error(ErrorKind::PolynomialDegreeExceeded,
                    "degree " + std::to_string(static_cast<long long>(dd)) + " exceeds cap " +
                        std::to_string(degree_cap));
    }
    const int d = static_cast<int>(dd);
    const int N = d + 1;
    std::vector<double> fv(N);
    for (int k = 0; k < N; ++k) {
        const double th = std::numbers::pi * (k + 0.5) / N;
        fv[k] = std::exp(-a * 0.5 * R * (1.0 + std::cos(th)));
    }
    c.coef.assign(N, 0.0);
    for (int j = 0; j < N; ++j) {
        double s = 0.0;
        for (int k = 0; k < N; ++k) s += fv[k] * std::cos(j * std::numbers::pi * (k + 0.5) / N);
        c.coef[j] = 2.0 * s / N;
    }
    c.coef[0] *= 0.5;
    double err = 0.0;
    const int grid = std::max(2000, 4 * N);
    for (int i = 0; i <= grid; ++i) {
        const double x = R * i / grid;
        err = std::max(err, std::abs(c.eval(x) - std::exp(-a * x)));
    }
    c.err = 1.01 * err + 1e-15;
    return c;
}

namespace {

MatrixXd project_pi(MatrixXd X) {
    X.rowwise() -= X.colwise().mean();
    return X;
}

MatrixXd gaussian(int n, int k, Rng& rng) {
    MatrixXd G(n, k);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < n; ++i) G(i, j) = rng.normal();
    return G;
}

struct TraceEstimate {
    double mean = 0.0;
    double rel_se = 0.0;
};

// Hutch++ for a PSD operator given as X -> A X; a third of the probes
// find a range that is traced exactly.
TraceEstimate hutchpp(const std::function<MatrixXd(const MatrixXd&)>& A, int n, int probes, bool on_pi, Rng& rng) {
    const int r = std::min(n, std::max(1, probes / 3));
    const int h = std::max(2, probes - r);
    MatrixXd S = gaussian(n, r, rng), G = gaussian(n, h, rng);
    if (on_pi) {
        S = project_pi(S);
        G = project_pi(G);
    }
    Eigen::HouseholderQR<MatrixXd> qr(A(S));
    const MatrixXd Qb = qr.householderQ() * MatrixXd::Identity(n, r);
    const double head = Qb.cwiseProduct(A(Qb)).sum();
    const MatrixXd Gd = G - Qb * (Qb.transpose() * G);
    const VectorXd vals = Gd.cwiseProduct(A(Gd)).colwise().sum().transpose();
    const double tail = vals.mean();
    const double var = (vals.array() - tail).square().sum() / (h - 1);
    TraceEstimate t;
    t.mean = head + tail;
    t.rel_se = t.mean > 0.0 ? std::sqrt(var / h) / t.mean : 0.0;
    return t;
}

TraceEstimate refined(const std::function<MatrixXd(const MatrixXd&)>& A, int n, double delta, bool on_pi,
                      const TraceOptions& opt, Rng& rng) {
    int probes = std::max(6, static_cast<int>(std::ceil(opt.c_probe * std::log(std::max(n, 2) / delta))));
    TraceEstimate t;
    for (int round = 0; round < 5; ++round) {
        t = hutchpp(A, n, probes, on_pi, rng);
        if (3.0 * t.rel_se <= 0.05) break;
        probes *= 2;
    }
    return t;
}

}  // namespace

double trace_exp_estimate(const MatrixXd& S, double R, double delta, Rng& rng, const TraceOptions& opt) {
    const int n = static_cast<int>(S.rows());
    const ChebyshevExp M = chebyshev_exp(0.5, R, opt.cheb_tol, opt.degree_cap);
    auto A = [&](const MatrixXd& X) -> MatrixXd { return M.apply(S, M.apply(S, X)); };
    const TraceEstimate t = refined(A, n, delta, opt.on_pi, opt, rng);
    // M^2 exceeds exp(-S) by at most 4 err + 4 err^2 per eigenvalue
    const double dim = opt.on_pi ? n - 1 : n;
    const double bias = dim * (4.0 * M.err + 4.0 * M.err * M.err);
    return std::max(0.0, t.mean - bias) / (1.0 + 3.0 * t.rel_se);
}

gridhash::PointCloud mmw_embed(const MatrixXd& P, const MatrixXd& S, double R, double delta, Rng& rng,
                               const TraceOptions& opt) {
    const int n = static_cast<int>(S.rows());
    const double Z = trace_exp_estimate(S, R, 0.5 * delta, rng, opt);
    if (!(Z > 0.0)) throw Error(ErrorKind::NormEstimateFailed, "trace estimate is not positive");
    const ChebyshevExp M = chebyshev_exp(0.5, R, opt.cheb_tol, opt.degree_cap);
    const MatrixXd MP = M.apply(S, P);
    const double k = std::ceil(opt.c_jl * std::log(std::max(n, 2) / (0.5 * delta)));
    const double f = std::sqrt(3.0 / (4.0 * Z));
    if (k >= n) return f * MP;
    const int kk = static_cast<int>(k);
    MatrixXd G = gaussian(kk, n, rng) / std::sqrt(k);
    return f * (G * MP);
}

double trace_pyp_estimate(const MatrixXd& P, const MatrixXd& S, double R, double delta, Rng& rng,
                          const TraceOptions& opt) {
    const int n = static_cast<int>(S.rows());
    const ChebyshevExp M = chebyshev_exp(0.5, R, opt.cheb_tol, opt.degree_cap);
    auto num = [&](const MatrixXd& X) -> MatrixXd {
        const MatrixXd Y = M.apply(S, P * X);
        return P * M.apply(S, Y);
    };
    auto den = [&](const MatrixXd& X) -> MatrixXd { return M.apply(S, M.apply(S, X)); };
    const TraceEstimate a = refined(num, n, 0.5 * delta, false, opt, rng);
    const TraceEstimate b = refined(den, n, 0.5 * delta, opt.on_pi, opt, rng);
    // numerator low, denominator high; M^2 exceeds exp(-S) by at most 4 err + 4 err^2
    const double excess = (4.0 * M.err + 4.0 * M.err * M.err) * P.squaredNorm();
    const double top = std::max(a.mean - excess, 0.0) / (1.0 + 3.0 * a.rel_se);
    const double bottom = b.mean * (1.0 + 3.0 * b.rel_se);
    if (!(bottom > 0.0)) throw Error(ErrorKind::NormEstimateFailed, "trace estimate is not positive");
    return top / bottom;
}

double truncation_guard(int n, int k, double rho) {
    if (!(rho >= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must be >= 1");
    const double nn = n;
    return 40.0 / 9.0 * rho * nn * nn * nn * nn * static_cast<double>(k) * k;
}

namespace {

// orthonormal basis of the complement of the all-ones vector
MatrixXd pi_basis(int n) {
    const MatrixXd one = MatrixXd::Constant(n, 1, 1.0);
    Eigen::HouseholderQR<MatrixXd> qr(one);
    const MatrixXd Q = qr.householderQ();
    return Q.rightCols(n - 1);
}

}  // namespace

MmwDense mmw_dense(const MatrixXd& S) {
    const int n = static_cast<int>(S.rows());
    const MatrixXd U = pi_basis(n);
    const MatrixXd Sp = U.transpose() * S * U;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Sp + Sp.transpose()));
    const VectorXd lam = es.eigenvalues();
    MmwDense m;
    m.lam_min = lam.minCoeff();
    m.lam_max = lam.maxCoeff();
    VectorXd w = (-(lam.array() - m.lam_min)).exp().matrix();
    w /= w.sum();
    const MatrixXd UV = U * es.eigenvectors();
    m.Y = UV * w.asDiagonal() * UV.transpose();
    m.half = UV * w.cwiseSqrt().asDiagonal() * UV.transpose();
    return m;
}

// --- inverse square root access ---

InvSqrtOperator::InvSqrtOperator(const ImplicitLaplacianOracle& L, double shift, const MatrixXd& B, double lam_lo,
                                 double lam_hi, const InvSqrtOptions& opt)
    : L_(&L), shift_(shift), opt_(opt) {
    if (!(shift > 0.0)) throw Error(ErrorKind::InvalidArgument, "shift must be positive");
    if (!(lam_lo > 0.0 && lam_hi >= lam_lo)) throw Error(ErrorKind::InvalidArgument, "bad spectral range");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (B + B.transpose()));
    V_ = es.eigenvectors();
    lam_ = es.eigenvalues().cwiseMax(0.0);
    const double a = 0.5 * std::log(lam_lo) - opt.pad, b = 0.5 * std::log(lam_hi) + opt.pad;
    for (double u = a; u <= b + 1e-12; u += opt.h) u_.push_back(u);
}

MatrixXd InvSqrtOperator::apply(const MatrixXd& Vin) const {
    const int n = L_->n();
    const MatrixXd X0 = project_pi(Vin);
    const VectorXd bnorm = X0.colwise().norm();
    MatrixXd out = MatrixXd::Zero(n, X0.cols());
    const int cols = static_cast<int>(X0.cols());
    // the integrand decays like e^{-|u|} past both ends, so the nodes that were
    // cut off sum to a geometric tail of the end values
    const double tail = std::exp(-opt_.h) / (1.0 - std::exp(-opt_.h));
    for (std::size_t node = 0; node < u_.size(); ++node) {
        const double u = u_[node];
        const double s2 = std::exp(2.0 * u);
        auto A = [&](const MatrixXd& Z) -> MatrixXd {
            MatrixXd r = L_->apply(Z);
            r += shift_ * project_pi(Z);
            r += s2 * Z;
            return r;
        };
        const VectorXd inv = (lam_.array() + s2).inverse().matrix();
        auto M = [&](const MatrixXd& R) -> MatrixXd { return V_ * (inv.asDiagonal() * (V_.transpose() * R)); };
        MatrixXd X = MatrixXd::Zero(n, cols);
        MatrixXd R = X0;
        MatrixXd Zc = M(R);
        MatrixXd Pd = Zc;
        VectorXd rz = R.cwiseProduct(Zc).colwise().sum().transpose();
        int it = 0;
        for (;; ++it) {
            const VectorXd rn = R.colwise().norm();
            bool done = true;
            for (int j = 0; j < cols; ++j)
                if (rn(j) > opt_.cg_tol * bnorm(j)) done = false;
            if (done) break;
            if (it >= opt_.cg_max) {
                double worst = 0.0;
                for (int j = 0; j < cols; ++j)
                    if (bnorm(j) > 0.0) worst = std::max(worst, rn(j) / bnorm(j));
                throw Error(ErrorKind::KrylovStagnation,
                            "relative residual " + std::to_string(worst) + " after " + std::to_string(it) +
                                " iterations");
            }
            const MatrixXd AP = A(Pd);
            const VectorXd pap = Pd.cwiseProduct(AP).colwise().sum().transpose();
            VectorXd alpha(cols);
            for (int j = 0; j < cols; ++j) alpha(j) = pap(j) > 0.0 ? rz(j) / pap(j) : 0.0;
            X += Pd * alpha.asDiagonal();
            R -= AP * alpha.asDiagonal();
            Zc = M(R);
            const VectorXd rz_new = R.cwiseProduct(Zc).colwise().sum().transpose();
            VectorXd beta(cols);
            for (int j = 0; j < cols; ++j) beta(j) = rz(j) > 0.0 ? rz_new(j) / rz(j) : 0.0;
            Pd = Zc + Pd * beta.asDiagonal();
            rz = rz_new;
        }
        max_iters_ = std::max(max_iters_, it);
        const double end = (node == 0 ? tail : 0.0) + (node + 1 == u_.size() ? tail : 0.0);
        out += (2.0 / std::numbers::pi * opt_.h * std::exp(u) * (1.0 + end)) * X;
    }
    return std::sqrt(1.0 + opt_.margin) * project_pi(out);
}

MatrixXd InvSqrtOperator::materialize() const {
    const int n = L_->n();
    MatrixXd P = apply(MatrixXd::Identity(n, n));
    return 0.5 * (P + MatrixXd(P.transpose()));
}

// --- final sampling ---

soc::SparseLaplacian resistance_sample(const MatrixXd& W, long long samples, Rng& rng) {
    const int n = static_cast<int>(W.rows());
    if (samples <= 0) throw Error(ErrorKind::InvalidArgument, "sample count must be positive");
    const MatrixXd L = soc::laplacian_of_weights(W);
    const MatrixXd J = MatrixXd::Constant(n, n, 1.0 / n);
    const MatrixXd Lp = (L + J).ldlt().solve(MatrixXd::Identity(n, n)) - J;
    std::vector<soc::Edge> cand;
    std::vector<double> cum;
    double total = 0.0;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            if (!(W(u, v) > 0.0)) continue;
            const double r = std::max(Lp(u, u) + Lp(v, v) - 2.0 * Lp(u, v), 0.0);
            const double p = W(u, v) * r;
            if (!(p > 0.0)) continue;
            cand.push_back({u, v, W(u, v)});
            total += p;
            cum.push_back(total);
        }
    soc::SparseLaplacian out;
    out.n = n;
    if (cand.empty()) return out;
    std::map<std::size_t, long long> counts;
    for (long long s = 0; s < samples; ++s) {
        const double x = rng.uniform() * total;
        const std::size_t i = std::min<std::size_t>(std::upper_bound(cum.begin(), cum.end(), x) - cum.begin(),
                                                    cum.size() - 1);
        ++counts[i];
    }
    for (const auto& [i, c] : counts) {
        const double p = (cum[i] - (i ? cum[i - 1] : 0.0)) / total;
        out.edges.push_back({cand[i].u, cand[i].v, cand[i].w * static_cast<double>(c) / (samples * p)});
    }
    out.normalize();
    return out;
}

}  // namespace forster::sparsifier
