#include "forster/packing.hpp"

#include "forster/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace forster::packing {

MatrixXd Dictionary::apply(const MatrixXd& W) const {
    const MatrixXd L = soc::laplacian_of_weights(W);
    MatrixXd LP = L * P;
    MatrixXd out = P * LP;
    out *= scale;
    return 0.5 * (out + out.transpose());
}

MatrixXd Dictionary::adjoint(const MatrixXd& Y) const {
    const MatrixXd K = P * Y * P;
    const VectorXd d = K.diagonal();
    MatrixXd G = -2.0 * K;
    G.colwise() += d;
    G.rowwise() += d.transpose();
    G.diagonal().setZero();
    return scale * G;
}

MatrixXd mask_from_asoc(const soc::AsocRep& a) {
    const int n = a.n();
    MatrixXd C = MatrixXd::Zero(n, n);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (a.active(u, v)) C(u, v) = C(v, u) = 1.0;
    return C;
}

MatrixXd full_mask(int n) {
    MatrixXd C = MatrixXd::Ones(n, n);
    C.diagonal().setZero();
    return C;
}

double mask_value(const MatrixXd& C, const MatrixXd& W) { return 0.5 * C.cwiseProduct(W).sum(); }

double lambda_max(const MatrixXd& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double schatten_norm(const MatrixXd& M, double p) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
    const VectorXd a = es.eigenvalues().cwiseAbs();
    const double top = a.maxCoeff();
    if (top == 0.0) return 0.0;
    return top * std::pow((a / top).array().pow(p).sum(), 1.0 / p);
}

namespace {

// M^j by repeated products, j >= 0
MatrixXd int_power(const MatrixXd& M, int j) {
    MatrixXd out = MatrixXd::Identity(M.rows(), M.cols());
    for (int i = 0; i < j; ++i) out = out * M;
    return out;
}

void check_p(int p) {
    if (p < 3 || p % 2 == 0) throw Error(ErrorKind::InvalidArgument, "p must be an odd integer >= 3");
}

int sketch_rows(int n, double delta, const EmbedOptions& opt) {
    const double k = std::ceil(opt.c_jl * std::log(std::max(n, 2) / delta));
    return k >= n ? n : static_cast<int>(k);
}

double min_on_support(const MatrixXd& G, const MatrixXd& C) {
    double best = std::numeric_limits<double>::infinity();
    const Eigen::Index n = C.rows();
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = u + 1; v < n; ++v)
            if (C(u, v) > 0.0) best = std::min(best, G(u, v));
    return best;
}

bool mask_empty(const MatrixXd& C) { return !(C.array() > 0.0).any(); }

}  // namespace

Embedding schatten_embed(const Dictionary& D, const MatrixXd& W, int p, double delta, Rng& rng,
                         const EmbedOptions& opt) {
    check_p(p);
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must be in (0,1)");
    const int n = D.n();
    const MatrixXd M = D.apply(W);
    const int h = (p - 1) / 2;
    const MatrixXd half = int_power(M, h);
    const MatrixXd Mh = M * half;
    const double trace_p = half.cwiseProduct(Mh).sum();
    Embedding e;
    if (!(trace_p > 0.0)) throw Error(ErrorKind::InvalidArgument, "A(w) vanishes; nothing to embed");
    e.norm_p = std::pow(trace_p, 1.0 / p);
    const MatrixXd ypow = (p == 3 ? Mh : MatrixXd(half * half)) / std::pow(e.norm_p, p - 1);
    e.g = D.adjoint(ypow);
    const double root_s = std::sqrt(D.scale);

    if (opt.mode == EmbedMode::Exact) {
        e.z = trace_p;
        e.Q = (root_s / std::pow(e.norm_p, 0.5 * (p - 1))) * (half * D.P);
        return e;
    }

    // Hutch++ estimate of Tr(M^p): a third of the probes find a range that is
    // traced exactly, the rest run Hutchinson on the deflated remainder
    int probes = static_cast<int>(std::ceil(opt.c_probe * std::log(std::max(n, 2) / delta)));
    double mean = 0.0, rel_se = 1.0;
    auto apply_pow = [&](const MatrixXd& X) -> MatrixXd { return half * (M * (half * X)); };
    for (int round = 0;; ++round) {
        const int r = std::min(n, std::max(1, probes / 3));
        const int h = std::max(2, probes - r);
        MatrixXd S(n, r), G(n, h);
        for (int j = 0; j < r; ++j)
            for (int i = 0; i < n; ++i) S(i, j) = rng.normal();
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < n; ++i) G(i, j) = rng.normal();
        Eigen::HouseholderQR<MatrixXd> qr(apply_pow(S));
        const MatrixXd Qb = qr.householderQ() * MatrixXd::Identity(n, r);
        const double head = Qb.cwiseProduct(apply_pow(Qb)).sum();
        const MatrixXd Gd = G - Qb * (Qb.transpose() * G);
        const MatrixXd H = half * Gd;
        const VectorXd vals = H.cwiseProduct(M * H).colwise().sum().transpose();
        const double tail = vals.mean();
        const double var = (vals.array() - tail).square().sum() / (h - 1);
        mean = head + tail;
        rel_se = mean > 0.0 ? std::sqrt(var / h) / mean : 1.0;
        e.probes = r + h;
        if (3.0 * rel_se <= 0.0476) break;
        if (round >= opt.probe_doublings) {
            throw Error(ErrorKind::NormEstimateFailed,
                        "trace estimate relative standard error " + std::to_string(rel_se) + " after " +
                            std::to_string(e.probes) + " probes");
        }
        probes *= 2;
    }
    e.z = mean / (1.0 + 3.0 * rel_se);

    const int k = sketch_rows(n, delta, opt);
    // squared lengths land in [0.72 (1 - 1/3), 0.72 (1 + 1/3)] times the target
    const double f = root_s * std::sqrt(0.72) * std::pow(e.z, 1.0 / (2.0 * p) - 0.5);
    const MatrixXd HP = half * D.P;
    if (k >= n) {
        e.Q = f * HP;
    } else {
        MatrixXd G(k, n);
        const double sd = 1.0 / std::sqrt(static_cast<double>(k));
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < k; ++i) G(i, j) = sd * rng.normal();
        e.Q = f * (G * HP);
    }
    return e;
}

StepOracleOutput step_oracle(const MatrixXd& Q, double beta, double delta, Rng& rng, double loss) {
    auto s = gridhash::soc_approximation(Q, beta, delta, rng);
    StepOracleOutput out;
    out.step = std::move(s.soc);
    out.m = s.m;
    out.beta = beta;
    out.alpha = loss * s.alpha;
    out.gamma = loss * s.gamma;
    return out;
}

DecisionDefaults decision_defaults(int n, double rho) {
    const double L = std::log(std::max(n * std::max(rho, 1.0), std::exp(1.0)));
    const double c = std::cbrt(L);
    int p = std::max(3, static_cast<int>(std::lround(c)));
    if (p % 2 == 0) ++p;
    const double beta = std::max(8.0, std::exp(c));
    const int T = std::max(4, static_cast<int>(std::ceil(2.0 * L / std::log(beta))));
    return {p, T, beta};
}

DecisionResult soc_packing_decision(const Dictionary& D, const MatrixXd& C, const DecisionOptions& opt, Rng& rng) {
    const int n = D.n();
    if (C.rows() != n || C.cols() != n) throw Error(ErrorKind::InvalidArgument, "mask size does not match dictionary");
    DecisionResult r;
    if (mask_empty(C)) {
        // c^T w stays 0; the zero dual is vacuous and OPT = 0
        r.opt_upper = 0.0;
        return r;
    }
    const double rho = lambda_max(D.apply(C));
    const DecisionDefaults def = decision_defaults(n, rho);
    r.p = opt.p > 0 ? opt.p : def.p;
    check_p(r.p);
    r.T = opt.T > 0 ? opt.T : def.T;
    r.beta = opt.beta > 0.0 ? opt.beta : def.beta;
    const double step_delta = opt.delta / (2.0 * r.T);
    const bool exact = opt.embed.mode == EmbedMode::Exact;
    const int k = exact ? n : sketch_rows(n, step_delta, opt.embed);
    const double loss = exact ? 1.0 : 2.0;
    r.m = static_cast<int>(std::ceil(2.0 * std::log2(std::max(n, 1) / step_delta)));
    r.alpha = loss * r.beta * r.m;
    r.gamma = loss * 16.0 * k * k;
    const double slope = std::pow(1.0 + r.alpha, r.p - 1) * r.gamma;
    const double threshold = std::pow(r.beta, 0.5 * r.T);
    const double rootn = std::pow(static_cast<double>(n), 1.0 / r.p);

    const Rng base = rng.split(rng.engine()());
    MatrixXd W = C;
    MatrixXd Ybar = MatrixXd::Zero(n, n);
    double ctw = mask_value(C, W);
    r.ctw.push_back(ctw);
    bool tracking = opt.track_structure;
    if (tracking) r.structure.push_back({1.0, soc::Partition::whole(n)});
    double best_single = std::numeric_limits<double>::infinity();

    for (int t = 0; t < r.T; ++t) {
        Rng child = base.split(static_cast<std::uint64_t>(t));
        const Embedding emb = schatten_embed(D, W, r.p, 0.5 * step_delta, child, opt.embed);
        r.phi.push_back(emb.norm_p - slope * ctw);
        // Y_t^{p-1} has unit q-norm, so it certifies OPT <= n^{1/p} / min_e A*(Y)_e
        const double theta_t = min_on_support(emb.g, C);
        if (theta_t > 0.0) best_single = std::min(best_single, rootn / theta_t);
        {
            const int h = (r.p - 1) / 2;
            const MatrixXd M = D.apply(W);
            const MatrixXd half = int_power(M, h);
            Ybar += (half * half) / std::pow(emb.norm_p, r.p - 1);
        }
        const StepOracleOutput step = step_oracle(emb.Q, r.beta, 0.5 * step_delta, child, loss);
        const MatrixXd Delta = soc::materialize_weights(step.step);
        W = W.cwiseProduct((MatrixXd::Ones(n, n) + Delta));
        ctw = mask_value(C, W);
        r.ctw.push_back(ctw);
        r.steps = t + 1;

        if (tracking) {
            std::vector<soc::SocTerm> next = r.structure;
            const long long size = static_cast<long long>(r.structure.size()) * (1 + step.step.terms.size());
            if (size > opt.structure_cap) {
                tracking = false;
                r.structure.clear();
            } else {
                for (const auto& a : r.structure)
                    for (const auto& b : step.step.terms)
                        next.push_back({a.weight * b.weight, soc::mutual_refinement(a.part, b.part)});
                r.structure = std::move(next);
            }
        }
        if (ctw >= threshold) {
            r.returned = true;
            r.X = W / ctw;
            break;
        }
    }
    // potential at the final iterate
    {
        const MatrixXd M = D.apply(W);
        const double np = schatten_norm(M, r.p);
        r.phi.push_back(np - slope * ctw);
    }
    for (std::size_t i = 1; i < r.phi.size(); ++i)
        if (r.phi[i] > r.phi[i - 1] + 1e-9 * std::max(1.0, std::abs(r.phi[i - 1]))) r.phi_monotone = false;
    r.structure_complete = tracking;
    if (!r.returned) r.X = W / ctw;

    Ybar /= std::max(r.steps, 1);
    const double q = static_cast<double>(r.p) / (r.p - 1);
    r.dual_q_norm = schatten_norm(Ybar, q);
    r.dual_theta = min_on_support(D.adjoint(Ybar), C);
    double avg_bound = std::numeric_limits<double>::infinity();
    if (r.dual_theta > 0.0) avg_bound = r.dual_q_norm * rootn / r.dual_theta;
    r.opt_upper = std::min(avg_bound, best_single);
    return r;
}

PackingResult packing_optimize(const Dictionary& D, const MatrixXd& C, double lower, double upper,
                               const PackingOptions& opt, Rng& rng) {
    if (!(lower > 0.0) || !(upper >= lower)) throw Error(ErrorKind::InvalidArgument, "need 0 < lower <= upper");
    const int n = D.n();
    PackingResult res;
    if (mask_empty(C)) {
        res.X = MatrixXd::Zero(n, n);
        res.upper = 0.0;
        return res;
    }
    // trivial feasible point and the trace bound Tr A(x) <= n
    const double csum = mask_value(C, MatrixXd::Ones(n, n));
    double lam = lambda_max(D.apply(C));
    res.X = C / lam;
    res.value = csum / lam;
    res.lambda_max = 1.0;
    const MatrixXd tr = D.adjoint(MatrixXd::Identity(n, n));
    double U = std::min(upper, n / min_on_support(tr, C));

    auto consider = [&](const MatrixXd& W) {
        const double l = lambda_max(D.apply(W));
        if (!(l > 0.0)) return;
        const double v = mask_value(C, W) / l;
        if (v > res.value) {
            res.value = v;
            res.X = W / l;
        }
    };
    auto check = [&]() {
        if (U < lower * (1.0 - 1e-9) || res.value > upper * (1.0 + 1e-9)) {
            throw Error(ErrorKind::InconsistentBounds,
                        "certified range [" + std::to_string(res.value) + ", " + std::to_string(U) +
                            "] misses the caller bounds [" + std::to_string(lower) + ", " + std::to_string(upper) +
                            "]");
        }
    };
    check();

    int phases = opt.max_phases;
    if (phases <= 0) {
        const double ratio = std::max(4.0, U / std::max(lower, res.value));
        phases = lower == upper ? 1 : static_cast<int>(std::ceil(std::log2(std::log2(ratio)))) + 2;
    }
    const Rng base = rng.split(rng.engine()());
    for (int ph = 0; ph < phases; ++ph) {
        const double lo = std::max(lower, res.value);
        if (ph > 0 && U <= lo * (1.0 + 1e-6)) break;
        const double sigma = lower == upper ? lower : std::sqrt(lo * std::max(U, lo));
        res.sigmas.push_back(sigma);
        Rng child = base.split(static_cast<std::uint64_t>(ph));
        const DecisionResult dr = soc_packing_decision(D.scaled(sigma), C, opt.decision, child);
        ++res.decisions;
        res.phi_monotone = res.phi_monotone && dr.phi_monotone;
        consider(dr.X);
        U = std::min(U, sigma * dr.opt_upper);
        check();
    }
    res.lambda_max = lambda_max(D.apply(res.X));
    res.value = mask_value(C, res.X);
    res.upper = std::max(U, res.value);
    res.q_run = res.upper / res.value;
    return res;
}

double scalar_scaling_value(const Dictionary& D, const MatrixXd& C, const MatrixXd& W) {
    const double l = lambda_max(D.apply(W));
    return l > 0.0 ? mask_value(C, W) / l : 0.0;
}

BarrierResult packing_barrier_opt(const Dictionary& D, const MatrixXd& C, double tol) {
    const int n = D.n();
    BarrierResult out;
    out.X = MatrixXd::Zero(n, n);
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
            if (C(u, v) > 0.0) edges.emplace_back(u, v);
    const int E = static_cast<int>(edges.size());
    if (E == 0) return out;
    if (E > 2000) throw Error(ErrorKind::DenseCapExceeded, "barrier reference solver is for small instances");
    // A_e = b_e b_e^T
    MatrixXd B(n, E);
    for (int e = 0; e < E; ++e) B.col(e) = std::sqrt(D.scale) * (D.P.col(edges[e].first) - D.P.col(edges[e].second));
    const double lam = lambda_max(D.apply(C));
    VectorXd x = VectorXd::Constant(E, 0.5 / lam);
    const double nu = n + E;
    const MatrixXd I = MatrixXd::Identity(n, n);

    auto barrier = [&](const VectorXd& y, double t, double& val) -> bool {
        if ((y.array() <= 0.0).any()) return false;
        const MatrixXd S = I - B * y.asDiagonal() * B.transpose();
        Eigen::LLT<MatrixXd> llt(S);
        if (llt.info() != Eigen::Success) return false;
        const VectorXd dg = llt.matrixLLT().diagonal();
        if ((dg.array() <= 0.0).any()) return false;
        val = -t * y.sum() - 2.0 * dg.array().log().sum() - y.array().log().sum();
        return std::isfinite(val);
    };

    double t = nu / x.sum();
    for (int outer = 0; outer < 200; ++outer) {
        for (int it = 0; it < 200; ++it) {
            const MatrixXd S = I - B * x.asDiagonal() * B.transpose();
            Eigen::LLT<MatrixXd> llt(S);
            const MatrixXd SinvB = llt.solve(B);
            const MatrixXd K = B.transpose() * SinvB;
            const VectorXd qd = K.diagonal();
            const VectorXd grad = (-t + qd.array() - x.array().inverse()).matrix();
            MatrixXd H = K.cwiseProduct(K);
            H.diagonal() += x.array().square().inverse().matrix();
            const VectorXd dx = -H.ldlt().solve(grad);
            const double dec = -grad.dot(dx);
            if (dec < 1e-12) break;
            double f0 = 0.0;
            barrier(x, t, f0);
            double a = 1.0, f1 = 0.0;
            while (a > 1e-12 && (!barrier(x + a * dx, t, f1) || f1 > f0 - 0.25 * a * dec)) a *= 0.5;
            if (a <= 1e-12) break;
            x += a * dx;
        }
        if (nu / t <= tol * x.sum()) break;
        t *= 8.0;
    }
    out.value = x.sum();
    out.gap = nu / t;
    for (int e = 0; e < E; ++e) out.X(edges[e].first, edges[e].second) = out.X(edges[e].second, edges[e].first) = x(e);
    return out;
}

}  // namespace forster::packing
