#include "forster/error.hpp"
#include "forster/sparsifier.hpp"

#include <algorithm>
#include <cmath>

namespace forster::sparsifier {

namespace {

struct Scaled {
    soc::SparseLaplacian L;
    double factor = 0.0;
};

// Sample L(xbar), then scale so that L_q <= out <= factor L_q given
// L_q^+ <= P^2 <= kappa_p L_q^+.
Scaled sample_and_scale(const MatrixXd& xbar, const MatrixXd& P, double kappa_p, long long samples,
                        long long nnz_budget, Rng& rng) {
    const int n = static_cast<int>(P.rows());
    for (int attempt = 0; attempt < 5; ++attempt) {
        soc::SparseLaplacian Lt = resistance_sample(xbar, samples, rng);
        if (static_cast<long long>(Lt.nnz()) <= nnz_budget) {
            const MmwDense e = mmw_dense(P * Lt.dense() * P);
            if (e.lam_min > 1e-12 * std::max(e.lam_max, 1e-300)) {
                Scaled s;
                Lt.scale(kappa_p / e.lam_min);
                s.L = std::move(Lt);
                s.factor = kappa_p * e.lam_max / e.lam_min;
                return s;
            }
        }
        samples *= 2;
        (void)n;
    }
    throw Error(ErrorKind::PhaseFailure, "resistance sampling did not give a connected graph within the nnz budget");
}

}  // namespace

nlohmann::json SparsifyResult::report() const {
    nlohmann::json j;
    j["n"] = L.n;
    j["F_total"] = f_total;
    j["delta"] = delta_shift;
    j["trace_estimate"] = trace;
    j["queries"] = queries;
    j["nnz"] = nnz;
    j["phases"] = nlohmann::json::array();
    for (const auto& p : phases) {
        j["phases"].push_back({{"q", p.q},
                               {"shift", p.shift},
                               {"rounds", p.rounds},
                               {"mdr_factor", p.mdr_factor},
                               {"q_run", p.q_run},
                               {"output_factor", p.output_factor},
                               {"queries", p.queries},
                               {"cg_iterations", p.cg_iterations},
                               {"nodes", p.nodes}});
    }
    return j;
}

SparsifyResult sparsify_implicit(const ImplicitLaplacianOracle& Lin, double Delta, const HomotopyOptions& opt,
                                 Rng& rng) {
    const int n = Lin.n();
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two vertices");
    if (!(opt.phase_ratio > 1.0)) throw Error(ErrorKind::InvalidArgument, "phase ratio must exceed 1");
    // local counter so the budget covers this call only
    ImplicitLaplacianOracle L(n, [&Lin](const MatrixXd& V) -> MatrixXd { return Lin.apply(V); }, Lin.trace_hint());
    L.set_budget(opt.query_budget);

    SparsifyResult out;
    out.delta_shift = Delta;
    Rng tr_rng = rng.split(rng.engine()());
    const double tr = estimate_trace(L, opt.delta / 4.0, tr_rng, opt.mdr.trace.c_probe);
    out.trace = tr;
    if (!(Delta > 0.0) || !(Delta < tr)) throw Error(ErrorKind::InvalidArgument, "need 0 < Delta < Tr(L)");

    const int p = static_cast<int>(std::ceil(std::log(tr / Delta) / std::log(opt.phase_ratio))) + 1;
    const long long nnz_budget = opt.nnz_budget > 0 ? opt.nnz_budget : static_cast<long long>(n) * (n - 1) / 2;
    const long long samples = std::max<long long>(
        n, static_cast<long long>(std::ceil(opt.sample_c * n * std::log(static_cast<double>(n)))));
    const Rng base = rng.split(rng.engine()());

    MatrixXd B;  // preconditioner: previous output, dense
    int first = 1;
    if (opt.warm) {
        if (opt.warm->n != n) throw Error(ErrorKind::InvalidArgument, "warm start has the wrong dimension");
        B = opt.warm->dense();
        first = p;
    }
    for (int q = first; q <= p; ++q) {
        const double mu = Delta * std::pow(opt.phase_ratio, p - q);
        Rng rq = base.split(static_cast<std::uint64_t>(q));
        PhaseReport rep;
        rep.q = q;
        rep.shift = mu;
        const long long q0 = L.queries();
        MatrixXd P;
        double kappa_p;
        try {
            if (q == 1 && !opt.warm) {
                // L_1 lies between mu Pi and 2 mu Pi
                P = MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / n);
                P /= std::sqrt(mu);
                kappa_p = 2.0;
            } else {
                InvSqrtOperator op(L, mu, B, mu, tr + mu, opt.inv);
                P = op.materialize();
                rep.cg_iterations = op.max_iterations();
                rep.nodes = op.nodes();
                kappa_p = (1.0 + opt.inv.margin) * (1.0 + opt.inv.margin);
            }
            const double wmax = 0.5 * tr + mu / n, wmin = mu / n;
            const double rho = wmax / wmin;
            const double lower = 0.5 * wmin;
            const double upper = std::pow(static_cast<double>(n), 4) / 4.0 * wmax;
            const MdrResult mdr = oracle_mdr(P, rho, lower, upper, opt.mdr, rq);
            rep.rounds = mdr.rounds;
            rep.mdr_factor = mdr.factor;
            rep.q_run = mdr.q_run_max;
            Rng sr = rq.split(7);
            Scaled sc = sample_and_scale(mdr.xbar, P, kappa_p, samples, nnz_budget, sr);
            rep.output_factor = sc.factor;
            out.L = std::move(sc.L);
            out.f_total = sc.factor;
        } catch (const Error& e) {
            throw Error(ErrorKind::PhaseFailure, "phase " + std::to_string(q) + ": " + e.what());
        }
        rep.queries = L.queries() - q0;
        out.phases.push_back(rep);
        if (q < p) B = out.L.dense();
    }
    out.queries = L.queries();
    out.nnz = static_cast<long long>(out.L.nnz());
    return out;
}

}  // namespace forster::sparsifier
