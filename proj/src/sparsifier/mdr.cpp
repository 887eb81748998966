#include "forster/error.hpp"
#include "forster/sparsifier.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace forster::sparsifier {

namespace {

MatrixXd gram_distances(const MatrixXd& Q) {
    const MatrixXd G = Q.transpose() * Q;
    const VectorXd d = G.diagonal();
    MatrixXd F = -2.0 * G;
    F.colwise() += d;
    F.rowwise() += d.transpose();
    F.diagonal().setZero();
    return F.cwiseMax(0.0);
}

// sum of F over active pairs: both ends in the support, in different pieces
double masked_sum(const soc::AsocRep& mask, const MatrixXd& F) {
    double all = 0.0, within = 0.0;
    std::vector<int> sup;
    for (const auto& piece : mask.pieces.pieces) {
        for (std::size_t i = 0; i < piece.size(); ++i)
            for (std::size_t j = i + 1; j < piece.size(); ++j) within += F(piece[i], piece[j]);
        sup.insert(sup.end(), piece.begin(), piece.end());
    }
    for (std::size_t i = 0; i < sup.size(); ++i)
        for (std::size_t j = i + 1; j < sup.size(); ++j) all += F(sup[i], sup[j]);
    return all - within;
}

}  // namespace

MdrResult oracle_mdr(const MatrixXd& P, double rho, double lower, double upper, const MdrOptions& opt, Rng& rng,
                     bool keep_trace) {
    const int n = static_cast<int>(P.rows());
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two vertices");
    if (!(opt.eta > 0.0 && opt.eta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "eta must be in (0, 1]");
    const packing::Dictionary D{P, 1.0};
    MdrResult res;
    MatrixXd S = MatrixXd::Zero(n, n);
    MatrixXd Xsum = MatrixXd::Zero(n, n);
    double norm_sum = 0.0;
    const Rng base = rng.split(rng.engine()());
    const double round_delta = opt.delta / (3.0 * opt.max_rounds);

    for (int t = 0; t < opt.max_rounds; ++t) {
        const MmwDense mm = mmw_dense(S);
        if (t > 0 && mm.lam_min > 0.0) {
            res.factor = opt.eta * t / mm.lam_min;
            if (res.factor <= opt.target_factor) break;
        }
        Rng rt = base.split(static_cast<std::uint64_t>(t));

        // embedding of g_e = <P Y P, L_e> and the truncation scale
        MatrixXd Q;
        double tr_pyp = 0.0;
        if (opt.mode == AccessMode::DenseReference) {
            Q = mm.half * P;
            tr_pyp = (P * mm.Y).cwiseProduct(P).sum();
        } else {
            TraceOptions to = opt.trace;
            to.on_pi = true;
            const double R = opt.eta * norm_sum;
            Q = mmw_embed(P, S, R, round_delta, rt, to);
            tr_pyp = trace_pyp_estimate(P, S, R, round_delta, rt, to) / 0.9;
        }
        const int k = static_cast<int>(Q.rows());
        double gamma = n * tr_pyp;
        double span2 = 0.0;
        for (int j = 0; j < k; ++j) span2 = std::max(span2, std::pow(Q.row(j).maxCoeff() - Q.row(j).minCoeff(), 2));
        gamma = std::max(gamma, span2);
        const double alpha = truncation_guard(n, k, std::max(rho, 1.0));
        const gridhash::AsocLadder ladder =
            gridhash::asoc_ladder(n, k, opt.beta, gamma, alpha, round_delta, rt.split(0), opt.asoc);
        res.ladder_size = ladder.m();
        const MatrixXd F = gram_distances(Q);

        // score a pool of ladder terms, pack the best few, keep the best gain
        struct Cand {
            double score;
            gridhash::AsocTerm term;
        };
        std::vector<Cand> pool;
        Rng pick = rt.split(1);
        const long long per_scale = ladder.trials;
        const long long scales = static_cast<long long>(ladder.rho.size());
        // scales are drawn log-uniformly; terms with no active pair are redrawn
        for (int tries = 0; static_cast<int>(pool.size()) < opt.pool && tries < 20 * opt.pool && ladder.m() > 0;
             ++tries) {
            const long long coord = static_cast<long long>(pick.below(static_cast<std::uint64_t>(k)));
            const long long a = static_cast<long long>(pick.below(static_cast<std::uint64_t>(scales)));
            const long long tr = static_cast<long long>(pick.below(static_cast<std::uint64_t>(per_scale)));
            gridhash::AsocTerm term = ladder.term(Q, (coord * scales + a) * per_scale + tr);
            const double sc = term.weight * masked_sum(term.mask, F);
            if (sc > 0.0) pool.push_back({sc, std::move(term)});
        }
        std::stable_sort(pool.begin(), pool.end(), [](const Cand& x, const Cand& y) { return x.score > y.score; });

        MatrixXd best = MatrixXd::Zero(n, n);
        double best_gain = 0.0, best_lam = 0.0;
        std::vector<MatrixXd> masks;
        const int solves = std::min<int>(opt.solves_per_round, static_cast<int>(pool.size()));
        for (int i = 0; i < solves; ++i) masks.push_back(packing::mask_from_asoc(pool[i].term.mask));
        if (masks.empty() || opt.full_candidate) masks.push_back(packing::full_mask(n));
        for (std::size_t i = 0; i < masks.size(); ++i) {
            Rng pr = rt.split(100 + i);
            packing::PackingResult pk;
            try {
                pk = packing::packing_optimize(D, masks[i], lower, upper, opt.packing, pr);
            } catch (const Error& e) {
                throw Error(ErrorKind::OracleFailure, std::string("packing oracle: ") + e.what());
            }
            ++res.packing_calls;
            res.q_run_max = std::max(res.q_run_max, pk.q_run);
            const double gain = packing::mask_value(pk.X, F);
            if (gain > best_gain) {
                best_gain = gain;
                best = pk.X;
                best_lam = pk.lambda_max;
            }
        }
        const MatrixXd G = D.apply(best);
        res.gains.push_back(G.cwiseProduct(mm.Y).sum());
        res.gain_norms.push_back(best_lam);
        if (keep_trace) {
            res.Ys.push_back(mm.Y);
            res.Gs.push_back(G);
        }
        S += opt.eta * G;
        norm_sum += best_lam;
        Xsum += best;
        res.rounds = t + 1;
    }
    if (res.rounds == 0) throw Error(ErrorKind::InvalidArgument, "max_rounds must be positive");
    res.xbar = Xsum / res.rounds;
    const MmwDense fin = mmw_dense(D.apply(res.xbar));
    res.factor = fin.lam_min > 0.0 ? 1.0 / fin.lam_min : std::numeric_limits<double>::infinity();
    res.top = fin.lam_max;
    return res;
}

}  // namespace forster::sparsifier
