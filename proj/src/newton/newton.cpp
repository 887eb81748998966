#include "forster/error.hpp"
#include "forster/newton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace forster::newton {

double termination_threshold(double eps, const VectorXd& c) {
    const double cm = c.minCoeff();
    return eps * eps * cm * cm / 2.0;
}

std::string to_string(Backend b) { return b == Backend::Dense ? "dense" : "implicit"; }

Backend backend_from_string(const std::string& s) {
    if (s == "dense") return Backend::Dense;
    if (s == "implicit") return Backend::Implicit;
    throw Error(ErrorKind::InvalidArgument, "unknown backend '" + s + "'");
}

StepResult newton_step(const MatrixXd& A, const barthe::RegularizedObjective& F, const VectorXd& t, double log_kappa,
                       const MatrixXd& Lt, double alpha, const BoxQpOptions& qp) {
    const barthe::ScalingState s(A, t);
    StepResult r;
    r.f_before = F.value(s);
    const VectorXd g = F.grad(s);
    const BoxQpResult step = box_qp_solve(8.0 * Lt, g, BoxConstraint::step_box(t, log_kappa), qp);
    r.v = step.v;
    r.q = step.value;
    r.gap_estimate = 240.0 * alpha * log_kappa * std::max(-step.value, 0.0);
    if (step.v.isZero(0.0)) {
        r.t = t;
        r.f_after = r.f_before;
        return r;
    }
    r.t = barthe::center_extremes(t + step.v);
    r.f_after = F.value(barthe::ScalingState(A, r.t));
    return r;
}

nlohmann::json SolveReport::to_json() const {
    nlohmann::json j;
    j["iterations"] = iterations;
    j["backend"] = to_string(backend);
    j["epsilon_achieved"] = epsilon_achieved;
    // kappa itself overflows quickly, so the log is reported next to it
    const double kappa = std::exp(log_kappa);
    j["kappa"] = std::isfinite(kappa) ? nlohmann::json(kappa) : nlohmann::json(nullptr);
    j["log_kappa"] = log_kappa;
    j["objective_trace"] = objective_trace;
    j["gap_estimate"] = gap_estimate;
    j["gap_bound"] = gap_bound;
    j["alpha"] = alpha;
    if (backend == Backend::Implicit) {
        j["sparsifications"] = sparsifications;
        j["queries"] = queries;
        j["delta"] = delta;
    }
    return j;
}

namespace {

MatrixXd centering(Eigen::Index n) {
    return MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
}

// half the spread of a - b, the l_inf distance once shifts along 1 are free
double shift_free_distance(const VectorXd& a, const VectorXd& b) {
    const VectorXd d = a - b;
    return 0.5 * (d.maxCoeff() - d.minCoeff());
}

// Sparsified Hessian, reused while the iterate stays close.
class ImplicitHessian {
public:
    ImplicitHessian(const MatrixXd& A, const NewtonOptions& opt, Rng& rng) : A_(A), opt_(opt), rng_(rng) {}

    // L with H(t) <= L, plus the factor alpha against H(t) + 2 lambda Pi
    MatrixXd at(const VectorXd& t, double lambda, double& alpha, SolveReport& rep) {
        const double r = built_ ? shift_free_distance(t, t_built_) : 0.0;
        if (!built_ || r > opt_.resparsify_radius) {
            build(t, lambda, rep);
            return current(0.0, lambda, alpha);
        }
        return current(r, lambda, alpha);
    }

    void inflate() { boost_ *= 2.0; }

private:
    void build(const VectorXd& t, double lambda, SolveReport& rep) {
        const barthe::ScalingState s(A_, t);
        const Eigen::Index n = s.n();
        const VectorXd& tau = s.tau();
        const double trace = tau.sum() - tau.squaredNorm();
        sparsifier::ImplicitLaplacianOracle H(
            static_cast<int>(n),
            [&s](const MatrixXd& V) {
                MatrixXd out(V.rows(), V.cols());
                for (Eigen::Index j = 0; j < V.cols(); ++j) out.col(j) = barthe::hessian_matvec(s, V.col(j));
                return out;
            },
            trace);
        const double Delta = std::max(2.0 * lambda, opt_.delta_rel * trace / static_cast<double>(n));
        sparsifier::HomotopyOptions ho = opt_.sparsify;
        ho.delta = opt_.delta;
        ho.phase_ratio = opt_.phase_ratio;
        if (built_) {
            // single phase preconditioned by the previous output, moved by at most e^{2r}
            ho.warm = L_;
        }
        Rng child = rng_.split(rng_.engine()());
        sparsifier::SparsifyResult res = sparsifier::sparsify_implicit(H, Delta, ho, child);
        L_ = std::move(res.L);
        dense_ = L_.dense();
        f_ = res.f_total;
        delta_ = Delta;
        t_built_ = t;
        built_ = true;
        boost_ = 1.0;
        ++rep.sparsifications;
        rep.queries += res.queries;
        rep.delta = Delta;
    }

    MatrixXd current(double r, double lambda, double& alpha) const {
        const double grow = std::exp(2.0 * r) * boost_;
        const Eigen::Index n = dense_.rows();
        // H(t) <= e^{2r} H(t_built) <= e^{2r} L, and the regularizer is added exactly
        alpha = grow * std::exp(2.0 * r) * f_ * std::max(1.0, delta_ / (2.0 * lambda));
        return grow * dense_ + 2.0 * lambda * centering(n);
    }

    const MatrixXd& A_;
    const NewtonOptions& opt_;
    Rng& rng_;
    bool built_ = false;
    soc::SparseLaplacian L_;
    MatrixXd dense_;
    VectorXd t_built_;
    double f_ = 1.0;
    double delta_ = 0.0;
    double boost_ = 1.0;
};

}  // namespace

SolveResult minimize_barthe(const linalg::Dataset& data, double eps, const NewtonOptions& opt, Rng& rng) {
    data.validate();
    if (!(eps > 0.0 && eps < 1.0)) throw Error(ErrorKind::InvalidArgument, "eps must be in (0, 1)");
    const MatrixXd& A = data.A;
    const VectorXd& c = data.c;
    const Eigen::Index n = data.n(), d = data.d();
    const double logn = std::log(std::max<double>(static_cast<double>(n), 2.0));
    const bool auto_kappa = !opt.log_kappa.has_value();
    double log_kappa = auto_kappa ? 4.0 * logn : *opt.log_kappa;
    if (!(log_kappa > 0.0)) throw Error(ErrorKind::InvalidArgument, "log kappa must be positive");
    const double cap = opt.log_kappa_cap_c * static_cast<double>(d) * logn;

    SolveResult out;
    SolveReport& rep = out.report;
    rep.backend = opt.backend;
    barthe::RegularizedObjective F = barthe::RegularizedObjective::make(c, eps, log_kappa);
    rep.gap_bound = static_cast<double>(d) * log_kappa * log_kappa / 2.0;
    VectorXd t = VectorXd::Zero(n);
    ImplicitHessian implicit(A, opt, rng);
    const MatrixXd Pi = centering(n);

    auto escalate = [&](const std::string& why) {
        if (!auto_kappa) throw Error(ErrorKind::NotConverged, why + " at the fixed kappa");
        log_kappa *= 2.0;
        if (log_kappa > cap)
            throw Error(ErrorKind::Infeasible, why + "; log kappa would exceed the cap " + std::to_string(cap) +
                                                   ", so c is likely outside the basis polytope");
        F = barthe::RegularizedObjective::make(c, eps, log_kappa);
        rep.gap_bound = static_cast<double>(d) * log_kappa * log_kappa / 2.0;
    };

    for (int it = 0;; ++it) {
        try {
            const barthe::ScalingState state(A, t);
            const MatrixXd R = state.R();
            const linalg::SpectralCertificate cert = linalg::verify_rip(A, c, R, eps);
            rep.epsilon_achieved = cert.epsilon_achieved;
            const double fval = F.value(state);
            rep.objective_trace.push_back(fval);
            rep.log_kappa_trace.push_back(log_kappa);
            if (opt.keep_iterates) rep.iterates.push_back(t);
            if (cert.pass) {
                out.t = t;
                out.R = R;
                rep.iterations = it;
                rep.log_kappa = log_kappa;
                return out;
            }
            if (it >= opt.max_iter)
                throw Error(ErrorKind::NotConverged, "Newton budget of " + std::to_string(opt.max_iter) +
                                                         " steps exhausted at epsilon " +
                                                         std::to_string(cert.epsilon_achieved));

            double alpha = 1.0;
            StepResult step;
            if (opt.backend == Backend::Dense) {
                const MatrixXd Lt = barthe::hessian_dense(state) + 2.0 * F.lambda * Pi;
                step = newton_step(A, F, t, log_kappa, Lt, 1.0, opt.qp);
            } else {
                for (int tries = 0;; ++tries) {
                    const MatrixXd Lt = implicit.at(t, F.lambda, alpha, rep);
                    step = newton_step(A, F, t, log_kappa, Lt, alpha, opt.qp);
                    if (step.f_after <= step.f_before) break;
                    // the sparsifier missed its guarantee; back off
                    if (tries >= 20)
                        throw Error(ErrorKind::NotConverged, "no decrease with an inflated preconditioner");
                    implicit.inflate();
                }
            }
            rep.alpha = std::max(rep.alpha, alpha);
            rep.gap_estimate = step.gap_estimate;
            rep.gap_bound *= 1.0 - 1.0 / (240.0 * alpha * log_kappa);

            const double tol = 1e-15 * std::max(1.0, std::abs(step.f_before));
            if (step.f_after > step.f_before + tol)
                throw Error(ErrorKind::NotConverged, "objective increased on a dense Newton step");
            const bool stalled = !(step.q < -tol);
            const bool at_boundary = step.t.cwiseAbs().maxCoeff() >= log_kappa * (1.0 - 1e-9);
            t = step.t;
            if (at_boundary && auto_kappa) {
                escalate("iterate reached the kappa box");
            } else if (stalled) {
                // box minimum of F reached but the check still fails
                if (at_boundary) escalate("iterate stuck on the kappa box");
                else throw Error(ErrorKind::NotConverged,
                                 "Newton step made no progress at epsilon " + std::to_string(cert.epsilon_achieved));
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::IllConditioned && e.kind() != ErrorKind::RankDeficient) throw;
            // numerically on the boundary: the scaled gram lost rank
            escalate(std::string("scaled gram is ill-conditioned (") + e.what() + ")");
            t = VectorXd::Zero(n);
        }
    }
}

}  // namespace forster::newton
