#include "forster/smoothed.hpp"

#include "forster/barthe.hpp"
#include "forster/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace forster::smoothed {

MatrixXd random_unit_rows(int n, int d, Rng& rng) {
    if (n <= 0 || d <= 0) throw Error(ErrorKind::InvalidArgument, "need positive n and d");
    MatrixXd A(n, d);
    for (int i = 0; i < n; ++i) {
        do {
            for (int j = 0; j < d; ++j) A(i, j) = rng.normal();
        } while (A.row(i).norm() == 0.0);
        A.row(i).normalize();
    }
    return A;
}

MatrixXd subspace_unit_rows(int n, int d, int k, Rng& rng) {
    if (k <= 0 || k > d) throw Error(ErrorKind::InvalidArgument, "subspace dimension out of range");
    MatrixXd G(d, k);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) G(i, j) = rng.normal();
    const MatrixXd Q = Eigen::HouseholderQR<MatrixXd>(G).householderQ() * MatrixXd::Identity(d, k);
    MatrixXd A = random_unit_rows(n, k, rng) * Q.transpose();
    for (int i = 0; i < n; ++i) A.row(i).normalize();
    return A;
}

MatrixXd tight_unit_rows(int n, int d, int k, Rng& rng) {
    if (k <= 0 || k >= d) throw Error(ErrorKind::InvalidArgument, "subspace dimension out of range");
    if ((static_cast<long long>(n) * k) % d != 0) throw Error(ErrorKind::InvalidArgument, "n k / d must be an integer");
    const int m = static_cast<int>(static_cast<long long>(n) * k / d);
    MatrixXd A(n, d);
    A.topRows(m) = subspace_unit_rows(m, d, k, rng);
    A.bottomRows(n - m) = random_unit_rows(n - m, d, rng);
    return A;
}

SmoothedInstance generate_smoothed(const MatrixXd& base, double sigma, Rng& rng, NormGuard guard, int max_resamples) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorKind::InvalidArgument, "sigma must be >= 0");
    for (Eigen::Index i = 0; i < base.rows(); ++i)
        if (std::abs(base.row(i).norm() - 1.0) > 1e-9)
            throw Error(ErrorKind::InvalidArgument, "base row " + std::to_string(i) + " is not unit norm");
    SmoothedInstance s;
    s.base = base;
    s.sigma = sigma;
    for (int attempt = 0;; ++attempt) {
        Rng g = rng.split(rng.engine()());
        s.seed = g.key();
        s.A = base;
        if (sigma > 0.0)
            for (Eigen::Index i = 0; i < base.rows(); ++i)
                for (Eigen::Index j = 0; j < base.cols(); ++j) s.A(i, j) += sigma * g.normal();
        const VectorXd sq = s.A.rowwise().squaredNorm();
        s.mu = sq.minCoeff();
        s.M = sq.maxCoeff();
        s.guard_ok = s.mu >= 1.0 / 6.0 && s.M <= 2.0;
        if (guard != NormGuard::Resample || s.guard_ok || attempt >= max_resamples) break;
        ++s.resamples;
    }
    return s;
}

double diameter_bound(double mu, double M, double eta, double Delta, double c_min, int d) {
    if (!(mu > 0.0 && M > 0.0 && Delta > 0.0 && c_min > 0.0) || d < 1)
        throw Error(ErrorKind::InvalidArgument, "diameter bound needs positive arguments");
    if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "eta must be in (0, 1]");
    return 0.5 * (std::log(M / (mu * c_min)) + (d - 1) * std::log(4.0 * M / (eta * Delta * Delta)));
}

nlohmann::json DeepnessReport::to_json() const {
    nlohmann::json j;
    j["eta"] = eta;
    j["Delta"] = Delta;
    j["m"] = m;
    j["worst_margin"] = worst_margin;
    j["subsets_checked"] = subsets_checked;
    j["candidates"] = candidates;
    j["witnesses"] = nlohmann::json::array();
    for (const auto& w : witnesses)
        j["witnesses"].push_back({{"k", w.k}, {"rows", w.rows}, {"sigma_k1", w.sigma_k1}, {"mass", w.mass}});
    j["verdict"] = verdict();
    return j;
}

namespace {

MatrixXd gather(const MatrixXd& A, const std::vector<int>& rows) {
    MatrixXd S(static_cast<Eigen::Index>(rows.size()), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) S.row(static_cast<Eigen::Index>(i)) = A.row(rows[i]);
    return S;
}

// top-k right singular vectors as columns
MatrixXd top_space(const MatrixXd& S, int k) {
    Eigen::JacobiSVD<MatrixXd> svd(S, Eigen::ComputeFullV);
    return svd.matrixV().leftCols(k);
}

std::vector<int> sample_rows(int n, int m, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m; ++i) std::swap(idx[i], idx[i + rng.below(static_cast<std::uint64_t>(n - i))]);
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

double subspace_mass(const MatrixXd& A, const VectorXd& c, const std::vector<int>& rows, int k, double Delta) {
    const MatrixXd V = top_space(gather(A, rows), k);
    double mass = 0.0;
    const double slack = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        const VectorXd a = A.row(i).transpose();
        const double dist = (a - V * (V.transpose() * a)).norm();
        if (dist <= Delta + slack) mass += c(i);
    }
    return mass;
}

DeepnessReport deepness_witness_check(const MatrixXd& A, double eta, double Delta, int samples, Rng& rng) {
    const int n = static_cast<int>(A.rows()), d = static_cast<int>(A.cols());
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorKind::InvalidArgument, "eta must be in (0, 1)");
    if (!(Delta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "Delta must be >= 0");
    if (samples < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
    const VectorXd c = VectorXd::Constant(n, static_cast<double>(d) / n);
    DeepnessReport rep;
    rep.eta = eta;
    rep.Delta = Delta;
    const Rng base = rng.split(rng.engine()());
    for (int k = 1; k < d; ++k) {
        // smallest count whose weight exceeds (1 - eta) k
        const int m = std::min(n, static_cast<int>(std::floor((1.0 - eta) * k * n / d)) + 1);
        rep.m.push_back(m);
        double worst = std::numeric_limits<double>::infinity();
        Rng rk = base.split(static_cast<std::uint64_t>(k));
        const double tol = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff());
        for (int s = 0; s < samples; ++s) {
            std::vector<int> rows;
            if (s % 2 == 0 || k > n) {
                rows = sample_rows(n, m, rk);
            } else {
                // rows nearest to the span of k sampled rows
                const std::vector<int> seed = sample_rows(n, k, rk);
                const MatrixXd V = top_space(gather(A, seed), k);
                std::vector<std::pair<double, int>> dist;
                for (int i = 0; i < n; ++i) {
                    const VectorXd a = A.row(i).transpose();
                    dist.emplace_back((a - V * (V.transpose() * a)).norm(), i);
                }
                std::stable_sort(dist.begin(), dist.end());
                for (int i = 0; i < m; ++i) rows.push_back(dist[static_cast<std::size_t>(i)].second);
                std::sort(rows.begin(), rows.end());
            }
            ++rep.subsets_checked;
            const MatrixXd S = gather(A, rows);
            Eigen::JacobiSVD<MatrixXd> svd(S);
            const VectorXd sv = svd.singularValues();
            const double sk1 = k < sv.size() ? sv(k) : 0.0;
            const double margin = sk1 - std::sqrt(static_cast<double>(m)) * Delta;
            worst = std::min(worst, margin);
            if (margin > tol) continue;
            ++rep.candidates;
            const double mass = subspace_mass(A, c, rows, k, Delta);
            if (mass > (1.0 - eta) * k + 1e-12) rep.witnesses.push_back({k, rows, sk1, mass});
        }
        rep.worst_margin.push_back(worst);
    }
    return rep;
}

namespace {

// full Newton on the unregularized objective, the all-ones direction pinned
int polish(const MatrixXd& A, const VectorXd& c, VectorXd& t, const ConditioningOptions& opt, double& gnorm) {
    const Eigen::Index n = t.size();
    const MatrixXd J = MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    int steps = 0;
    for (; steps < opt.polish_max; ++steps) {
        const barthe::ScalingState s(A, t);
        const VectorXd g = barthe::gradient(c, s);
        gnorm = g.cwiseAbs().maxCoeff();
        if (gnorm <= opt.polish_tol) break;
        const MatrixXd H = barthe::hessian_dense(s);
        const VectorXd dir = (H + J).ldlt().solve(-g);
        const double f0 = barthe::objective(c, s);
        double step = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
            const VectorXd tn = barthe::center_extremes(t + step * dir);
            const double f1 = barthe::objective(c, barthe::ScalingState(A, tn));
            if (f1 <= f0 + 1e-4 * step * g.dot(dir)) {
                t = tn;
                moved = true;
                break;
            }
        }
        if (!moved) break;  // at rounding level
    }
    return steps;
}

}  // namespace

Conditioning measure_conditioning(const MatrixXd& A, const VectorXd& c, const ConditioningOptions& opt, Rng& rng) {
    linalg::Dataset data{A, c};
    const newton::SolveResult res = newton::minimize_barthe(data, opt.eps, opt.newton, rng);
    Conditioning out;
    out.iterations = res.report.iterations;
    out.t = res.t;
    out.polish_steps = polish(A, c, out.t, opt, out.grad_norm);
    out.t = barthe::center_extremes(out.t);
    out.t_inf = out.t.cwiseAbs().maxCoeff();
    out.t_inf_mean = (out.t.array() - out.t.mean()).abs().maxCoeff();
    const barthe::ScalingState s(A, out.t);
    out.epsilon_achieved = linalg::verify_rip(A, c, s.R(), opt.eps).epsilon_achieved;
    return out;
}

GuardResult nonuniform_guard(const VectorXd& c, int n, int d, double c_const) {
    if (!(c_const > 0.0) || n <= 0 || d <= 0) throw Error(ErrorKind::InvalidArgument, "bad guard parameters");
    if (c.size() != n) throw Error(ErrorKind::InvalidArgument, "marginals have the wrong length");
    GuardResult r;
    r.bound = c_const * static_cast<double>(d) / n;
    for (Eigen::Index i = 0; i < c.size(); ++i)
        if (c(i) > r.bound * (1.0 + 1e-12)) {
            throw Error(ErrorKind::MarginalTooLarge, "c[" + std::to_string(i) + "] = " + std::to_string(c(i)) +
                                                         " exceeds " + std::to_string(r.bound));
        }
    return r;
}

BenchSpec BenchSpec::from_json(const nlohmann::json& j) {
    BenchSpec s;
    try {
        if (j.contains("d")) s.d = j.at("d").get<std::vector<int>>();
        if (j.contains("sigma")) s.sigma = j.at("sigma").get<std::vector<double>>();
        if (j.contains("seeds")) s.seeds = j.at("seeds").get<int>();
        if (j.contains("n_factor")) s.n_factor = j.at("n_factor").get<int>();
        if (j.contains("n")) s.n = j.at("n").get<std::vector<int>>();
        if (j.contains("epsilon")) s.eps = j.at("epsilon").get<double>();
        if (j.contains("base")) s.base = j.at("base").get<std::string>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("experiment spec: ") + e.what());
    }
    if (s.d.empty() || s.sigma.empty() || s.seeds < 1) throw Error(ErrorKind::InvalidArgument, "empty experiment grid");
    if (!s.n.empty() && s.n.size() != s.d.size())
        throw Error(ErrorKind::InvalidArgument, "explicit n must pair with d");
    for (double sg : s.sigma)
        if (!(sg > 0.0 && sg < 1.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be in (0, 1)");
    if (s.base != "unit" && s.base != "subspace" && s.base != "tight")
        throw Error(ErrorKind::InvalidArgument, "base must be unit, subspace or tight");
    if (s.base == "tight")
        for (std::size_t i = 0; i < s.d.size(); ++i) {
            const int n = s.n.empty() ? s.n_factor * s.d[i] : s.n[i];
            if (s.d[i] < 2 || (static_cast<long long>(n) * (s.d[i] / 2)) % s.d[i] != 0)
                throw Error(ErrorKind::InvalidArgument, "tight base needs d >= 2 and d | n floor(d/2)");
        }
    return s;
}

BenchFit fit_conditioning(const std::vector<BenchRow>& rows) {
    BenchFit f;
    f.runs = static_cast<int>(rows.size());
    if (rows.empty()) return f;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<std::pair<double, double>> cells;  // (x, t_inf) grouped below
    for (const auto& r : rows) {
        if (!std::isfinite(r.t_inf)) f.all_finite = false;
        const double x = r.d * std::log(1.0 / r.sigma);
        f.c_fit = std::max(f.c_fit, r.t_inf / x);
        sx += x;
        sy += r.t_inf;
        sxx += x * x;
        sxy += x * r.t_inf;
    }
    const double N = static_cast<double>(rows.size());
    const double den = N * sxx - sx * sx;
    if (den > 0.0) {
        f.slope = (N * sxy - sx * sy) / den;
        f.intercept = (sy - f.slope * sx) / N;
    }
    // cell means on log-log axes
    std::vector<std::pair<double, double>> means;
    std::vector<BenchRow> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [](const BenchRow& a, const BenchRow& b) {
        return std::make_pair(a.d, a.sigma) < std::make_pair(b.d, b.sigma);
    });
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < sorted.size() && sorted[j].d == sorted[i].d && sorted[j].sigma == sorted[i].sigma)
            sum += sorted[j++].t_inf;
        const double mean = sum / static_cast<double>(j - i);
        if (mean > 0.0) means.emplace_back(std::log(sorted[i].d * std::log(1.0 / sorted[i].sigma)), std::log(mean));
        i = j;
    }
    if (means.size() >= 2) {
        double a = 0, b = 0, aa = 0, ab = 0;
        for (const auto& [x, y] : means) {
            a += x;
            b += y;
            aa += x * x;
            ab += x * y;
        }
        const double M = static_cast<double>(means.size());
        const double dd = M * aa - a * a;
        if (dd > 0.0) f.loglog_slope = (M * ab - a * b) / dd;
    }
    return f;
}

void BenchResult::write_csv(std::ostream& out) const {
    out << "n,d,sigma,seed,t_inf,iterations,epsilon_achieved\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%d,%.17g,%d,%.17g\n", r.n, r.d, r.sigma, r.seed, r.t_inf,
                      r.iterations, r.epsilon_achieved);
        out << buf;
    }
}

nlohmann::json BenchResult::summary() const {
    nlohmann::json j;
    j["runs"] = fit.runs;
    j["C_fit"] = fit.c_fit;
    j["slope"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["loglog_slope"] = fit.loglog_slope;
    j["all_finite"] = fit.all_finite;
    j["regressor"] = "d*log(1/sigma)";
    return j;
}

BenchResult run_bench(const BenchSpec& spec) {
    BenchResult out;
    const Rng root(spec.seed);
    std::uint64_t cell = 0;
    for (std::size_t di = 0; di < spec.d.size(); ++di) {
        const int d = spec.d[di];
        const int n = spec.n.empty() ? spec.n_factor * d : spec.n[di];
        for (double sigma : spec.sigma) {
            for (int s = 0; s < spec.seeds; ++s, ++cell) {
                Rng trial = root.split(cell);
                Rng rb = trial.split(0), rg = trial.split(1), rs = trial.split(2);
                const MatrixXd base = spec.base == "unit"       ? random_unit_rows(n, d, rb)
                                      : spec.base == "subspace" ? subspace_unit_rows(n, d, d - 1, rb)
                                                                : tight_unit_rows(n, d, d / 2, rb);
                const SmoothedInstance inst = generate_smoothed(base, sigma, rg, NormGuard::Mark);
                ConditioningOptions co;
                co.eps = spec.eps;
                const VectorXd c = VectorXd::Constant(n, static_cast<double>(d) / n);
                const Conditioning m = measure_conditioning(inst.A, c, co, rs);
                out.rows.push_back({n, d, sigma, s, m.t_inf, m.iterations, m.epsilon_achieved, m.t_inf_mean});
            }
        }
    }
    out.fit = fit_conditioning(out.rows);
    return out;
}

}  // namespace forster::smoothed
