#include "forster/error.hpp"
#include "forster/newton.hpp"

#include <algorithm>
#include <cmath>

namespace forster::newton {

void BoxConstraint::validate() const {
    if (lower.size() != upper.size()) throw Error(ErrorKind::InvalidArgument, "box bounds differ in length");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (!(lower(i) <= upper(i))) throw Error(ErrorKind::InvalidArgument, "empty box");
}

bool BoxConstraint::contains(const VectorXd& v, double slack) const {
    return v.size() == lower.size() && (v.array() >= lower.array() - slack).all() &&
           (v.array() <= upper.array() + slack).all();
}

BoxConstraint BoxConstraint::step_box(const VectorXd& t, double log_kappa) {
    BoxConstraint b;
    b.lower = (-log_kappa - t.array()).max(-1.0).matrix();
    b.upper = (log_kappa - t.array()).min(1.0).matrix();
    // t may sit a rounding error outside the ball
    b.lower = b.lower.cwiseMin(0.0);
    b.upper = b.upper.cwiseMax(0.0);
    return b;
}

double qp_value(const MatrixXd& L, const VectorXd& b, const VectorXd& v) { return b.dot(v) + 0.5 * v.dot(L * v); }

namespace {

VectorXd clamp(const VectorXd& v, const BoxConstraint& box) {
    return v.cwiseMax(box.lower).cwiseMin(box.upper);
}

// min over the box of the linearization at v
double linear_bound(double q, const VectorXd& g, const VectorXd& v, const BoxConstraint& box) {
    double lb = q;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        lb += std::min(g(i) * (box.lower(i) - v(i)), g(i) * (box.upper(i) - v(i)));
    return lb;
}

}  // namespace

BoxQpResult box_qp_solve(const MatrixXd& L, const VectorXd& b, const BoxConstraint& box, const BoxQpOptions& opt) {
    box.validate();
    const Eigen::Index n = b.size();
    if (L.rows() != n || L.cols() != n || box.lower.size() != n)
        throw Error(ErrorKind::InvalidArgument, "box QP dimensions disagree");
    double scale = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) scale += std::abs(b(i)) * (box.upper(i) - box.lower(i));
    scale += 0.5 * L.diagonal().cwiseAbs().sum() * std::pow((box.upper - box.lower).cwiseAbs().maxCoeff(), 2);
    const double exact_tol = 1e-13 * std::max(scale, 1e-300);
    const double ridge = opt.ridge * std::max(L.diagonal().cwiseAbs().maxCoeff(), 1e-300);

    BoxQpResult r;
    r.v = clamp(VectorXd::Zero(n), box);
    double q = qp_value(L, b, r.v);
    for (int it = 0;; ++it) {
        const VectorXd g = b + L * r.v;
        const double lb = linear_bound(q, g, r.v, box);
        r.value = q;
        r.lower_bound = lb;
        r.iterations = it;
        if (q <= 0.5 * lb || q - lb <= exact_tol) return r;
        if (it >= opt.max_iter)
            throw Error(ErrorKind::NotConverged, "box QP: value " + std::to_string(q) + " vs bound " +
                                                     std::to_string(lb) + " after " + std::to_string(it) +
                                                     " iterations");

        // variables held at a bound by the gradient
        const VectorXd pg = r.v - clamp(r.v - g, box);
        const double eps = std::min(1e-8, pg.norm());
        std::vector<int> free;
        std::vector<char> held(static_cast<std::size_t>(n), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool at_lo = r.v(i) <= box.lower(i) + eps && g(i) > 0.0;
            const bool at_hi = r.v(i) >= box.upper(i) - eps && g(i) < 0.0;
            if (at_lo || at_hi) held[static_cast<std::size_t>(i)] = 1;
            else free.push_back(static_cast<int>(i));
        }
        VectorXd d = VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (held[static_cast<std::size_t>(i)]) d(i) = -g(i) / std::max(L(i, i), ridge);
        if (!free.empty()) {
            const int m = static_cast<int>(free.size());
            MatrixXd LF(m, m);
            VectorXd gF(m);
            for (int a = 0; a < m; ++a) {
                gF(a) = g(free[a]);
                for (int c = 0; c < m; ++c) LF(a, c) = L(free[a], free[c]);
            }
            LF.diagonal().array() += ridge;
            const VectorXd dF = LF.ldlt().solve(-gF);
            for (int a = 0; a < m; ++a) d(free[a]) = dF(a);
        }
        // Armijo search along the projected arc
        double s = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
            const VectorXd w = clamp(r.v + s * d, box);
            const double qw = qp_value(L, b, w);
            if (qw <= q + 1e-4 * g.dot(w - r.v) && qw < q) {
                r.v = w;
                q = qw;
                moved = true;
                break;
            }
        }
        if (!moved) {
            // projected gradient with the exact step along the feasible segment
            const VectorXd dir = clamp(r.v - g, box) - r.v;
            const double curv = dir.dot(L * dir);
            const double slope = g.dot(dir);
            if (!(slope < 0.0)) {
                r.value = q;
                throw Error(ErrorKind::NotConverged, "box QP stalled with no descent direction");
            }
            const double step = curv > 0.0 ? std::min(1.0, -slope / curv) : 1.0;
            r.v = clamp(r.v + step * dir, box);
            q = qp_value(L, b, r.v);
        }
    }
}

}  // namespace forster::newton
