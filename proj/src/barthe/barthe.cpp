#include "forster/barthe.hpp"

#include "forster/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace forster::barthe {

ScalingState::ScalingState(const MatrixXd& A, VectorXd t, const linalg::Tolerances& tol)
    : t_(std::move(t)), A_(A) {
    if (t_.size() != A.rows()) throw Error(ErrorKind::InvalidArgument, "t length does not match rows of A");
    if (!t_.allFinite()) throw Error(ErrorKind::InvalidArgument, "t has non-finite entries");
    shift_ = t_.maxCoeff();
    Zs_ = linalg::scaled_gram(A, t_.array() - shift_);
    Rs_ = linalg::inv_sqrt(Zs_, tol);
    const VectorXd s = ((t_.array() - shift_) * 0.5).exp().matrix();
    B_ = s.asDiagonal() * (A * Rs_);
    tau_ = B_.rowwise().squaredNorm();
    Eigen::LLT<MatrixXd> llt(Zs_);
    if (llt.info() != Eigen::Success) throw Error(ErrorKind::IllConditioned, "Cholesky of Z failed");
    const VectorXd diag = llt.matrixLLT().diagonal();
    log_det_ = 2.0 * diag.array().log().sum() + static_cast<double>(A.cols()) * shift_;
}

MatrixXd ScalingState::Z() const {
    const double f = std::exp(shift_);
    if (!std::isfinite(f)) throw Error(ErrorKind::Overflow, "exp(max t) overflowed; renormalize t");
    return f * Zs_;
}

MatrixXd ScalingState::R() const { return std::exp(-0.5 * shift_) * Rs_; }

MatrixXd ScalingState::transformed_rows() const { return A_ * R(); }

double objective(const VectorXd& c, const ScalingState& s) { return -c.dot(s.t()) + s.log_det_Z(); }

VectorXd gradient(const VectorXd& c, const ScalingState& s) { return s.tau() - c; }

MatrixXd hessian_dense(const ScalingState& s, Eigen::Index dense_cap) {
    if (s.n() > dense_cap) {
        throw Error(ErrorKind::DenseCapExceeded,
                    "n=" + std::to_string(s.n()) + " exceeds dense cap " + std::to_string(dense_cap));
    }
    MatrixXd K = s.B() * s.B().transpose();
    MatrixXd H = -K.array().square().matrix();
    // tau_i - K_ii^2 equals the off-diagonal row mass since B^T B = I; use the
    // row mass so the rows sum to zero to rounding
    H.diagonal().setZero();
    H.diagonal() = -H.rowwise().sum();
    return 0.5 * (H + H.transpose());
}

VectorXd hessian_matvec(const ScalingState& s, const VectorXd& v) {
    const MatrixXd& B = s.B();
    // C = B^T diag(v) B, then (Hv)_i = m_i v_i - b_i^T C b_i with row mass
    // m_i = b_i^T (B^T B) b_i, which equals tau_i but keeps H 1 = 0 when B^T B
    // is off the identity by rounding
    const MatrixXd C = B.transpose() * v.asDiagonal() * B;
    const MatrixXd G = B.transpose() * B;
    const VectorXd mass = (B * G).cwiseProduct(B).rowwise().sum();
    VectorXd out = mass.cwiseProduct(v);
    out -= (B * C).cwiseProduct(B).rowwise().sum();
    return out;
}

VectorXd project_mean_zero(const VectorXd& v) { return v.array() - v.mean(); }

VectorXd center_extremes(const VectorXd& t) {
    const double mid = 0.5 * (t.maxCoeff() + t.minCoeff());
    return t.array() - mid;
}

RegularizedObjective RegularizedObjective::make(const VectorXd& c, double eps, double log_kappa) {
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "eps must be positive");
    if (!(log_kappa > 0.0)) throw Error(ErrorKind::InvalidArgument, "log kappa must be positive");
    RegularizedObjective r;
    r.c = c;
    r.eps = eps;
    r.c_min = c.minCoeff();
    r.log_kappa = log_kappa;
    r.lambda = eps * eps * r.c_min * r.c_min / (4.0 * log_kappa * log_kappa);
    return r;
}

RegularizedObjective RegularizedObjective::with_lambda(const VectorXd& c, double lambda) {
    RegularizedObjective r;
    r.c = c;
    r.c_min = c.minCoeff();
    r.lambda = lambda;
    return r;
}

double RegularizedObjective::value(const ScalingState& s) const {
    const VectorXd pt = project_mean_zero(s.t());
    return objective(c, s) + lambda * pt.squaredNorm();
}

VectorXd RegularizedObjective::grad(const ScalingState& s) const {
    return gradient(c, s) + 2.0 * lambda * project_mean_zero(s.t());
}

VectorXd RegularizedObjective::hess_matvec(const ScalingState& s, const VectorXd& v) const {
    return hessian_matvec(s, v) + 2.0 * lambda * project_mean_zero(v);
}

ValueGradHess regularized_value_grad_hess(const RegularizedObjective& reg, const ScalingState& s,
                                          const VectorXd* v) {
    ValueGradHess out;
    out.value = reg.value(s);
    out.grad = reg.grad(s);
    if (v) out.hv = reg.hess_matvec(s, *v);
    return out;
}

}  // namespace forster::barthe
