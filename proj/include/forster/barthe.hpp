#pragma once

#include "forster/linalg.hpp"

namespace forster::barthe {

using linalg::MatrixXd;
using linalg::VectorXd;

// Iterate of the dual problem. Everything is computed after shifting t by its
// maximum, so exp never overflows: Z = exp(m) Zs with m = max t. The rows
// b_i = s_i R a_i and tau_i = |b_i|^2 do not depend on the shift.
class ScalingState {
public:
    ScalingState(const MatrixXd& A, VectorXd t, const linalg::Tolerances& tol = {});

    const VectorXd& t() const { return t_; }
    double shift() const { return shift_; }
    Eigen::Index n() const { return t_.size(); }
    Eigen::Index d() const { return B_.cols(); }

    // exp(-shift) Z(t); use this instead of Z() when t is large
    const MatrixXd& shifted_gram() const { return Zs_; }
    MatrixXd Z() const;
    // Z(t)^{-1/2}
    MatrixXd R() const;
    // rows R a_i
    MatrixXd transformed_rows() const;
    // rows b_i = s_i R a_i, so B^T B = I
    const MatrixXd& B() const { return B_; }
    // s_i^2 |R a_i|^2 = Tr M_i
    const VectorXd& tau() const { return tau_; }
    double log_det_Z() const { return log_det_; }

private:
    VectorXd t_;
    double shift_ = 0.0;
    MatrixXd Zs_;
    MatrixXd Rs_;  // Zs^{-1/2}
    MatrixXd B_;
    VectorXd tau_;
    double log_det_ = 0.0;
    MatrixXd A_;
};

double objective(const VectorXd& c, const ScalingState& s);
VectorXd gradient(const VectorXd& c, const ScalingState& s);

// H = diag(tau) - (B B^T) .* (B B^T)
MatrixXd hessian_dense(const ScalingState& s, Eigen::Index dense_cap = 5000);
VectorXd hessian_matvec(const ScalingState& s, const VectorXd& v);

struct RegularizedObjective {
    VectorXd c;
    double eps = 0.0;
    double c_min = 0.0;
    double log_kappa = 0.0;
    double lambda = 0.0;

    // lambda = eps^2 c_min^2 / (4 log^2 kappa)
    static RegularizedObjective make(const VectorXd& c, double eps, double log_kappa);
    // explicit lambda, for testing
    static RegularizedObjective with_lambda(const VectorXd& c, double lambda);

    double value(const ScalingState& s) const;
    VectorXd grad(const ScalingState& s) const;
    VectorXd hess_matvec(const ScalingState& s, const VectorXd& v) const;
};

struct ValueGradHess {
    double value = 0.0;
    VectorXd grad;
    VectorXd hv;  // empty unless v was given
};

ValueGradHess regularized_value_grad_hess(const RegularizedObjective& reg, const ScalingState& s,
                                          const VectorXd* v = nullptr);

// v - mean(v) 1
VectorXd project_mean_zero(const VectorXd& v);

// Shift t along 1 so that its extreme coordinates average to 0.
VectorXd center_extremes(const VectorXd& t);

}  // namespace forster::barthe
