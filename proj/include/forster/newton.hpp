#pragma once

#include "forster/barthe.hpp"
#include "forster/linalg.hpp"
#include "forster/rng.hpp"
#include "forster/sparsifier.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace forster::newton {

using linalg::MatrixXd;
using linalg::VectorXd;

struct BoxConstraint {
    VectorXd lower;
    VectorXd upper;

    void validate() const;  // lower <= upper, same length
    bool contains(const VectorXd& v, double slack = 0.0) const;
    // B(t, 1) intersected with B(0, log kappa), shifted to step coordinates v = t' - t
    static BoxConstraint step_box(const VectorXd& t, double log_kappa);
};

struct BoxQpOptions {
    int max_iter = 500;
    double ridge = 1e-12;  // relative, for the reduced Newton systems
};

struct BoxQpResult {
    VectorXd v;
    double value = 0.0;        // <b, v> + 1/2 v^T L v
    double lower_bound = 0.0;  // certified bound on the box minimum
    int iterations = 0;
};

double qp_value(const MatrixXd& L, const VectorXd& b, const VectorXd& v);

// v in the box with value <= 1/2 min over the box, certified by a
// linearization (Frank-Wolfe) lower bound. NotConverged past max_iter.
BoxQpResult box_qp_solve(const MatrixXd& L, const VectorXd& b, const BoxConstraint& box, const BoxQpOptions& opt = {});

// eps^2 c_min^2 / 2
double termination_threshold(double eps, const VectorXd& c);

struct StepResult {
    VectorXd t;           // centered new iterate
    VectorXd v;           // raw step
    double q = 0.0;       // model value of the step
    double f_before = 0.0;
    double f_after = 0.0;
    double gap_estimate = 0.0;  // 240 alpha log kappa (-q)
};

// t' = t + box_qp_solve(8 Lt, grad F(t), box); Lt must dominate the Hessian of F at t.
StepResult newton_step(const MatrixXd& A, const barthe::RegularizedObjective& F, const VectorXd& t, double log_kappa,
                       const MatrixXd& Lt, double alpha = 1.0, const BoxQpOptions& qp = {});

enum class Backend { Dense, Implicit };
std::string to_string(Backend b);
Backend backend_from_string(const std::string& s);

struct NewtonOptions {
    Backend backend = Backend::Dense;
    std::optional<double> log_kappa;  // unset: start at 4 log n and double
    double log_kappa_cap_c = 64.0;    // cap = c d log n
    int max_iter = 2000;              // total Newton steps over all kappa levels
    double delta = 0.1;
    BoxQpOptions qp;
    // implicit backend
    sparsifier::HomotopyOptions sparsify;
    double delta_rel = 1e-2;          // sparsifier shift = max(2 lambda, delta_rel Tr(H) / n)
    double phase_ratio = 16.0;        // shift ratio between homotopy phases
    double resparsify_radius = 0.5;   // rebuild once |t - t_built| exceeds this
    bool keep_iterates = false;
};

struct SolveReport {
    int iterations = 0;
    double gap_estimate = 0.0;   // from the last model decrease
    double gap_bound = 0.0;      // initial bound times the per-step contraction
    double epsilon_achieved = 0.0;
    Backend backend = Backend::Dense;
    double log_kappa = 0.0;
    std::vector<double> objective_trace;  // F at every iterate, nonincreasing
    std::vector<double> log_kappa_trace;  // kappa level in force at each step
    double alpha = 1.0;          // largest preconditioner factor used
    int sparsifications = 0;
    long long queries = 0;
    double delta = 0.0;
    std::vector<VectorXd> iterates;  // only with keep_iterates

    nlohmann::json to_json() const;
};

struct SolveResult {
    VectorXd t;
    MatrixXd R;
    SolveReport report;
};

SolveResult minimize_barthe(const linalg::Dataset& data, double eps, const NewtonOptions& opt, Rng& rng);

}  // namespace forster::newton
