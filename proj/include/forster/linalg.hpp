#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>

namespace forster::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Tolerances {
    double rank_pivot = 1e-12;   // relative pivot threshold for rank detection
    double eig_ratio = 1e-14;    // min/max eigenvalue ratio accepted by inv_sqrt
    double degenerate_row = 1e-14;
};

// Rows a_i of A plus target marginals c.
struct Dataset {
    MatrixXd A;
    VectorXd c;

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index d() const { return A.cols(); }
    double c_min() const { return c.minCoeff(); }

    // Throws InvalidArgument when n < d, a row is zero, sum(c) != d or c_i not in (0, 1].
    void validate() const;

    static Dataset with_uniform_marginals(MatrixXd A);
};

struct SpectralCertificate {
    double eig_min = 0.0;
    double eig_max = 0.0;
    double epsilon_achieved = 0.0;
    bool pass = false;
};

VectorXd leverage_scores(const MatrixXd& A, const Tolerances& tol = {});

// sum_i exp(t_i) a_i a_i^T
MatrixXd scaled_gram(const MatrixXd& A, const VectorXd& t);

MatrixXd inv_sqrt(const MatrixXd& M, const Tolerances& tol = {});

SpectralCertificate verify_rip(const MatrixXd& A, const VectorXd& c, const MatrixXd& R, double eps,
                               const Tolerances& tol = {});

// Matrix text format: "n d" then n rows of d floats.
MatrixXd read_matrix(std::istream& in);
MatrixXd read_matrix_file(const std::string& path);
void write_matrix(std::ostream& out, const MatrixXd& M);

// One float per line.
VectorXd read_vector(std::istream& in);
VectorXd read_vector_file(const std::string& path);
void write_vector(std::ostream& out, const VectorXd& v);

}  // namespace forster::linalg
