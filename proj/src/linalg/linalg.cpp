#include "forster/linalg.hpp"

#include "forster/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace forster::linalg {

void Dataset::validate() const {
    const auto n_rows = n();
    const auto n_cols = d();
    if (n_cols < 1 || n_rows < n_cols) {
        throw Error(ErrorKind::InvalidArgument, "need n >= d >= 1, got n=" + std::to_string(n_rows) +
                                                    " d=" + std::to_string(n_cols));
    }
    if (c.size() != n_rows) throw Error(ErrorKind::InvalidArgument, "marginal length does not match n");
    if (!A.allFinite()) throw Error(ErrorKind::InvalidArgument, "matrix has non-finite entries");
    for (Eigen::Index i = 0; i < n_rows; ++i) {
        if (!(A.row(i).norm() > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "row " + std::to_string(i) + " has zero norm");
        }
        if (!(c(i) > 0.0) || c(i) > 1.0) {
            throw Error(ErrorKind::InvalidArgument, "marginal " + std::to_string(i) + " outside (0,1]");
        }
    }
    if (std::abs(c.sum() - static_cast<double>(n_cols)) > 1e-9) {
        throw Error(ErrorKind::InvalidArgument, "marginals must sum to d");
    }
}

Dataset Dataset::with_uniform_marginals(MatrixXd A) {
    Dataset ds;
    const double v = static_cast<double>(A.cols()) / static_cast<double>(A.rows());
    ds.c = VectorXd::Constant(A.rows(), v);
    ds.A = std::move(A);
    return ds;
}

VectorXd leverage_scores(const MatrixXd& A, const Tolerances& tol) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
    qr.setThreshold(tol.rank_pivot);
    if (qr.rank() < A.cols()) {
        throw Error(ErrorKind::RankDeficient,
                    "rank " + std::to_string(qr.rank()) + " < d=" + std::to_string(A.cols()));
    }
    const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(A.rows(), A.cols());
    return Q.rowwise().squaredNorm();
}

MatrixXd scaled_gram(const MatrixXd& A, const VectorXd& t) {
    if (!t.allFinite()) throw Error(ErrorKind::InvalidArgument, "t has non-finite entries");
    const VectorXd w = t.array().exp().matrix();
    if (!w.allFinite()) throw Error(ErrorKind::Overflow, "exp(t) overflowed; renormalize t along the ones vector");
    MatrixXd Z = A.transpose() * w.asDiagonal() * A;
    return 0.5 * (Z + Z.transpose());
}

MatrixXd inv_sqrt(const MatrixXd& M, const Tolerances& tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
    if (es.info() != Eigen::Success) throw Error(ErrorKind::IllConditioned, "eigensolver failed");
    const VectorXd& ev = es.eigenvalues();
    const double lo = ev(0);
    const double hi = ev(ev.size() - 1);
    if (!(hi > 0.0) || !(lo > tol.eig_ratio * hi)) {
        std::ostringstream msg;
        msg << "eigenvalue range [" << lo << ", " << hi << "] fails ratio " << tol.eig_ratio;
        throw Error(ErrorKind::IllConditioned, msg.str());
    }
    const VectorXd s = ev.array().rsqrt().matrix();
    MatrixXd R = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (R + R.transpose());
}

SpectralCertificate verify_rip(const MatrixXd& A, const VectorXd& c, const MatrixXd& R, double eps,
                               const Tolerances& tol) {
    const MatrixXd B = A * R.transpose();  // rows R a_i
    const VectorXd norms2 = B.rowwise().squaredNorm();
    const double scale = B.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < B.rows(); ++i) {
        if (!(std::sqrt(norms2(i)) >= tol.degenerate_row * std::max(scale, 1e-300))) {
            throw Error(ErrorKind::DegenerateRow, "transformed row " + std::to_string(i) + " vanishes");
        }
    }
    const VectorXd w = c.array() / norms2.array();
    MatrixXd M = B.transpose() * w.asDiagonal() * B;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    SpectralCertificate cert;
    cert.eig_min = es.eigenvalues()(0);
    cert.eig_max = es.eigenvalues()(es.eigenvalues().size() - 1);
    if (cert.eig_min > 0.0) {
        cert.epsilon_achieved = std::max(std::abs(std::log(cert.eig_min)), std::abs(std::log(cert.eig_max)));
    } else {
        cert.epsilon_achieved = std::numeric_limits<double>::infinity();
    }
    cert.pass = cert.epsilon_achieved <= eps;
    return cert;
}

namespace {

bool next_data_line(std::istream& in, std::string& line, int& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        const auto pos = line.find_first_not_of(" \t\r");
        if (pos != std::string::npos && line[pos] != '#') return true;
    }
    return false;
}

[[noreturn]] void parse_fail(int lineno, const std::string& what) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": " + what);
}

}  // namespace

MatrixXd read_matrix(std::istream& in) {
    std::string line;
    int lineno = 0;
    if (!next_data_line(in, line, lineno)) parse_fail(lineno, "missing header 'n d'");
    long n = 0, d = 0;
    {
        std::istringstream hs(line);
        std::string extra;
        if (!(hs >> n >> d) || (hs >> extra)) parse_fail(lineno, "header must be 'n d'");
    }
    if (n <= 0 || d <= 0) parse_fail(lineno, "dimensions must be positive");
    MatrixXd M(n, d);
    for (long i = 0; i < n; ++i) {
        if (!next_data_line(in, line, lineno)) parse_fail(lineno, "expected " + std::to_string(n) + " rows");
        std::istringstream rs(line);
        for (long j = 0; j < d; ++j) {
            if (!(rs >> M(i, j))) parse_fail(lineno, "expected " + std::to_string(d) + " values");
        }
        std::string extra;
        if (rs >> extra) parse_fail(lineno, "too many values in row");
    }
    if (next_data_line(in, line, lineno)) parse_fail(lineno, "trailing data after matrix");
    return M;
}

MatrixXd read_matrix_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return read_matrix(in);
}

void write_matrix(std::ostream& out, const MatrixXd& M) {
    out << M.rows() << ' ' << M.cols() << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            if (j) out << ' ';
            out << M(i, j);
        }
        out << '\n';
    }
}

VectorXd read_vector(std::istream& in) {
    std::vector<double> vals;
    std::string line;
    int lineno = 0;
    while (next_data_line(in, line, lineno)) {
        std::istringstream ls(line);
        double v = 0.0;
        std::string extra;
        if (!(ls >> v) || (ls >> extra)) parse_fail(lineno, "expected one value per line");
        vals.push_back(v);
    }
    return Eigen::Map<VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

VectorXd read_vector_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return read_vector(in);
}

void write_vector(std::ostream& out, const VectorXd& v) {
    out.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) out << v(i) << '\n';
}

}  // namespace forster::linalg
