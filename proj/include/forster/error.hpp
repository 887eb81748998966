#pragma once

#include <stdexcept>
#include <string>

namespace forster {

enum class ErrorKind {
    InvalidArgument,
    RankDeficient,
    Overflow,
    IllConditioned,
    DegenerateRow,
    DenseCapExceeded,
    NotConverged,
    Infeasible,
    PrerequisiteViolated,
    NormEstimateFailed,
    InconsistentBounds,
    OracleFailure,
    PolynomialDegreeExceeded,
    KrylovStagnation,
    PhaseFailure,
    MarginalTooLarge,
    Parse,
    Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::Overflow: return "Overflow";
        case ErrorKind::IllConditioned: return "IllConditioned";
        case ErrorKind::DegenerateRow: return "DegenerateRow";
        case ErrorKind::DenseCapExceeded: return "DenseCapExceeded";
        case ErrorKind::NotConverged: return "NotConverged";
        case ErrorKind::Infeasible: return "Infeasible";
        case ErrorKind::PrerequisiteViolated: return "PrerequisiteViolated";
        case ErrorKind::NormEstimateFailed: return "NormEstimateFailed";
        case ErrorKind::InconsistentBounds: return "InconsistentBounds";
        case ErrorKind::OracleFailure: return "OracleFailure";
        case ErrorKind::PolynomialDegreeExceeded: return "PolynomialDegreeExceeded";
        case ErrorKind::KrylovStagnation: return "KrylovStagnation";
        case ErrorKind::PhaseFailure: return "PhaseFailure";
        case ErrorKind::MarginalTooLarge: return "MarginalTooLarge";
        case ErrorKind::Parse: return "Parse";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace forster
