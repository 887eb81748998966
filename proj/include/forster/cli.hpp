#pragma once

#include "forster/linalg.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace forster::cli {

enum ExitCode : int { Ok = 0, Failure = 1, InfeasibleInput = 2, IoOrParse = 3 };

// Tunable constants reachable from --config {"constants": {...}}.
struct Constants {
    std::optional<double> jl_constant;      // sketch rows constant in the MMW embedding
    std::optional<double> probe_constant;   // Hutchinson probes constant
    std::optional<double> sample_c;         // resistance samples = sample_c n ln n
    std::optional<int> max_iter;            // Newton steps
    std::optional<int> mdr_max_rounds;
    std::optional<double> phase_ratio;
    std::optional<double> delta_rel;        // implicit Newton shift, relative to Tr(H)/n
    std::optional<long long> query_budget;
    std::optional<long long> nnz_budget;
    std::optional<double> log_kappa_cap_c;
};

struct RunConfig {
    std::string command;  // transform | verify | sparsify | bench-smoothed
    std::string input;
    std::string marginals;   // empty: c = (d/n) 1
    std::string transform;   // R file for verify
    double epsilon = 1e-3;
    double delta = 0.1;      // failure probability
    std::optional<double> shift;   // sparsify: Delta, default 0.01 Tr(L) / n
    std::optional<double> sigma;   // bench-smoothed: single-sigma override
    std::string kappa = "auto";
    std::string backend = "dense";
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out_prefix = "forster";
    bool binary = false;     // write matrices in the little-endian binary format
    Constants constants;

    // Fields present in j overwrite this config; unknown keys throw Parse.
    void merge_json(const nlohmann::json& j);
    // Range checks; throws InvalidArgument.
    void validate() const;
};

// Binary matrix format: 8-byte magic "FMATLE01", int64 rows, int64 cols,
// then rows*cols little-endian doubles, row-major.
void write_matrix_binary(std::ostream& out, const linalg::MatrixXd& M);
// Text or binary, detected from the magic.
linalg::MatrixXd read_matrix_any(const std::string& path);

int cmd_transform(const RunConfig& cfg);
int cmd_verify(const RunConfig& cfg);
int cmd_sparsify(const RunConfig& cfg);
int cmd_bench_smoothed(const RunConfig& cfg);

// Parses argv, dispatches, maps errors to exit codes.
int run(int argc, char** argv);

}  // namespace forster::cli
