#include "forster/cli.hpp"

#include "forster/error.hpp"
#include "forster/newton.hpp"
#include "forster/rng.hpp"
#include "forster/smoothed.hpp"
#include "forster/soc.hpp"
#include "forster/sparsifier.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>

namespace forster::cli {

using linalg::MatrixXd;
using linalg::VectorXd;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'M', 'A', 'T', 'L', 'E', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t x) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorKind::Parse, path + ": truncated binary matrix");
    std::uint64_t x = 0;
    for (int i = 7; i >= 0; --i) x = (x << 8) | b[i];
    return x;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot open " + path + " for writing");
    return f;
}

void finish(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw Error(ErrorKind::Io, "write failed: " + path);
}

// e.what() without the "Kind: " prefix
std::string bare(const Error& e) {
    const std::string w = e.what();
    const std::string k = std::string(to_string(e.kind())) + ": ";
    return w.rfind(k, 0) == 0 ? w.substr(k.size()) : w;
}

void write_json_file(const std::string& path, const json& j) {
    auto f = open_out(path);
    f << j.dump(2) << '\n';
    finish(f, path);
}

template <class T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

template <class T>
void take(const json& j, const char* key, std::optional<T>& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

linalg::Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.input.empty()) throw Error(ErrorKind::InvalidArgument, "--input is required");
    MatrixXd A = read_matrix_any(cfg.input);
    linalg::Dataset data;
    if (cfg.marginals.empty()) {
        data = linalg::Dataset::with_uniform_marginals(std::move(A));
    } else {
        data.A = std::move(A);
        data.c = linalg::read_vector_file(cfg.marginals);
        if (data.c.size() != data.A.rows())
            throw Error(ErrorKind::InvalidArgument, "marginals have " + std::to_string(data.c.size()) +
                                                        " entries, matrix has " + std::to_string(data.A.rows()) + " rows");
    }
    data.validate();
    return data;
}

std::uint64_t require_seed(const RunConfig& cfg) {
    if (!cfg.seed) throw Error(ErrorKind::InvalidArgument, cfg.command + " is randomized: --seed is required");
    return *cfg.seed;
}

void apply_constants(const Constants& k, sparsifier::HomotopyOptions& ho) {
    if (k.jl_constant) ho.mdr.trace.c_jl = *k.jl_constant;
    if (k.probe_constant) ho.mdr.trace.c_probe = *k.probe_constant;
    if (k.sample_c) ho.sample_c = *k.sample_c;
    if (k.mdr_max_rounds) ho.mdr.max_rounds = *k.mdr_max_rounds;
    if (k.query_budget) ho.query_budget = *k.query_budget;
    if (k.nnz_budget) ho.nnz_budget = *k.nnz_budget;
}

json certificate_json(const linalg::SpectralCertificate& c, double eps) {
    return {{"eig_min", c.eig_min},
            {"eig_max", c.eig_max},
            {"epsilon", eps},
            {"epsilon_achieved", c.epsilon_achieved},
            {"pass", c.pass}};
}

}  // namespace

void RunConfig::merge_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "config must be a JSON object");
    static const char* known[] = {"epsilon", "delta", "shift", "sigma",  "kappa",      "backend",  "seed",
                                  "threads", "input", "marginals", "transform", "out_prefix", "binary", "constants"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw Error(ErrorKind::Parse, "config: unknown key '" + key + "'");
    }
    try {
        take(j, "epsilon", epsilon);
        take(j, "delta", delta);
        take(j, "shift", shift);
        take(j, "sigma", sigma);
        if (j.contains("kappa")) {
            const auto& v = j.at("kappa");
            kappa = v.is_string() ? v.get<std::string>() : json(v.get<double>()).dump();
        }
        take(j, "backend", backend);
        take(j, "seed", seed);
        take(j, "threads", threads);
        take(j, "input", input);
        take(j, "marginals", marginals);
        take(j, "transform", transform);
        take(j, "out_prefix", out_prefix);
        take(j, "binary", binary);
        if (j.contains("constants")) {
            const json& k = j.at("constants");
            static const char* names[] = {"jl_constant", "probe_constant", "sample_c",   "max_iter",   "mdr_max_rounds",
                                          "phase_ratio", "delta_rel",      "query_budget", "nnz_budget", "log_kappa_cap_c"};
            for (const auto& [key, _] : k.items()) {
                bool ok = false;
                for (const char* n : names) ok = ok || key == n;
                if (!ok) throw Error(ErrorKind::Parse, "config: unknown constant '" + key + "'");
            }
            take(k, "jl_constant", constants.jl_constant);
            take(k, "probe_constant", constants.probe_constant);
            take(k, "sample_c", constants.sample_c);
            take(k, "max_iter", constants.max_iter);
            take(k, "mdr_max_rounds", constants.mdr_max_rounds);
            take(k, "phase_ratio", constants.phase_ratio);
            take(k, "delta_rel", constants.delta_rel);
            take(k, "query_budget", constants.query_budget);
            take(k, "nnz_budget", constants.nnz_budget);
            take(k, "log_kappa_cap_c", constants.log_kappa_cap_c);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
    }
}

void RunConfig::validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
    if (!(epsilon > 0.0 && epsilon < 1.0)) bad("epsilon must be in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) bad("delta must be in (0, 1)");
    if (shift && !(*shift > 0.0)) bad("shift must be positive");
    if (sigma && !(*sigma > 0.0 && *sigma < 1.0)) bad("sigma must be in (0, 1)");
    if (kappa != "auto") {
        char* end = nullptr;
        const double k = std::strtod(kappa.c_str(), &end);
        if (end == kappa.c_str() || *end != '\0' || !(k > 1.0)) bad("kappa must be 'auto' or a number > 1");
    }
    newton::backend_from_string(backend);
    if (threads < 1) bad("threads must be >= 1");
    if (out_prefix.empty()) bad("out-prefix must not be empty");
    const Constants& k = constants;
    if (k.jl_constant && !(*k.jl_constant > 0)) bad("jl_constant must be positive");
    if (k.probe_constant && !(*k.probe_constant > 0)) bad("probe_constant must be positive");
    if (k.sample_c && !(*k.sample_c > 0)) bad("sample_c must be positive");
    if (k.max_iter && *k.max_iter < 1) bad("max_iter must be >= 1");
    if (k.mdr_max_rounds && *k.mdr_max_rounds < 1) bad("mdr_max_rounds must be >= 1");
    if (k.phase_ratio && !(*k.phase_ratio > 1)) bad("phase_ratio must be > 1");
    if (k.delta_rel && !(*k.delta_rel > 0)) bad("delta_rel must be positive");
    if (k.query_budget && *k.query_budget < 0) bad("query_budget must be >= 0");
    if (k.nnz_budget && *k.nnz_budget < 0) bad("nnz_budget must be >= 0");
    if (k.log_kappa_cap_c && !(*k.log_kappa_cap_c > 0)) bad("log_kappa_cap_c must be positive");
}

void write_matrix_binary(std::ostream& out, const MatrixXd& M) {
    out.write(kMagic, 8);
    put_u64(out, static_cast<std::uint64_t>(M.rows()));
    put_u64(out, static_cast<std::uint64_t>(M.cols()));
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            std::uint64_t bits;
            const double x = M(i, j);
            std::memcpy(&bits, &x, 8);
            put_u64(out, bits);
        }
}

MatrixXd read_matrix_any(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot open " + path);
    char head[8] = {};
    f.read(head, 8);
    if (f.gcount() == 8 && std::memcmp(head, kMagic, 8) == 0) {
        const std::uint64_t r = get_u64(f, path), c = get_u64(f, path);
        if (r == 0 || c == 0 || r > (1u << 24) || c > (1u << 24) || r * c > (1ull << 31))
            throw Error(ErrorKind::Parse, path + ": bad binary dimensions");
        MatrixXd M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            for (Eigen::Index j = 0; j < M.cols(); ++j) {
                const std::uint64_t bits = get_u64(f, path);
                std::memcpy(&M(i, j), &bits, 8);
            }
        if (f.peek() != std::char_traits<char>::eof()) throw Error(ErrorKind::Parse, path + ": trailing bytes");
        return M;
    }
    try {
        return linalg::read_matrix_file(path);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw Error(ErrorKind::Parse, path + ": " + bare(e));
        throw;
    }
}

int cmd_transform(const RunConfig& cfg) {
    const linalg::Dataset data = load_dataset(cfg);
    newton::NewtonOptions opt;
    opt.backend = newton::backend_from_string(cfg.backend);
    if (cfg.kappa != "auto") opt.log_kappa = std::log(std::stod(cfg.kappa));
    opt.delta = cfg.delta;
    opt.sparsify.delta = cfg.delta;
    const Constants& k = cfg.constants;
    if (k.max_iter) opt.max_iter = *k.max_iter;
    if (k.phase_ratio) opt.phase_ratio = *k.phase_ratio;
    if (k.delta_rel) opt.delta_rel = *k.delta_rel;
    if (k.log_kappa_cap_c) opt.log_kappa_cap_c = *k.log_kappa_cap_c;
    apply_constants(k, opt.sparsify);
    // the dense backend draws nothing; the implicit one needs a seed
    const std::uint64_t seed = opt.backend == newton::Backend::Implicit ? require_seed(cfg) : cfg.seed.value_or(0);
    Rng rng(seed);

    const auto res = newton::minimize_barthe(data, cfg.epsilon, opt, rng);
    const auto cert = linalg::verify_rip(data.A, data.c, res.R, cfg.epsilon);

    if (cfg.binary) {
        const std::string p = cfg.out_prefix + ".R.bin";
        auto f = open_out(p);
        write_matrix_binary(f, res.R);
        finish(f, p);
    } else {
        const std::string p = cfg.out_prefix + ".R.txt";
        auto f = open_out(p);
        linalg::write_matrix(f, res.R);
        finish(f, p);
    }
    {
        const std::string p = cfg.out_prefix + ".t.txt";
        auto f = open_out(p);
        linalg::write_vector(f, res.t);
        finish(f, p);
    }
    json rep = res.report.to_json();
    rep["n"] = data.n();
    rep["d"] = data.d();
    rep["seed"] = seed;
    rep["certificate"] = certificate_json(cert, cfg.epsilon);
    write_json_file(cfg.out_prefix + ".report.json", rep);
    std::cout << "iterations " << res.report.iterations << "  epsilon_achieved " << cert.epsilon_achieved
              << (cert.pass ? "  verified\n" : "  NOT verified\n");
    return cert.pass ? Ok : Failure;
}

int cmd_verify(const RunConfig& cfg) {
    const linalg::Dataset data = load_dataset(cfg);
    if (cfg.transform.empty()) throw Error(ErrorKind::InvalidArgument, "--transform is required");
    const MatrixXd R = read_matrix_any(cfg.transform);
    if (R.rows() != data.d() || R.cols() != data.d())
        throw Error(ErrorKind::InvalidArgument, "dimension mismatch: R is " + std::to_string(R.rows()) + "x" +
                                                    std::to_string(R.cols()) + ", data has d = " +
                                                    std::to_string(data.d()));
    const auto cert = linalg::verify_rip(data.A, data.c, R, cfg.epsilon);
    std::cout << certificate_json(cert, cfg.epsilon).dump(2) << '\n';
    return cert.pass ? Ok : Failure;
}

int cmd_sparsify(const RunConfig& cfg) {
    if (cfg.input.empty()) throw Error(ErrorKind::InvalidArgument, "--input is required");
    const std::uint64_t seed = require_seed(cfg);
    soc::SparseLaplacian hidden;
    try {
        hidden = soc::read_tsv_file(cfg.input);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw Error(ErrorKind::Parse, cfg.input + ": " + bare(e));
        throw;
    }
    if (hidden.n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two vertices");
    const double trace = 2.0 * hidden.total_weight();
    const double Delta = cfg.shift.value_or(0.01 * trace / hidden.n);
    if (!(Delta > 0.0 && Delta < trace))
        throw Error(ErrorKind::InvalidArgument, "shift " + json(Delta).dump() + " outside (0, Tr L = " +
                                                    json(trace).dump() + ")");

    sparsifier::HomotopyOptions ho;
    ho.delta = cfg.delta;
    if (cfg.constants.phase_ratio) ho.phase_ratio = *cfg.constants.phase_ratio;
    apply_constants(cfg.constants, ho);
    const auto oracle = sparsifier::ImplicitLaplacianOracle::from_sparse(hidden);
    Rng rng(seed);
    const auto res = sparsifier::sparsify_implicit(oracle, Delta, ho, rng);

    {
        const std::string p = cfg.out_prefix + ".laplacian.tsv";
        auto f = open_out(p);
        soc::write_tsv(f, res.L);
        finish(f, p);
    }
    json rep = res.report();
    rep["seed"] = seed;
    rep["shift"] = Delta;
    write_json_file(cfg.out_prefix + ".report.json", rep);
    std::cout << "F_total " << res.f_total << "  queries " << res.queries << "  nnz " << res.nnz << '\n';
    return Ok;
}

int cmd_bench_smoothed(const RunConfig& cfg) {
    json exp = json::object();
    if (!cfg.input.empty()) {
        std::ifstream f(cfg.input);
        if (!f) throw Error(ErrorKind::Io, "cannot open " + cfg.input);
        try {
            exp = json::parse(f);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, cfg.input + ": " + e.what());
        }
    }
    smoothed::BenchSpec spec = smoothed::BenchSpec::from_json(exp);
    if (cfg.seed) spec.seed = *cfg.seed;
    else if (!exp.contains("seed")) require_seed(cfg);
    if (cfg.sigma) spec.sigma = {*cfg.sigma};
    const auto res = smoothed::run_bench(spec);
    {
        const std::string p = cfg.out_prefix + ".csv";
        auto f = open_out(p);
        res.write_csv(f);
        finish(f, p);
    }
    json sum = res.summary();
    sum["seed"] = spec.seed;
    write_json_file(cfg.out_prefix + ".summary.json", sum);
    std::cout << "runs " << res.fit.runs << "  C_fit " << res.fit.c_fit << '\n';
    return res.fit.all_finite ? Ok : Failure;
}

int run(int argc, char** argv) {
    CLI::App app{"Approximate Forster transforms by box-constrained Newton on Barthe's objective"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "forster 0.1.0");

    RunConfig flags;
    std::optional<double> eps, delta;
    std::optional<std::string> kappa, backend, out_prefix;
    std::optional<int> threads;
    std::string config_path;
    bool binary = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--input", flags.input, "input file");
        sub->add_option("--marginals", flags.marginals, "target marginals c, one per line (default d/n)");
        sub->add_option("--epsilon", eps, "RIP accuracy");
        sub->add_option("--delta", delta, "failure probability");
        sub->add_option("--kappa", kappa, "auto or a fixed condition bound > 1");
        sub->add_option("--backend", backend, "dense or implicit");
        sub->add_option("--seed", flags.seed, "RNG seed");
        sub->add_option("--threads", threads, "worker threads (default 1)");
        sub->add_option("--out-prefix", out_prefix, "prefix for output files");
        sub->add_option("--config", config_path, "JSON overrides");
    };
    auto* transform = app.add_subcommand("transform", "compute R and t");
    add_common(transform);
    transform->add_flag("--binary", binary, "write R in the binary matrix format");
    auto* verify = app.add_subcommand("verify", "check a transform");
    add_common(verify);
    verify->add_option("--transform", flags.transform, "R file");
    auto* sparsify = app.add_subcommand("sparsify", "sparsify a hidden Laplacian from matvecs");
    add_common(sparsify);
    sparsify->add_option("--shift", flags.shift, "Delta (default 0.01 Tr(L)/n)");
    auto* bench = app.add_subcommand("bench-smoothed", "smoothed conditioning benchmark");
    add_common(bench);
    bench->add_option("--sigma", flags.sigma, "single noise level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return IoOrParse;
    }

    try {
        RunConfig cfg;
        cfg.command = app.get_subcommands().front()->get_name();
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw Error(ErrorKind::Io, "cannot open " + config_path);
            json j;
            try {
                j = json::parse(f);
            } catch (const json::exception& e) {
                throw Error(ErrorKind::Parse, config_path + ": " + e.what());
            }
            cfg.merge_json(j);
        }
        // explicit flags win over the config file
        if (!flags.input.empty()) cfg.input = flags.input;
        if (!flags.marginals.empty()) cfg.marginals = flags.marginals;
        if (!flags.transform.empty()) cfg.transform = flags.transform;
        if (eps) cfg.epsilon = *eps;
        if (delta) cfg.delta = *delta;
        if (flags.shift) cfg.shift = flags.shift;
        if (flags.sigma) cfg.sigma = flags.sigma;
        if (kappa) cfg.kappa = *kappa;
        if (backend) cfg.backend = *backend;
        if (flags.seed) cfg.seed = flags.seed;
        if (threads) cfg.threads = *threads;
        if (out_prefix) cfg.out_prefix = *out_prefix;
        if (binary) cfg.binary = true;
        cfg.validate();
        // Eigen runs single-threaded unless built with OpenMP
        Eigen::setNbThreads(cfg.threads);

        if (cfg.command == "transform") return cmd_transform(cfg);
        if (cfg.command == "verify") return cmd_verify(cfg);
        if (cfg.command == "sparsify") return cmd_sparsify(cfg);
        return cmd_bench_smoothed(cfg);
    } catch (const Error& e) {
        std::cerr << "forster: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::Infeasible: return InfeasibleInput;
            case ErrorKind::Parse:
            case ErrorKind::Io: return IoOrParse;
            default: return Failure;
        }
    } catch (const std::exception& e) {
        std::cerr << "forster: " << e.what() << '\n';
        return Failure;
    }
}

}  // namespace forster::cli
