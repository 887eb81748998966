#include "forster/soc.hpp"

#include "forster/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace forster::soc {

Partition Partition::from_pieces(int n, std::vector<std::vector<int>> pieces) {
    Partition p;
    p.n = n;
    p.membership.assign(n, 0);
    for (auto& piece : pieces) {
        if (piece.empty()) continue;
        const int id = static_cast<int>(p.pieces.size()) + 1;
        for (int v : piece) {
            if (v < 0 || v >= n) throw Error(ErrorKind::InvalidArgument, "vertex out of range");
            if (p.membership[v] != 0) throw Error(ErrorKind::InvalidArgument, "pieces overlap");
            p.membership[v] = id;
        }
        p.pieces.push_back(std::move(piece));
    }
    return p;
}

Partition Partition::from_labels(const std::vector<long long>& labels) {
    const int n = static_cast<int>(labels.size());
    std::vector<int> order;
    order.reserve(n);
    for (int v = 0; v < n; ++v)
        if (labels[v] >= 0) order.push_back(v);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return labels[a] < labels[b]; });
    Partition p;
    p.n = n;
    p.membership.assign(n, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i == 0 || labels[order[i]] != labels[order[i - 1]]) p.pieces.emplace_back();
        p.pieces.back().push_back(order[i]);
        p.membership[order[i]] = static_cast<int>(p.pieces.size());
    }
    return p;
}

Partition Partition::whole(int n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    return from_pieces(n, {all});
}

Partition Partition::singletons(int n) {
    std::vector<std::vector<int>> pieces(n);
    for (int v = 0; v < n; ++v) pieces[v] = {v};
    return from_pieces(n, std::move(pieces));
}

std::vector<int> Partition::support() const {
    std::vector<int> s;
    for (int v = 0; v < n; ++v)
        if (membership[v]) s.push_back(v);
    return s;
}

int Partition::support_size() const {
    int total = 0;
    for (const auto& piece : pieces) total += static_cast<int>(piece.size());
    return total;
}

void Partition::validate() const {
    if (static_cast<int>(membership.size()) != n) throw Error(ErrorKind::InvalidArgument, "membership size");
    std::vector<int> seen(n, 0);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (pieces[i].empty()) throw Error(ErrorKind::InvalidArgument, "empty piece");
        for (int v : pieces[i]) {
            if (v < 0 || v >= n || seen[v]) throw Error(ErrorKind::InvalidArgument, "pieces not disjoint");
            seen[v] = 1;
            if (membership[v] != static_cast<int>(i) + 1) throw Error(ErrorKind::InvalidArgument, "membership mismatch");
        }
    }
    for (int v = 0; v < n; ++v)
        if (!seen[v] && membership[v] != 0) throw Error(ErrorKind::InvalidArgument, "membership mismatch");
}

void SocRep::add(double weight, Partition part) {
    if (part.n != n) throw Error(ErrorKind::InvalidArgument, "partition size does not match SOC");
    terms.push_back({weight, std::move(part)});
}

void SocRep::validate() const {
    for (const auto& t : terms) {
        if (!(t.weight >= 0.0) || !std::isfinite(t.weight)) throw Error(ErrorKind::InvalidArgument, "negative SOC weight");
        if (t.part.n != n) throw Error(ErrorKind::InvalidArgument, "partition size does not match SOC");
        t.part.validate();
    }
}

double AsocRep::mass() const {
    double s = pieces.support_size();
    double total = 0.5 * s * (s - 1);
    for (const auto& piece : pieces.pieces) {
        const double k = static_cast<double>(piece.size());
        total -= 0.5 * k * (k - 1);
    }
    return total;
}

void SparseLaplacian::normalize() {
    for (auto& e : edges)
        if (e.u > e.v) std::swap(e.u, e.v);
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    std::vector<Edge> merged;
    merged.reserve(edges.size());
    for (const auto& e : edges) {
        if (e.u == e.v) continue;
        if (!merged.empty() && merged.back().u == e.u && merged.back().v == e.v) {
            merged.back().w += e.w;
        } else {
            merged.push_back(e);
        }
    }
    merged.erase(std::remove_if(merged.begin(), merged.end(), [](const Edge& e) { return !(e.w > 0.0); }),
                 merged.end());
    edges = std::move(merged);
}

void SparseLaplacian::validate() const {
    for (const auto& e : edges) {
        if (e.u < 0 || e.v >= n || e.u >= e.v) throw Error(ErrorKind::InvalidArgument, "edge must satisfy 0 <= u < v < n");
        if (!(e.w > 0.0) || !std::isfinite(e.w)) throw Error(ErrorKind::InvalidArgument, "edge weight must be finite positive");
    }
}

void SparseLaplacian::append(const SparseLaplacian& other, double f) {
    for (const auto& e : other.edges) edges.push_back({e.u, e.v, f * e.w});
}

void SparseLaplacian::scale(double f) {
    for (auto& e : edges) e.w *= f;
}

double SparseLaplacian::total_weight() const {
    double s = 0.0;
    for (const auto& e : edges) s += e.w;
    return s;
}

VectorXd SparseLaplacian::matvec(const VectorXd& x) const {
    VectorXd y = VectorXd::Zero(n);
    for (const auto& e : edges) {
        const double d = e.w * (x(e.u) - x(e.v));
        y(e.u) += d;
        y(e.v) -= d;
    }
    return y;
}

MatrixXd SparseLaplacian::dense(int cap) const {
    if (n > cap) throw Error(ErrorKind::DenseCapExceeded, "n exceeds dense cap");
    MatrixXd L = MatrixXd::Zero(n, n);
    for (const auto& e : edges) {
        L(e.u, e.u) += e.w;
        L(e.v, e.v) += e.w;
        L(e.u, e.v) -= e.w;
        L(e.v, e.u) -= e.w;
    }
    return L;
}

Eigen::SparseMatrix<double> SparseLaplacian::sparse() const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(4 * edges.size());
    for (const auto& e : edges) {
        trip.emplace_back(e.u, e.u, e.w);
        trip.emplace_back(e.v, e.v, e.w);
        trip.emplace_back(e.u, e.v, -e.w);
        trip.emplace_back(e.v, e.u, -e.w);
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

void write_tsv(std::ostream& out, const SparseLaplacian& L) {
    out.precision(17);
    for (const auto& e : L.edges) out << e.u << '\t' << e.v << '\t' << e.w << '\n';
}

SparseLaplacian read_tsv(std::istream& in, int n_hint) {
    SparseLaplacian L;
    std::string line;
    int lineno = 0;
    int max_v = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos || line[pos] == '#') continue;
        std::istringstream ls(line);
        long long u = 0, v = 0;
        double w = 0.0;
        std::string extra;
        if (!(ls >> u >> v >> w) || (ls >> extra)) {
            throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": expected 'u<TAB>v<TAB>weight'");
        }
        if (u < 0 || v < 0 || u == v || !(w > 0.0) || !std::isfinite(w)) {
            throw Error(ErrorKind::Parse, "line " + std::to_string(lineno) + ": invalid edge");
        }
        L.edges.push_back({static_cast<int>(u), static_cast<int>(v), w});
        max_v = std::max<int>(max_v, static_cast<int>(std::max(u, v)));
    }
    L.n = std::max(n_hint, max_v + 1);
    L.normalize();
    return L;
}

SparseLaplacian read_tsv_file(const std::string& path, int n_hint) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return read_tsv(in, n_hint);
}

Partition mutual_refinement(const Partition& P, const Partition& A) {
    if (P.n != A.n) throw Error(ErrorKind::InvalidArgument, "partitions over different ground sets");
    std::vector<int> verts;
    for (int v = 0; v < P.n; ++v)
        if (P.membership[v] && A.membership[v]) verts.push_back(v);
    auto key = [&](int v) { return std::make_pair(P.membership[v], A.membership[v]); };
    std::stable_sort(verts.begin(), verts.end(), [&](int a, int b) { return key(a) < key(b); });
    Partition out;
    out.n = P.n;
    out.membership.assign(P.n, 0);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        if (i == 0 || key(verts[i]) != key(verts[i - 1])) out.pieces.emplace_back();
        out.pieces.back().push_back(verts[i]);
        out.membership[verts[i]] = static_cast<int>(out.pieces.size());
    }
    return out;
}

void add_clique_matvec(const std::vector<int>& piece, double weight, const VectorXd& u, VectorXd& out) {
    if (piece.size() < 2) return;
    double sum = 0.0;
    for (int v : piece) sum += u(v);
    const double k = static_cast<double>(piece.size());
    for (int v : piece) out(v) += weight * (k * u(v) - sum);
}

VectorXd soc_matvec(const SocRep& v, const VectorXd& u) {
    VectorXd out = VectorXd::Zero(v.n);
    for (const auto& term : v.terms)
        for (const auto& piece : term.part.pieces) add_clique_matvec(piece, term.weight, u, out);
    return out;
}

VectorXd soc_masked_matvec(const SocRep& v, const AsocRep& a, const VectorXd& u) {
    if (a.n() != v.n) throw Error(ErrorKind::InvalidArgument, "mask size does not match SOC");
    VectorXd out = VectorXd::Zero(v.n);
    std::vector<int> buf;
    for (const auto& term : v.terms) {
        // cliques of P_j restricted to S, minus cliques of the refinement with the mask pieces
        for (const auto& piece : term.part.pieces) {
            buf.clear();
            for (int x : piece)
                if (a.pieces.contains(x)) buf.push_back(x);
            add_clique_matvec(buf, term.weight, u, out);
        }
        const Partition inner = mutual_refinement(term.part, a.pieces);
        for (const auto& piece : inner.pieces) add_clique_matvec(piece, -term.weight, u, out);
    }
    return out;
}

MatrixXd materialize_weights(const SocRep& v, const AsocRep* a, int cap) {
    if (v.n > cap) throw Error(ErrorKind::DenseCapExceeded, "n exceeds dense cap");
    MatrixXd W = MatrixXd::Zero(v.n, v.n);
    for (const auto& term : v.terms) {
        for (const auto& piece : term.part.pieces) {
            for (std::size_t i = 0; i < piece.size(); ++i) {
                for (std::size_t j = i + 1; j < piece.size(); ++j) {
                    const int x = piece[i], y = piece[j];
                    if (a && !a->active(x, y)) continue;
                    W(x, y) += term.weight;
                    W(y, x) += term.weight;
                }
            }
        }
    }
    return W;
}

MatrixXd laplacian_of_weights(const MatrixXd& W) {
    MatrixXd L = -W;
    L.diagonal() = W.rowwise().sum() - W.diagonal();
    return L;
}

MatrixXd materialize_dense(const SocRep& v, const AsocRep* a, int cap) {
    return laplacian_of_weights(materialize_weights(v, a, cap));
}

std::vector<int> balanced_split(const std::vector<long long>& sizes) {
    long long Z = 0;
    for (auto s : sizes) {
        if (s <= 0) throw Error(ErrorKind::InvalidArgument, "sizes must be positive");
        Z += s;
    }
    for (auto s : sizes) {
        if (3 * s > Z) throw Error(ErrorKind::PrerequisiteViolated, "an element exceeds a third of the total");
    }
    std::vector<int> chosen;
    long long sum = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (3 * (sum + sizes[i]) > 2 * Z) break;
        sum += sizes[i];
        chosen.push_back(static_cast<int>(i));
    }
    return chosen;
}

SparseLaplacian sparsify_bipartite(int n, const std::vector<int>& left, const std::vector<int>& right, double delta,
                                   Rng& rng, const BipartiteOptions& opt) {
    if (left.empty() || right.empty()) throw Error(ErrorKind::InvalidArgument, "bipartition sides must be nonempty");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must be in (0,1)");
    const double V = static_cast<double>(left.size() + right.size());
    const auto m = static_cast<long long>(std::ceil(opt.C * V * std::log(V / delta)));
    std::unordered_map<long long, long long> counts;
    counts.reserve(static_cast<std::size_t>(std::min<long long>(m, static_cast<long long>(left.size() * right.size()))) * 2);
    const auto nr = static_cast<long long>(right.size());
    for (long long s = 0; s < m; ++s) {
        const auto i = static_cast<long long>(rng.below(left.size()));
        const auto j = static_cast<long long>(rng.below(right.size()));
        ++counts[i * nr + j];
    }
    SparseLaplacian out;
    out.n = n;
    out.edges.reserve(counts.size());
    const double pairs = static_cast<double>(left.size()) * static_cast<double>(right.size());
    for (const auto& [key, cnt] : counts) {
        const int u = left[key / nr], v = right[key % nr];
        out.edges.push_back({u, v, (static_cast<double>(cnt) * pairs) / static_cast<double>(m)});
    }
    out.normalize();
    return out;
}

namespace {

void clique_asoc_rec(std::vector<std::vector<int>> pieces, double delta_call, Rng& rng, const BipartiteOptions& opt,
                     SparseLaplacian& out) {
    while (pieces.size() >= 2) {
        long long Z = 0;
        std::size_t big = 0;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            Z += static_cast<long long>(pieces[i].size());
            if (pieces[i].size() > pieces[big].size()) big = i;
        }
        if (3 * static_cast<long long>(pieces[big].size()) > Z) {
            std::vector<int> rest;
            std::vector<std::vector<int>> others;
            for (std::size_t i = 0; i < pieces.size(); ++i) {
                if (i == big) continue;
                rest.insert(rest.end(), pieces[i].begin(), pieces[i].end());
                others.push_back(std::move(pieces[i]));
            }
            out.append(sparsify_bipartite(out.n, pieces[big], rest, delta_call, rng, opt));
            pieces = std::move(others);
            continue;
        }
        std::vector<long long> sizes;
        for (const auto& p : pieces) sizes.push_back(static_cast<long long>(p.size()));
        const auto chosen = balanced_split(sizes);
        std::vector<char> in_left(pieces.size(), 0);
        for (int i : chosen) in_left[i] = 1;
        std::vector<std::vector<int>> lp, rp;
        std::vector<int> lv, rv;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            auto& dst = in_left[i] ? lv : rv;
            dst.insert(dst.end(), pieces[i].begin(), pieces[i].end());
            (in_left[i] ? lp : rp).push_back(std::move(pieces[i]));
        }
        out.append(sparsify_bipartite(out.n, lv, rv, delta_call, rng, opt));
        clique_asoc_rec(std::move(lp), delta_call, rng, opt, out);
        pieces = std::move(rp);
    }
}

}  // namespace

SparseLaplacian sparsify_clique_asoc(const Partition& pieces, double delta, Rng& rng, const BipartiteOptions& opt) {
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must be in (0,1)");
    SparseLaplacian out;
    out.n = pieces.n;
    const int s = pieces.support_size();
    if (pieces.pieces.size() < 2) return out;
    clique_asoc_rec(pieces.pieces, delta / s, rng, opt, out);
    out.normalize();
    return out;
}

}  // namespace forster::soc
