#pragma once

#include "forster/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <string>
#include <vector>

namespace forster::soc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Ordered decomposition of a vertex subset S of [n]. membership[v] is 0 when
// v is not in S, otherwise 1 + index of its piece.
struct Partition {
    int n = 0;
    std::vector<std::vector<int>> pieces;
    std::vector<int> membership;

    // Empty pieces are dropped. Throws InvalidArgument on overlap or range errors.
    static Partition from_pieces(int n, std::vector<std::vector<int>> pieces);
    // labels[v] < 0 means absent; pieces ordered by increasing label
    static Partition from_labels(const std::vector<long long>& labels);
    // one piece holding all of [n]
    static Partition whole(int n);
    // every vertex of [n] in its own piece
    static Partition singletons(int n);

    std::vector<int> support() const;
    int support_size() const;
    bool contains(int v) const { return membership[v] != 0; }
    bool same_piece(int u, int v) const { return membership[u] != 0 && membership[u] == membership[v]; }
    void validate() const;
};

struct SocTerm {
    double weight = 0.0;
    Partition part;
};

// Weighted sum of clique Laplacians: sum_j w_j sum_{S in P_j} L_S.
struct SocRep {
    int n = 0;
    std::vector<SocTerm> terms;

    void add(double weight, Partition part);
    void validate() const;
};

// Edge mask: 1 on pairs inside S that lie in different pieces.
struct AsocRep {
    Partition pieces;  // S is the support of this partition

    static AsocRep full(int n) { return AsocRep{Partition::singletons(n)}; }
    int n() const { return pieces.n; }
    bool active(int u, int v) const {
        return u != v && pieces.contains(u) && pieces.contains(v) && !pieces.same_piece(u, v);
    }
    // number of active pairs
    double mass() const;
};

struct Edge {
    int u = 0;
    int v = 0;
    double w = 0.0;
};

// Explicit weighted graph with Laplacian semantics.
struct SparseLaplacian {
    int n = 0;
    std::vector<Edge> edges;

    // merge duplicates, orient u < v, drop self loops and zero weights, sort
    void normalize();
    void validate() const;
    void append(const SparseLaplacian& other, double scale = 1.0);
    void scale(double f);
    double total_weight() const;
    std::size_t nnz() const { return edges.size(); }

    VectorXd matvec(const VectorXd& x) const;
    MatrixXd dense(int cap = 5000) const;
    Eigen::SparseMatrix<double> sparse() const;
};

void write_tsv(std::ostream& out, const SparseLaplacian& L);
SparseLaplacian read_tsv(std::istream& in, int n_hint = 0);
SparseLaplacian read_tsv_file(const std::string& path, int n_hint = 0);

Partition mutual_refinement(const Partition& P, const Partition& A);

// L_S u for one clique, accumulated into out
void add_clique_matvec(const std::vector<int>& piece, double weight, const VectorXd& u, VectorXd& out);

VectorXd soc_matvec(const SocRep& v, const VectorXd& u);
VectorXd soc_masked_matvec(const SocRep& v, const AsocRep& a, const VectorXd& u);

// Explicit Laplacian, n <= cap.
MatrixXd materialize_dense(const SocRep& v, const AsocRep* a = nullptr, int cap = 500);
// Symmetric weight matrix (zero diagonal) of v o a, n <= cap.
MatrixXd materialize_weights(const SocRep& v, const AsocRep* a = nullptr, int cap = 5000);

// Greedy prefix with sum in [Z/3, 2Z/3]; 0-based indices.
std::vector<int> balanced_split(const std::vector<long long>& sizes);

struct BipartiteOptions {
    double C = 9.0;  // sample count constant
};

SparseLaplacian sparsify_bipartite(int n, const std::vector<int>& left, const std::vector<int>& right, double delta,
                                   Rng& rng, const BipartiteOptions& opt = {});
// Sparsifies the complete multipartite graph on S with the given pieces.
SparseLaplacian sparsify_clique_asoc(const Partition& pieces, double delta, Rng& rng,
                                     const BipartiteOptions& opt = {});

// Laplacian of a symmetric weight matrix
MatrixXd laplacian_of_weights(const MatrixXd& W);

}  // namespace forster::soc
