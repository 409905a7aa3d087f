// Sparse graph construction: UI bipartite, sequence-item, and the frozen
// multimodal item-item graph, all under symmetric D^{-1/2} A D^{-1/2}
// normalization. CSR storage; propagation is a plain SpMM.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "musicrec/dataset.hpp"
#include "musicrec/interactions.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

enum class GraphKind { UI, SI, MM };

struct Triplet {
    int row;
    int col;
    double value;
};

// Compressed-row sparse matrix. Construction sorts and merges duplicates.
struct CsrMatrix {
    int dim = 0;
    std::vector<std::size_t> row_ptr;  // size dim+1
    std::vector<int> col;
    std::vector<double> val;

    std::size_t nnz() const { return col.size(); }

    static CsrMatrix from_triplets(int dim, std::vector<Triplet> t) {
        std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        CsrMatrix m;
        m.dim = dim;
        m.row_ptr.assign(static_cast<std::size_t>(dim) + 1, 0);
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (k > 0 && t[k].row == t[k - 1].row && t[k].col == t[k - 1].col) {
                m.val.back() += t[k].value;  // merge duplicates
                continue;
            }
            m.col.push_back(t[k].col);
            m.val.push_back(t[k].value);
            ++m.row_ptr[static_cast<std::size_t>(t[k].row) + 1];
        }
        for (int r = 0; r < dim; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
        return m;
    }

    // Y = A * X, X dense (dim x d).
    Mat multiply(const Mat& X) const {
        Mat Y = Mat::Zero(dim, X.cols());
        for (int r = 0; r < dim; ++r)
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                Y.row(r) += val[k] * X.row(col[k]);
        return Y;
    }

    Mat to_dense() const {
        Mat D = Mat::Zero(dim, dim);
        for (int r = 0; r < dim; ++r)
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) D(r, col[k]) = val[k];
        return D;
    }
};

struct NormalizedSparseGraph {
    CsrMatrix adj;
    GraphKind kind = GraphKind::UI;
    int dim() const { return adj.dim; }
};

// D^{-1/2} A D^{-1/2} with D = diag(A 1); zero-degree nodes keep all-zero rows.
inline CsrMatrix symmetric_normalize_csr(const CsrMatrix& adj) {
    std::vector<double> deg(adj.dim, 0.0);
    for (int r = 0; r < adj.dim; ++r)
        for (std::size_t k = adj.row_ptr[r]; k < adj.row_ptr[r + 1]; ++k) {
            if (adj.val[k] < 0.0) throw DataError("negative edge weight in adjacency");
            deg[r] += adj.val[k];
        }
    std::vector<double> dinv(adj.dim, 0.0);
    for (int r = 0; r < adj.dim; ++r)
        if (deg[r] > 0.0) dinv[r] = 1.0 / std::sqrt(deg[r]);

    CsrMatrix out = adj;
    for (int r = 0; r < adj.dim; ++r)
        for (std::size_t k = out.row_ptr[r]; k < out.row_ptr[r + 1]; ++k)
            out.val[k] = dinv[r] * adj.val[k] * dinv[out.col[k]];
    return out;
}

inline NormalizedSparseGraph symmetric_normalize(const CsrMatrix& adj, GraphKind kind) {
    return {symmetric_normalize_csr(adj), kind};
}

// (M+N)-node bipartite graph [[0, R], [R^T, 0]], normalized.
inline NormalizedSparseGraph build_ui_graph(const InteractionMatrix& R) {
    const int M = R.num_users, N = R.num_items;
    std::vector<Triplet> t;
    t.reserve(2 * R.nnz);
    for (int u = 0; u < M; ++u)
        for (int i : R.items_of_user[u]) {
            t.push_back({u, M + i, 1.0});
            t.push_back({M + i, u, 1.0});
        }
    return symmetric_normalize(CsrMatrix::from_triplets(M + N, std::move(t)), GraphKind::UI);
}

inline double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
    // both inputs sorted, distinct
    if (a.empty() && b.empty()) throw DataError("jaccard of two empty sets");
    std::size_t inter = 0, ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] == b[ib]) { ++inter; ++ia; ++ib; }
        else if (a[ia] < b[ib]) ++ia;
        else ++ib;
    }
    std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// (n_s + N)-node graph. SS edges between sequences with Jaccard >= tau_jac,
// weighted by the Jaccard value; SI edges of weight 1 from each sequence to
// its distinct items. An inverted index over items prunes the pairwise scan
// to sequence pairs that actually share an item.
inline NormalizedSparseGraph build_si_graph(const SequenceSet& seqs, double tau_jac) {
    const int n_s = static_cast<int>(seqs.items.size());
    const int N = seqs.num_items;
    std::vector<std::vector<int>> item_sets(n_s);
    for (int s = 0; s < n_s; ++s) {
        item_sets[s] = seqs.items[s];
        std::sort(item_sets[s].begin(), item_sets[s].end());
        item_sets[s].erase(std::unique(item_sets[s].begin(), item_sets[s].end()),
                           item_sets[s].end());
    }

    std::vector<Triplet> t;
    for (int s = 0; s < n_s; ++s)
        for (int i : item_sets[s]) {
            t.push_back({s, n_s + i, 1.0});
            t.push_back({n_s + i, s, 1.0});
        }

    std::vector<std::vector<int>> seqs_of_item(N);
    for (int s = 0; s < n_s; ++s)
        for (int i : item_sets[s]) seqs_of_item[i].push_back(s);

    std::set<std::pair<int, int>> candidates;
    for (int i = 0; i < N; ++i)
        for (std::size_t a = 0; a < seqs_of_item[i].size(); ++a)
            for (std::size_t b = a + 1; b < seqs_of_item[i].size(); ++b)
                candidates.insert({seqs_of_item[i][a], seqs_of_item[i][b]});

    for (const auto& [s1, s2] : candidates) {
        double j = jaccard(item_sets[s1], item_sets[s2]);
        if (j >= tau_jac && j > 0.0) {
            t.push_back({s1, s2, j});
            t.push_back({s2, s1, j});
        }
    }
    return symmetric_normalize(CsrMatrix::from_triplets(n_s + N, std::move(t)), GraphKind::SI);
}

// Unnormalized cosine-kNN adjacency over items: unit weights on kNN edges,
// symmetrized by union. Cosine ties break toward the lower item index.
// Zero-norm rows emit no outgoing edges.
inline CsrMatrix build_knn_graph(const FeatureMatrix& F, int k) {
    const int N = F.rows();
    if (k < 1 || k >= N) throw ConfigError("knn: k must satisfy 1 <= k < N");

    Vec norms(N);
    for (int i = 0; i < N; ++i) norms(i) = F.values.row(i).norm();

    std::set<std::pair<int, int>> edges;
    std::vector<std::pair<double, int>> scored;
    for (int i = 0; i < N; ++i) {
        if (norms(i) == 0.0) continue;
        scored.clear();
        for (int j = 0; j < N; ++j) {
            if (j == i || norms(j) == 0.0) continue;
            double cos = F.values.row(i).dot(F.values.row(j)) / (norms(i) * norms(j));
            scored.push_back({cos, j});
        }
        int keep = std::min<int>(k, static_cast<int>(scored.size()));
        std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(),
                          [](const auto& a, const auto& b) {
                              return a.first != b.first ? a.first > b.first : a.second < b.second;
                          });
        for (int r = 0; r < keep; ++r) {
            int j = scored[r].second;
            edges.insert({std::min(i, j), std::max(i, j)});
        }
    }

    std::vector<Triplet> t;
    t.reserve(2 * edges.size());
    for (const auto& [a, b] : edges) {
        t.push_back({a, b, 1.0});
        t.push_back({b, a, 1.0});
    }
    return CsrMatrix::from_triplets(N, std::move(t));
}

// A = alpha_v * A_v + (1 - alpha_v) * A_t over already-normalized inputs.
// The result is frozen for the lifetime of training.
inline NormalizedSparseGraph fuse_mm_graphs(const NormalizedSparseGraph& A_v,
                                            const NormalizedSparseGraph& A_t, double alpha_v) {
    if (A_v.dim() != A_t.dim()) throw DataError("mm fusion: dimension mismatch");
    std::vector<Triplet> t;
    t.reserve(A_v.adj.nnz() + A_t.adj.nnz());
    for (int r = 0; r < A_v.dim(); ++r)
        for (std::size_t k = A_v.adj.row_ptr[r]; k < A_v.adj.row_ptr[r + 1]; ++k)
            t.push_back({r, A_v.adj.col[k], alpha_v * A_v.adj.val[k]});
    for (int r = 0; r < A_t.dim(); ++r)
        for (std::size_t k = A_t.adj.row_ptr[r]; k < A_t.adj.row_ptr[r + 1]; ++k)
            t.push_back({r, A_t.adj.col[k], (1.0 - alpha_v) * A_t.adj.val[k]});
    NormalizedSparseGraph g;
    g.adj = CsrMatrix::from_triplets(A_v.dim(), std::move(t));
    g.kind = GraphKind::MM;
    return g;
}

// ----- cache format: magic "GRPH", u32 dim, u64 nnz, COO (u32,u32,f32) row-major -----

inline void save_graph(const std::string& path, const NormalizedSparseGraph& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write graph file: " + path);
    std::uint32_t dim = static_cast<std::uint32_t>(g.dim());
    std::uint64_t nnz = g.adj.nnz();
    out.write("GRPH", 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    out.write(reinterpret_cast<const char*>(&nnz), 8);
    for (int r = 0; r < g.dim(); ++r)
        for (std::size_t k = g.adj.row_ptr[r]; k < g.adj.row_ptr[r + 1]; ++k) {
            std::uint32_t i = static_cast<std::uint32_t>(r);
            std::uint32_t j = static_cast<std::uint32_t>(g.adj.col[k]);
            float v = static_cast<float>(g.adj.val[k]);
            out.write(reinterpret_cast<const char*>(&i), 4);
            out.write(reinterpret_cast<const char*>(&j), 4);
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
}

inline NormalizedSparseGraph load_graph(const std::string& path, GraphKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open graph file: " + path);
    char magic[4];
    std::uint32_t dim = 0;
    std::uint64_t nnz = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    in.read(reinterpret_cast<char*>(&nnz), 8);
    if (!in || std::memcmp(magic, "GRPH", 4) != 0)
        throw DataError("bad graph file header: " + path);
    std::vector<Triplet> t;
    t.reserve(nnz);
    for (std::uint64_t k = 0; k < nnz; ++k) {
        std::uint32_t i, j;
        float v;
        in.read(reinterpret_cast<char*>(&i), 4);
        in.read(reinterpret_cast<char*>(&j), 4);
        in.read(reinterpret_cast<char*>(&v), 4);
        t.push_back({static_cast<int>(i), static_cast<int>(j), static_cast<double>(v)});
    }
    if (!in) throw DataError("truncated graph file: " + path);
    NormalizedSparseGraph g;
    g.adj = CsrMatrix::from_triplets(static_cast<int>(dim), std::move(t));
    g.kind = kind;
    return g;
}

}  // namespace musicrec
