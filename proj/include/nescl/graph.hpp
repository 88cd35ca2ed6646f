#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nescl/common.hpp"
#include "nescl/dataset.hpp"
#include "nescl/mat.hpp"

namespace nescl {

// User-item bipartite graph over the joint node set. Users occupy node ids
// [0, m), items [m, m + n); public APIs take (user, item) ids and convert.
struct BipartiteGraph {
    std::uint32_t num_users = 0;
    std::uint32_t num_items = 0;
    // One entry per undirected edge: (user node, item node), sorted.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<std::uint32_t> degrees;  // size m + n

    std::size_t node_count() const {
        return static_cast<std::size_t>(num_users) + num_items;
    }
    std::uint32_t item_node(std::uint32_t item) const { return num_users + item; }
};

inline BipartiteGraph build_graph(const InteractionDataset& ds) {
    BipartiteGraph g;
    g.num_users = ds.num_users;
    g.num_items = ds.num_items;
    g.edges.reserve(ds.train_pairs.size());
    g.degrees.assign(g.node_count(), 0);
    for (const IdPair& p : ds.train_pairs) {
        const std::uint32_t u = p.first;
        const std::uint32_t v = g.item_node(p.second);
        g.edges.emplace_back(u, v);
        ++g.degrees[u];
        ++g.degrees[v];
    }
    return g;
}

struct DirectedEdge {
    std::uint32_t src;
    std::uint32_t dst;
    double weight;
};

// Both directions of every edge with the symmetric normalization 1/sqrt(d_i d_j).
inline std::vector<DirectedEdge> directed_edges(const BipartiteGraph& g) {
    std::vector<DirectedEdge> out;
    out.reserve(2 * g.edges.size());
    for (const auto& [u, v] : g.edges) {
        const double w = 1.0 / std::sqrt(static_cast<double>(g.degrees[u]) * g.degrees[v]);
        out.push_back({u, v, w});
        out.push_back({v, u, w});
    }
    return out;
}

enum class RenormMode { original, corrupted };

// Symmetric normalized adjacency in CSR form; the unit the propagation layer
// consumes, for both the full graph and corrupted views.
struct SparseAdj {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr;
    std::vector<std::uint32_t> col;
    std::vector<double> weight;

    std::size_t nnz() const { return col.size(); }
};

// Assembles the adjacency over a subset of the graph's undirected edges.
// RenormMode::corrupted recomputes degrees on the kept subgraph; ::original
// keeps the source graph's normalization.
inline SparseAdj build_adjacency(const BipartiteGraph& g,
                                 std::span<const std::uint32_t> kept_edges, RenormMode mode) {
    const std::size_t n = g.node_count();
    std::vector<std::uint32_t> deg;
    if (mode == RenormMode::corrupted) {
        deg.assign(n, 0);
        for (std::uint32_t e : kept_edges) {
            ++deg[g.edges[e].first];
            ++deg[g.edges[e].second];
        }
    }
    const std::vector<std::uint32_t>& d = (mode == RenormMode::corrupted) ? deg : g.degrees;

    SparseAdj a;
    a.n = n;
    a.row_ptr.assign(n + 1, 0);
    for (std::uint32_t e : kept_edges) {
        ++a.row_ptr[g.edges[e].first + 1];
        ++a.row_ptr[g.edges[e].second + 1];
    }
    for (std::size_t i = 0; i < n; ++i) a.row_ptr[i + 1] += a.row_ptr[i];
    a.col.resize(a.row_ptr[n]);
    a.weight.resize(a.row_ptr[n]);
    std::vector<std::size_t> cursor(a.row_ptr.begin(), a.row_ptr.end() - 1);
    // kept_edges is sorted and items outrank users, so columns come out sorted.
    for (std::uint32_t e : kept_edges) {
        const std::uint32_t u = g.edges[e].first;
        const std::uint32_t v = g.edges[e].second;
        const double w = 1.0 / std::sqrt(static_cast<double>(d[u]) * d[v]);
        a.col[cursor[u]] = v;
        a.weight[cursor[u]++] = w;
        a.col[cursor[v]] = u;
        a.weight[cursor[v]++] = w;
    }
    return a;
}

inline SparseAdj full_adjacency(const BipartiteGraph& g) {
    std::vector<std::uint32_t> all(g.edges.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    return build_adjacency(g, all, RenormMode::original);
}

// out = A * in
inline void spmm(const SparseAdj& a, const Mat& in, Mat& out) {
    if (in.rows != a.n) throw ShapeError("spmm: row count does not match node count");
    if (out.rows != a.n || out.cols != in.cols) out = Mat(a.n, in.cols);
    const std::size_t d = in.cols;
    for (std::size_t i = 0; i < a.n; ++i) {
        double* oi = out.row(i);
        std::fill(oi, oi + d, 0.0);
        for (std::size_t e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e)
            axpy(a.weight[e], in.row(a.col[e]), oi, d);
    }
}

}  // namespace nescl
