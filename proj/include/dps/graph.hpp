#pragma once

#include <algorithm>
#include <array>
#include <queue>
#include <string>
#include <vector>

#include "dps/ops.hpp"
#include "dps/tensor.hpp"

namespace dps {

/// Undirected simple graph with node features and one class label.
/// Edges are stored once, canonically (u < v); no self-loops.
struct LabeledGraph {
    int n = 0;
    std::vector<std::array<int, 2>> edges;
    std::vector<double> x;  // n * feat_dim, row-major
    int feat_dim = 0;
    int y = 0;
    int domain = -1;
    int center = -1;  // set by ego_graph; -1 otherwise
};

enum class Split { train, val, test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

/// One large graph with per-node labels, split masks, and domain tags.
struct NodeDataset {
    int n = 0;
    std::vector<std::array<int, 2>> edges;
    std::vector<double> x;
    int feat_dim = 0;
    std::vector<int> labels;
    std::vector<Split> split;
    std::vector<int> domain;

    std::vector<std::size_t> split_indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }
};

/// Per-node or per-edge keep weights in [0,1]; the sampled values live in a
/// Tensor so relaxed masks stay differentiable.
struct Mask {
    enum class Kind { node, edge };
    Kind kind = Kind::node;
    Tensor values;
};

namespace detail {

inline void validate_edges(int n, const std::vector<std::array<int, 2>>& edges,
                           const std::string& where) {
    for (const auto& e : edges) {
        if (e[0] < 0 || e[1] < 0 || e[0] >= n || e[1] >= n)
            throw std::invalid_argument(where + ": edge (" + std::to_string(e[0]) + "," +
                                        std::to_string(e[1]) + ") out of range (n=" +
                                        std::to_string(n) + ")");
        if (e[0] == e[1])
            throw std::invalid_argument(where + ": self-loop at node " + std::to_string(e[0]));
    }
}

}  // namespace detail

inline std::vector<std::vector<int>> adjacency_list(int n,
                                                    const std::vector<std::array<int, 2>>& edges) {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& e : edges) {
        adj[static_cast<std::size_t>(e[0])].push_back(e[1]);
        adj[static_cast<std::size_t>(e[1])].push_back(e[0]);
    }
    return adj;
}

inline Tensor adjacency_tensor(int n, const std::vector<std::array<int, 2>>& edges) {
    detail::validate_edges(n, edges, "adjacency_tensor");
    const std::size_t un = static_cast<std::size_t>(n);
    Tensor a = Tensor::zeros({un, un});
    for (const auto& e : edges) {
        a.mutable_data()[static_cast<std::size_t>(e[0]) * un + static_cast<std::size_t>(e[1])] = 1.0;
        a.mutable_data()[static_cast<std::size_t>(e[1]) * un + static_cast<std::size_t>(e[0])] = 1.0;
    }
    return a;
}

inline Tensor adjacency_tensor(const LabeledGraph& g) { return adjacency_tensor(g.n, g.edges); }

inline Tensor features_tensor(const LabeledGraph& g) {
    return Tensor::from({static_cast<std::size_t>(g.n), static_cast<std::size_t>(g.feat_dim)},
                        g.x);
}

inline Tensor features_tensor(const NodeDataset& ds) {
    return Tensor::from({static_cast<std::size_t>(ds.n), static_cast<std::size_t>(ds.feat_dim)},
                        ds.x);
}

/// GCN renormalization: D^{-1/2} (A + I) D^{-1/2} with D the degree of A + I.
/// Differentiable in the entries of `a`, so it accepts mask-reweighted
/// adjacencies. Isolated nodes keep their self-loop (row reduces to e_v).
inline Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw std::invalid_argument("normalize_adjacency: adjacency must be square, got " +
                                    detail::shape_str(a.shape()));
    const std::size_t n = a.dim(0);
    for (std::size_t i = 0; i < n; ++i) {
        if (a.data()[i * n + i] != 0.0)
            throw std::invalid_argument("normalize_adjacency: nonzero diagonal at node " +
                                        std::to_string(i));
        for (std::size_t j = i + 1; j < n; ++j)
            if (a.data()[i * n + j] != a.data()[j * n + i])
                throw std::invalid_argument("normalize_adjacency: asymmetric at (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
    }
    Tensor eye = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.mutable_data()[i * n + i] = 1.0;
    Tensor a_loop = add(a, eye);
    Tensor deg = row_sums(a_loop);                        // >= 1 by the self-loop
    Tensor dinv = exp(scalar_mul(log(deg), -0.5));        // deg^{-1/2}
    return mul(mul(broadcast_cols(dinv, n), a_loop), broadcast_rows(dinv, n));
}

inline Tensor normalize_adjacency(const LabeledGraph& g) {
    return normalize_adjacency(adjacency_tensor(g));
}

/// Node-mask semantics on the adjacency: A'[u][v] = m[u] * m[v] * A[u][v].
/// With hard 0/1 masks the renormalized A' reproduces physical node deletion.
inline Tensor node_masked_adjacency(const Tensor& a, const Tensor& m) {
    if (m.rank() != 1 || m.size() != a.dim(0))
        throw std::invalid_argument("node_masked_adjacency: mask length " +
                                    std::to_string(m.size()) + " for " +
                                    detail::shape_str(a.shape()));
    const std::size_t n = a.dim(0);
    return mul(mul(broadcast_cols(m, n), a), broadcast_rows(m, n));
}

/// Masked features diag(m) * X. The same mask must also be handed to the
/// backbone so outgoing messages are rescaled per layer.
inline Tensor apply_node_mask(const LabeledGraph& g, const Mask& m) {
    if (m.kind != Mask::Kind::node)
        throw std::invalid_argument("apply_node_mask: mask kind is not node");
    if (m.values.size() != static_cast<std::size_t>(g.n))
        throw std::invalid_argument("apply_node_mask: mask length " +
                                    std::to_string(m.values.size()) + " for n=" +
                                    std::to_string(g.n));
    return row_scale(features_tensor(g), m.values);
}

/// Edge-mask semantics: A'[u][v] = m_uv * A[u][v], symmetric by construction;
/// callers renormalize the result.
inline Tensor apply_edge_mask(const NodeDataset& ds, const Mask& m) {
    if (m.kind != Mask::Kind::edge)
        throw std::invalid_argument("apply_edge_mask: mask kind is not edge");
    if (m.values.size() != ds.edges.size())
        throw std::invalid_argument("apply_edge_mask: mask length " +
                                    std::to_string(m.values.size()) + " for " +
                                    std::to_string(ds.edges.size()) + " edges");
    detail::validate_edges(ds.n, ds.edges, "apply_edge_mask");
    return edge_scatter(m.values, ds.edges, static_cast<std::size_t>(ds.n));
}

/// Induced subgraph over `keep` (ascending original node indices).
inline LabeledGraph induced_subgraph(int n, const std::vector<std::array<int, 2>>& edges,
                                     const std::vector<double>& x, int feat_dim, int y,
                                     const std::vector<int>& keep) {
    LabeledGraph out;
    out.n = static_cast<int>(keep.size());
    out.feat_dim = feat_dim;
    out.y = y;
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) remap[static_cast<std::size_t>(keep[i])] =
        static_cast<int>(i);
    for (const auto& e : edges) {
        const int a = remap[static_cast<std::size_t>(e[0])];
        const int b = remap[static_cast<std::size_t>(e[1])];
        if (a >= 0 && b >= 0) out.edges.push_back({std::min(a, b), std::max(a, b)});
    }
    std::sort(out.edges.begin(), out.edges.end());
    out.x.reserve(keep.size() * static_cast<std::size_t>(feat_dim));
    for (int v : keep)
        out.x.insert(out.x.end(), x.begin() + static_cast<std::size_t>(v) * feat_dim,
                     x.begin() + (static_cast<std::size_t>(v) + 1) * feat_dim);
    return out;
}

/// k-hop ego graph centered at v: exactly the nodes within k hops, induced
/// edges, and v's label; `center` marks v's index in the new graph.
inline LabeledGraph ego_graph(const NodeDataset& ds, int v, int k) {
    if (v < 0 || v >= ds.n)
        throw std::invalid_argument("ego_graph: node " + std::to_string(v) +
                                    " out of range (n=" + std::to_string(ds.n) + ")");
    if (k < 1) throw std::invalid_argument("ego_graph: hop count must be >= 1");
    auto adj = adjacency_list(ds.n, ds.edges);
    std::vector<int> dist(static_cast<std::size_t>(ds.n), -1);
    std::queue<int> q;
    dist[static_cast<std::size_t>(v)] = 0;
    q.push(v);
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        if (dist[static_cast<std::size_t>(u)] == k) continue;
        for (int w : adj[static_cast<std::size_t>(u)])
            if (dist[static_cast<std::size_t>(w)] < 0) {
                dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
                q.push(w);
            }
    }
    std::vector<int> keep;
    for (int u = 0; u < ds.n; ++u)
        if (dist[static_cast<std::size_t>(u)] >= 0) keep.push_back(u);
    LabeledGraph g = induced_subgraph(ds.n, ds.edges, ds.x, ds.feat_dim,
                                      ds.labels[static_cast<std::size_t>(v)], keep);
    g.center = static_cast<int>(std::lower_bound(keep.begin(), keep.end(), v) - keep.begin());
    return g;
}

}  // namespace dps
