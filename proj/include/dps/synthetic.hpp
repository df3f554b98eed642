#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "dps/graph.hpp"
#include "dps/rng.hpp"

namespace dps {

// ---------------------------------------------------------------------------
// Motif and base topologies
// ---------------------------------------------------------------------------

enum class BaseKind { tree = 0, ladder = 1, wheel = 2 };
enum class MotifKind { cycle = 0, house = 1, crane = 2 };

struct MotifSpec {
    int base_lo = 8;
    int base_hi = 15;
    int feat_dim = 4;
    double feat_noise = 0.1;  // label-free by construction
};

struct Topology {
    int n = 0;
    std::vector<std::array<int, 2>> edges;
};

/// Cycle: C5. House: C5 plus one chord (5 nodes, 6 edges). Crane: a 5-node
/// path with a sixth node closing one triangle (6 nodes, 6 edges).
inline Topology motif_topology(MotifKind kind) {
    switch (kind) {
        case MotifKind::cycle:
            return {5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}}};
        case MotifKind::house:
            return {5, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {2, 4}, {3, 4}}};
        default:
            return {6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {3, 5}, {4, 5}}};
    }
}

inline Topology base_topology(BaseKind kind, int size, RngStream& rng) {
    Topology t;
    switch (kind) {
        case BaseKind::tree: {
            t.n = std::max(2, size);
            for (int v = 1; v < t.n; ++v) {
                const int parent = static_cast<int>(rng.uniform_int(0, v - 1));
                t.edges.push_back({parent, v});
            }
            break;
        }
        case BaseKind::ladder: {
            const int rail = std::max(2, size / 2);
            t.n = 2 * rail;
            for (int i = 0; i + 1 < rail; ++i) {
                t.edges.push_back({i, i + 1});
                t.edges.push_back({rail + i, rail + i + 1});
            }
            for (int i = 0; i < rail; ++i) t.edges.push_back({i, rail + i});
            break;
        }
        default: {  // wheel: hub 0 plus a rim cycle
            t.n = std::max(4, size);
            for (int v = 1; v < t.n; ++v) {
                t.edges.push_back({0, v});
                t.edges.push_back({v, v + 1 < t.n ? v + 1 : 1});
            }
            // dedupe the closing rim edge orientation
            for (auto& e : t.edges)
                if (e[0] > e[1]) std::swap(e[0], e[1]);
            std::sort(t.edges.begin(), t.edges.end());
            t.edges.erase(std::unique(t.edges.begin(), t.edges.end()), t.edges.end());
            break;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Spurious-Motif
// ---------------------------------------------------------------------------

/// One base attached to one motif by a single bridge edge. Label = motif
/// class, uniform over {0,1,2}. When `biased`, the base kind follows
/// P(S) = b*1(S=C) + (1-b)/2*1(S!=C); otherwise it is uniform. The base kind
/// is recorded in `domain`. Node features are a constant vector plus small
/// noise: topology is the only label signal.
inline std::vector<LabeledGraph> gen_spurious_motif(int n_graphs, double b, bool biased,
                                                    std::uint64_t seed,
                                                    const MotifSpec& spec = {}) {
    if (!(b >= 1.0 / 3.0 - 1e-12) || !(b <= 1.0))
        throw std::invalid_argument("gen_spurious_motif: bias must lie in [1/3, 1], got " +
                                    std::to_string(b));
    if (spec.base_lo < 4 || spec.base_hi < spec.base_lo)
        throw std::invalid_argument("gen_spurious_motif: bad base size range");
    RngStream rng = RngStream(seed).derive(7001);
    std::vector<LabeledGraph> out;
    out.reserve(static_cast<std::size_t>(n_graphs));
    for (int i = 0; i < n_graphs; ++i) {
        const int label = static_cast<int>(rng.uniform_int(0, 2));
        int base_kind;
        if (biased) {
            if (rng.uniform() < b) {
                base_kind = label;
            } else {
                const int other = static_cast<int>(rng.uniform_int(0, 1));
                base_kind = (label + 1 + other) % 3;
            }
        } else {
            base_kind = static_cast<int>(rng.uniform_int(0, 2));
        }
        const int base_size = static_cast<int>(rng.uniform_int(spec.base_lo, spec.base_hi));
        Topology base = base_topology(static_cast<BaseKind>(base_kind), base_size, rng);
        Topology motif = motif_topology(static_cast<MotifKind>(label));

        LabeledGraph g;
        g.n = base.n + motif.n;
        g.y = label;
        g.domain = base_kind;
        g.edges = base.edges;
        for (const auto& e : motif.edges) g.edges.push_back({e[0] + base.n, e[1] + base.n});
        const int bridge_base = static_cast<int>(rng.uniform_int(0, base.n - 1));
        const int bridge_motif = base.n + static_cast<int>(rng.uniform_int(0, motif.n - 1));
        g.edges.push_back({bridge_base, bridge_motif});
        g.feat_dim = spec.feat_dim;
        g.x.reserve(static_cast<std::size_t>(g.n) * spec.feat_dim);
        for (int v = 0; v < g.n * spec.feat_dim; ++v)
            g.x.push_back(1.0 + spec.feat_noise * rng.normal());
        out.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Size-shift split
// ---------------------------------------------------------------------------

struct SizeSplit {
    std::vector<LabeledGraph> train, val, test;
    int dropped = 0;
};

/// Partition by node count: train n < train_max, val in [val_lo, val_hi],
/// test n > test_min. Graphs falling in gaps are dropped and counted.
inline SizeSplit size_shift_split(const std::vector<LabeledGraph>& graphs, int train_max,
                                  std::pair<int, int> val_range, int test_min) {
    if (!(train_max <= val_range.first) || !(val_range.second <= test_min))
        throw std::invalid_argument("size_shift_split: inconsistent thresholds");
    SizeSplit s;
    for (const auto& g : graphs) {
        if (g.n < train_max) s.train.push_back(g);
        else if (g.n >= val_range.first && g.n <= val_range.second) s.val.push_back(g);
        else if (g.n > test_min) s.test.push_back(g);
        else ++s.dropped;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Linearly separable sanity set
// ---------------------------------------------------------------------------

/// Two classes; channel 0 of every node carries the class sign plus bounded
/// noise, so the sign of the mean feature is a perfect linear rule.
inline std::vector<LabeledGraph> gen_sanity_linear(int n_graphs, std::uint64_t seed,
                                                   int feat_dim = 4) {
    if (feat_dim < 1) throw std::invalid_argument("gen_sanity_linear: feat_dim must be >= 1");
    RngStream rng = RngStream(seed).derive(7002);
    std::vector<LabeledGraph> out;
    out.reserve(static_cast<std::size_t>(n_graphs));
    for (int i = 0; i < n_graphs; ++i) {
        LabeledGraph g;
        g.y = rng.bernoulli(0.5) ? 1 : 0;
        g.n = static_cast<int>(rng.uniform_int(3, 6));
        for (int v = 0; v + 1 < g.n; ++v) g.edges.push_back({v, v + 1});
        g.feat_dim = feat_dim;
        const double sign = g.y == 1 ? 1.0 : -1.0;
        for (int v = 0; v < g.n; ++v) {
            g.x.push_back(sign + rng.uniform(-0.3, 0.3));
            for (int f = 1; f < feat_dim; ++f) g.x.push_back(rng.uniform(-0.5, 0.5));
        }
        out.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multi-domain node classification
// ---------------------------------------------------------------------------

/// Block-structured node dataset. Channel 0 carries a stable (noisy) label
/// signal everywhere; channel 1 aligns with the label with probability
/// (1+s)/2 in train/val domains and is sign-randomized in test domains.
/// Whole domains are assigned to train/val/test.
inline NodeDataset gen_node_domains(int n_per_domain, int n_domains, double spurious_strength,
                                    std::uint64_t seed) {
    if (n_domains < 2) throw std::invalid_argument("gen_node_domains: need >= 2 domains");
    if (n_per_domain < 4) throw std::invalid_argument("gen_node_domains: need >= 4 nodes per domain");
    if (spurious_strength < 0.0 || spurious_strength > 1.0)
        throw std::invalid_argument("gen_node_domains: spurious_strength must be in [0,1]");
    RngStream rng = RngStream(seed).derive(7003);
    NodeDataset ds;
    ds.n = n_per_domain * n_domains;
    ds.feat_dim = 4;
    const double align_p = (1.0 + spurious_strength) / 2.0;
    for (int d = 0; d < n_domains; ++d) {
        Split split;
        if (n_domains >= 3)
            split = d < n_domains - 2 ? Split::train
                                      : (d == n_domains - 2 ? Split::val : Split::test);
        else
            split = d == 0 ? Split::train : Split::test;  // 2 domains: odd nodes become val
        const bool test_domain = split == Split::test;
        for (int i = 0; i < n_per_domain; ++i) {
            Split node_split = split;
            if (n_domains == 2 && d == 0 && i % 5 == 4) node_split = Split::val;
            const int y = rng.bernoulli(0.5) ? 1 : 0;
            const double ysign = y == 1 ? 1.0 : -1.0;
            ds.labels.push_back(y);
            ds.split.push_back(node_split);
            ds.domain.push_back(d);
            ds.x.push_back(0.8 * ysign + 0.8 * rng.normal());  // stable channel
            const double spur_sign =
                test_domain ? (rng.bernoulli(0.5) ? 1.0 : -1.0)
                            : (rng.bernoulli(align_p) ? ysign : -ysign);
            ds.x.push_back(spur_sign + 0.3 * rng.normal());    // spurious channel
            ds.x.push_back(0.5 * rng.normal());
            ds.x.push_back(0.5 * rng.normal());
        }
        // intra-domain edges with label homophily
        const double p_same = std::min(0.9, 6.0 / n_per_domain);
        const double p_diff = std::min(0.9, 1.5 / n_per_domain);
        const int off = d * n_per_domain;
        for (int u = 0; u < n_per_domain; ++u)
            for (int v = u + 1; v < n_per_domain; ++v) {
                const bool same = ds.labels[static_cast<std::size_t>(off + u)] ==
                                  ds.labels[static_cast<std::size_t>(off + v)];
                if (rng.uniform() < (same ? p_same : p_diff))
                    ds.edges.push_back({off + u, off + v});
            }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Chi-square checks (dataset statistics)
// ---------------------------------------------------------------------------

struct ChiSquare {
    double stat = 0.0;
    int df = 0;
    double critical = 0.0;  // at significance 0.01
    bool pass = false;
};

inline double chi_square_critical_001(int df) {
    switch (df) {
        case 1: return 6.6349;
        case 2: return 9.2103;
        case 3: return 11.3449;
        case 4: return 13.2767;
        case 6: return 16.8119;
        case 8: return 20.0902;
        default: throw std::invalid_argument("chi_square_critical_001: df " +
                                             std::to_string(df) + " not tabulated");
    }
}

/// Goodness of fit of the base-given-motif table against
/// P(S|C) = b*1(S=C) + (1-b)/2*1(S!=C), conditioning on observed class counts.
inline ChiSquare chi_square_gof_bias(const std::vector<LabeledGraph>& graphs, double b) {
    double counts[3][3] = {};
    for (const auto& g : graphs) counts[g.y][g.domain] += 1.0;
    ChiSquare r;
    r.df = 6;
    for (int c = 0; c < 3; ++c) {
        double nc = counts[c][0] + counts[c][1] + counts[c][2];
        if (nc == 0.0) continue;
        for (int s = 0; s < 3; ++s) {
            const double p = s == c ? b : (1.0 - b) / 2.0;
            const double expect = nc * p;
            r.stat += (counts[c][s] - expect) * (counts[c][s] - expect) / expect;
        }
    }
    r.critical = chi_square_critical_001(r.df);
    r.pass = r.stat <= r.critical;
    return r;
}

/// Independence of base kind and label on a 3x3 contingency table.
inline ChiSquare chi_square_independence(const std::vector<LabeledGraph>& graphs) {
    double counts[3][3] = {};
    double row[3] = {}, col[3] = {}, total = 0.0;
    for (const auto& g : graphs) {
        counts[g.y][g.domain] += 1.0;
        row[g.y] += 1.0;
        col[g.domain] += 1.0;
        total += 1.0;
    }
    ChiSquare r;
    r.df = 4;
    for (int c = 0; c < 3; ++c)
        for (int s = 0; s < 3; ++s) {
            const double expect = row[c] * col[s] / total;
            if (expect > 0.0)
                r.stat += (counts[c][s] - expect) * (counts[c][s] - expect) / expect;
        }
    r.critical = chi_square_critical_001(r.df);
    r.pass = r.stat <= r.critical;
    return r;
}

inline bool is_connected(int n, const std::vector<std::array<int, 2>>& edges) {
    if (n <= 1) return true;
    auto adj = adjacency_list(n, edges);
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<int> stack = {0};
    seen[0] = true;
    int visited = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(u)])
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = true;
                ++visited;
                stack.push_back(w);
            }
    }
    return visited == n;
}

}  // namespace dps
