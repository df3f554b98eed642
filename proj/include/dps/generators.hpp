#pragma once

#include <string>
#include <vector>

#include "dps/backbone.hpp"
#include "dps/graph.hpp"
#include "dps/ops.hpp"
#include "dps/rng.hpp"

namespace dps {

/// One subgraph generator: a GNN encoder plus an MLP scoring head that emits
/// one keep-logit per node (node kind) or per edge (edge kind).
struct Generator {
    std::vector<GcnLayer> gcn;
    Mlp head;
};

struct GeneratorParams {
    std::vector<Generator> gens;
    Mask::Kind kind = Mask::Kind::node;
    int in_dim = 0;
    int hidden = 0;

    std::size_t count() const { return gens.size(); }
};

struct ConcreteSampleConfig {
    double temperature = 1.0;
    double prob_clamp = 1e-4;  // keep-probabilities stay in [eps, 1-eps]
    bool hard = false;         // straight-through 0/1 at evaluation
};

inline void validate(const ConcreteSampleConfig& cfg) {
    if (!(cfg.temperature > 0.0))
        throw std::invalid_argument("sample_concrete: temperature must be positive");
    if (!(cfg.prob_clamp > 0.0) || !(cfg.prob_clamp < 0.5))
        throw std::invalid_argument("sample_concrete: prob_clamp must be in (0, 0.5)");
}

/// K independent generators; each draws its weights from a derived stream so
/// no two share initialization.
inline GeneratorParams init_generators(int k, int in_dim, int hidden, Mask::Kind kind,
                                       int layers, RngStream& rng) {
    if (k < 1) throw std::invalid_argument("init_generators: K must be >= 1");
    GeneratorParams gp;
    gp.kind = kind;
    gp.in_dim = in_dim;
    gp.hidden = hidden;
    const int head_in = kind == Mask::Kind::edge ? 2 * hidden : hidden;
    for (int i = 0; i < k; ++i) {
        RngStream sub = rng.derive(static_cast<std::uint64_t>(i) + 101);
        Generator g;
        int d = in_dim;
        for (int l = 0; l < layers; ++l) {
            g.gcn.push_back({detail::glorot(static_cast<std::size_t>(d),
                                            static_cast<std::size_t>(hidden), sub),
                             Tensor::zeros({1, static_cast<std::size_t>(hidden)})});
            d = hidden;
        }
        g.head = init_mlp(head_in, hidden, 1, sub);
        gp.gens.push_back(std::move(g));
    }
    return gp;
}

namespace detail {

inline const Generator& generator_at(const GeneratorParams& gp, std::size_t gen) {
    if (gen >= gp.gens.size())
        throw std::invalid_argument("generator index " + std::to_string(gen) + " out of range (K=" +
                                    std::to_string(gp.gens.size()) + ")");
    return gp.gens[gen];
}

inline Tensor clamp_probs(const Tensor& scores, double eps) {
    return clamp(sigmoid(scores), eps, 1.0 - eps);
}

}  // namespace detail

/// Cached-forward variant: `ahat` is the prenormalized raw adjacency.
inline Tensor node_probs_from(const Tensor& ahat, const Tensor& x, const GeneratorParams& gp,
                              std::size_t gen, double eps = 1e-4) {
    const Generator& gn = detail::generator_at(gp, gen);
    Tensor h = gcn_forward(ahat, x, std::nullopt, gn.gcn);
    Tensor scores = reshape(mlp_forward(h, gn.head), {x.dim(0)});
    return detail::clamp_probs(scores, eps);
}

/// Per-node keep-probabilities p_v = clamp(Sigmoid(MLP(h_v)), eps, 1-eps),
/// with h_v from the generator's own GNN on the raw graph.
inline Tensor node_probs(const LabeledGraph& g, const GeneratorParams& gp, std::size_t gen,
                         double eps = 1e-4) {
    return node_probs_from(normalize_adjacency(g), features_tensor(g), gp, gen, eps);
}

/// Cached-forward variant over an explicit edge list.
inline Tensor edge_probs_from(const Tensor& ahat, const Tensor& x,
                              const std::vector<std::array<int, 2>>& edges,
                              const GeneratorParams& gp, std::size_t gen, double eps = 1e-4) {
    const Generator& gn = detail::generator_at(gp, gen);
    if (edges.empty()) throw std::invalid_argument("edge_probs: dataset has no edges");
    Tensor h = gcn_forward(ahat, x, std::nullopt, gn.gcn);
    std::vector<std::size_t> lo, hi;
    lo.reserve(edges.size());
    hi.reserve(edges.size());
    for (const auto& e : edges) {
        lo.push_back(static_cast<std::size_t>(std::min(e[0], e[1])));
        hi.push_back(static_cast<std::size_t>(std::max(e[0], e[1])));
    }
    Tensor pair_emb = concat(row_select(h, lo), row_select(h, hi), 1);
    Tensor scores = reshape(mlp_forward(pair_emb, gn.head), {edges.size()});
    return detail::clamp_probs(scores, eps);
}

/// Per-edge keep-probabilities from concatenated endpoint embeddings; the
/// endpoints enter in sorted index order, so p_uv = p_vu by construction.
inline Tensor edge_probs(const NodeDataset& ds, const GeneratorParams& gp, std::size_t gen,
                         double eps = 1e-4) {
    Tensor a = adjacency_tensor(ds.n, ds.edges);
    return edge_probs_from(normalize_adjacency(a), features_tensor(ds), ds.edges, gp, gen, eps);
}

/// Deterministic concrete-relaxation transform at pinned logistic noise:
/// m = Sigmoid((1/t) log(p/(1-p)) + noise). Differentiable in p.
inline Tensor sample_concrete_with_noise(const Tensor& p, const ConcreteSampleConfig& cfg,
                                         const std::vector<double>& noise) {
    validate(cfg);
    if (noise.size() != p.size())
        throw std::invalid_argument("sample_concrete: noise length " +
                                    std::to_string(noise.size()) + " for " +
                                    std::to_string(p.size()) + " probabilities");
    Tensor one_minus_p = scalar_add(scalar_mul(p, -1.0), 1.0);
    Tensor logit_p = sub(log(p), log(one_minus_p));
    Tensor shifted = add(scalar_mul(logit_p, 1.0 / cfg.temperature),
                         Tensor::from(p.shape(), noise));
    Tensor soft = sigmoid(shifted);
    if (!cfg.hard) return soft;
    // straight-through: hard values forward, soft gradient backward
    std::vector<double> delta(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i)
        delta[i] = (soft.data()[i] > 0.5 ? 1.0 : 0.0) - soft.data()[i];
    return add(soft, Tensor::from(soft.shape(), std::move(delta)));
}

/// Relaxed Bernoulli mask: u ~ Uniform(0,1) drawn fresh from `rng` per entry.
inline Tensor sample_concrete(const Tensor& p, const ConcreteSampleConfig& cfg, RngStream& rng) {
    validate(cfg);
    std::vector<double> noise(p.size());
    for (double& v : noise) {
        const double u = rng.uniform_open();
        v = std::log(u / (1.0 - u));
    }
    return sample_concrete_with_noise(p, cfg, noise);
}

/// Plain Bernoulli(p) draws; diagnostics and evaluation only (not recorded
/// on the tape).
inline Tensor hard_sample(const Tensor& p, RngStream& rng) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = rng.bernoulli(p.data()[i]) ? 1.0 : 0.0;
    return Tensor::from(p.shape(), std::move(out));
}

/// I.i.d. keep/drop mask at a fixed drop rate; the DPS-Random augmentation.
inline std::vector<double> random_drop_mask(std::size_t count, double drop_rate,
                                            RngStream& rng) {
    if (!(drop_rate >= 0.0) || drop_rate >= 1.0)
        throw std::invalid_argument("random_drop_mask: drop_rate must be in [0,1)");
    std::vector<double> m(count);
    for (double& v : m) v = rng.bernoulli(drop_rate) ? 0.0 : 1.0;
    return m;
}

inline std::vector<std::pair<std::string, Tensor>> named_params(const GeneratorParams& gp) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < gp.gens.size(); ++i) {
        const std::string prefix = "gen" + std::to_string(i) + ".";
        const Generator& g = gp.gens[i];
        for (std::size_t l = 0; l < g.gcn.size(); ++l) {
            out.emplace_back(prefix + "gcn" + std::to_string(l) + ".w", g.gcn[l].w);
            out.emplace_back(prefix + "gcn" + std::to_string(l) + ".b", g.gcn[l].b);
        }
        out.emplace_back(prefix + "head.w1", g.head.w1);
        out.emplace_back(prefix + "head.b1", g.head.b1);
        out.emplace_back(prefix + "head.w2", g.head.w2);
        out.emplace_back(prefix + "head.b2", g.head.b2);
    }
    return out;
}

inline GeneratorParams clone(const GeneratorParams& gp) {
    GeneratorParams c;
    c.kind = gp.kind;
    c.in_dim = gp.in_dim;
    c.hidden = gp.hidden;
    for (const auto& g : gp.gens) {
        Generator ng;
        for (const auto& l : g.gcn)
            ng.gcn.push_back({Tensor::from(l.w.shape(), l.w.data()),
                              Tensor::from(l.b.shape(), l.b.data())});
        ng.head = {Tensor::from(g.head.w1.shape(), g.head.w1.data()),
                   Tensor::from(g.head.b1.shape(), g.head.b1.data()),
                   Tensor::from(g.head.w2.shape(), g.head.w2.data()),
                   Tensor::from(g.head.b2.shape(), g.head.b2.data())};
        c.gens.push_back(std::move(ng));
    }
    return c;
}

}  // namespace dps
