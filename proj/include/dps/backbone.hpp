#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dps/graph.hpp"
#include "dps/ops.hpp"
#include "dps/rng.hpp"

namespace dps {

struct GcnLayer {
    Tensor w;  // d_in x d_out
    Tensor b;  // 1 x d_out
};

/// One-hidden-layer perceptron with ReLU.
struct Mlp {
    Tensor w1, b1;
    Tensor w2, b2;
};

/// The predictor f: l GCN layers (ReLU between, final layer linear) with an
/// MLP head; mean readout for graph-level tasks, per-node head for node-level.
struct PredictorParams {
    std::vector<GcnLayer> gcn;
    Mlp head;
    int in_dim = 0;
    int hidden = 0;
    int classes = 0;
};

namespace detail {

inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(fan_in * fan_out);
    for (double& x : v) x = rng.uniform(-limit, limit);
    return Tensor::from({fan_in, fan_out}, std::move(v));
}

}  // namespace detail

inline Mlp init_mlp(int in, int hidden, int out, RngStream& rng) {
    Mlp m;
    m.w1 = detail::glorot(static_cast<std::size_t>(in), static_cast<std::size_t>(hidden), rng);
    m.b1 = Tensor::zeros({1, static_cast<std::size_t>(hidden)});
    m.w2 = detail::glorot(static_cast<std::size_t>(hidden), static_cast<std::size_t>(out), rng);
    m.b2 = Tensor::zeros({1, static_cast<std::size_t>(out)});
    return m;
}

inline PredictorParams init_predictor(int in_dim, int hidden, int classes, int layers,
                                      RngStream& rng) {
    if (in_dim < 1 || hidden < 1 || classes < 1 || layers < 1)
        throw std::invalid_argument("init_predictor: dimensions must be positive");
    PredictorParams p;
    p.in_dim = in_dim;
    p.hidden = hidden;
    p.classes = classes;
    int d = in_dim;
    for (int l = 0; l < layers; ++l) {
        GcnLayer layer;
        layer.w = detail::glorot(static_cast<std::size_t>(d), static_cast<std::size_t>(hidden),
                                 rng);
        layer.b = Tensor::zeros({1, static_cast<std::size_t>(hidden)});
        p.gcn.push_back(std::move(layer));
        d = hidden;
    }
    p.head = init_mlp(hidden, hidden, classes, rng);
    return p;
}

inline Tensor mlp_forward(const Tensor& x, const Mlp& m) {
    const std::size_t n = x.dim(0);
    Tensor h = relu(add(matmul(x, m.w1), broadcast_rows(m.b1, n)));
    return add(matmul(h, m.w2), broadcast_rows(m.b2, n));
}

/// Per-graph, per-channel standardization of node embeddings. Statistics are
/// mask-weighted so that masked-out nodes neither contribute nor perturb the
/// surviving rows; with hard masks the result equals the statistics of the
/// physically deleted subgraph.
inline Tensor graph_norm(const Tensor& z, const std::optional<Tensor>& mask) {
    const std::size_t n = z.dim(0);
    Tensor weights;
    if (mask) {
        Tensor total = clamp(sum(*mask), 1e-8, std::numeric_limits<double>::infinity());
        weights = scale(*mask, reciprocal(total));
    } else {
        weights = Tensor::filled({n}, 1.0 / static_cast<double>(n));
    }
    Tensor mu = sum_rows(row_scale(z, weights));
    Tensor centered = sub(z, broadcast_rows(mu, n));
    Tensor var = sum_rows(row_scale(square(centered), weights));
    Tensor inv_std = exp(scalar_mul(log(scalar_add(var, 1e-5)), -0.5));
    return mul(centered, broadcast_rows(inv_std, n));
}

/// H0 = diag(m) X; hidden layers H_{l+1} = ReLU(norm(Ahat diag(m) H_l W_l +
/// b_l)) with mask-weighted per-graph normalization; final layer linear and
/// unnormalized. The mask rescales every node's outgoing messages; pass
/// nullopt for the unmasked forward.
inline Tensor gcn_forward(const Tensor& ahat, const Tensor& x,
                          const std::optional<Tensor>& mask,
                          const std::vector<GcnLayer>& layers) {
    if (ahat.rank() != 2 || ahat.dim(0) != ahat.dim(1) || x.rank() != 2 ||
        x.dim(0) != ahat.dim(0))
        throw std::invalid_argument("gcn_forward: dimension mismatch (" +
                                    detail::shape_str(ahat.shape()) + " vs " +
                                    detail::shape_str(x.shape()) + ")");
    if (mask && (mask->rank() != 1 || mask->size() != x.dim(0)))
        throw std::invalid_argument("gcn_forward: mask length " +
                                    std::to_string(mask->size()) + " for n=" +
                                    std::to_string(x.dim(0)));
    const std::size_t n = x.dim(0);
    Tensor h = mask ? row_scale(x, *mask) : x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].w.dim(0) != h.dim(1))
            throw std::invalid_argument("gcn_forward: layer " + std::to_string(l) +
                                        " expects " + std::to_string(layers[l].w.dim(0)) +
                                        " features, got " + std::to_string(h.dim(1)));
        Tensor msg = mask ? row_scale(h, *mask) : h;
        Tensor z = add(matmul(matmul(ahat, msg), layers[l].w), broadcast_rows(layers[l].b, n));
        h = (l + 1 < layers.size()) ? relu(graph_norm(z, mask)) : z;
    }
    return h;
}

/// Mask-weighted mean readout: sum_v m_v h_v / max(sum_v m_v, 1e-8).
inline Tensor mean_readout(const Tensor& h, const std::optional<Tensor>& mask) {
    if (h.rank() != 2 || h.dim(0) == 0)
        throw std::invalid_argument("mean_readout: input must be a non-empty matrix");
    if (!mask)
        return scalar_mul(sum_rows(h), 1.0 / static_cast<double>(h.dim(0)));
    Tensor num = sum_rows(row_scale(h, *mask));
    Tensor den = clamp(sum(*mask), 1e-8, std::numeric_limits<double>::infinity());
    return scale(num, reciprocal(den));
}

/// Masked graph-level forward from prebuilt tensors: the mask reweights
/// features, messages, the adjacency (through renormalization), and the
/// readout; hard masks thereby reproduce physical node deletion.
inline Tensor predictor_logits_masked(const Tensor& a_raw, const Tensor& x, const Tensor& m,
                                      const PredictorParams& p) {
    Tensor ahat = normalize_adjacency(node_masked_adjacency(a_raw, m));
    Tensor h = gcn_forward(ahat, x, m, p.gcn);
    return mlp_forward(mean_readout(h, m), p.head);
}

/// Unmasked graph-level forward on a prenormalized adjacency.
inline Tensor predictor_logits_raw(const Tensor& ahat, const Tensor& x,
                                   const PredictorParams& p) {
    Tensor h = gcn_forward(ahat, x, std::nullopt, p.gcn);
    return mlp_forward(mean_readout(h, std::nullopt), p.head);
}

/// Graph-level logits (1 x C).
inline Tensor predictor_logits(const LabeledGraph& g, const std::optional<Mask>& mask,
                               const PredictorParams& p) {
    Tensor x = features_tensor(g);
    if (static_cast<int>(x.dim(1)) != p.in_dim)
        throw std::invalid_argument("predictor_logits: graph has " + std::to_string(x.dim(1)) +
                                    "-dim features, predictor expects " +
                                    std::to_string(p.in_dim));
    Tensor a = adjacency_tensor(g);
    if (mask) {
        if (mask->kind != Mask::Kind::node)
            throw std::invalid_argument("predictor_logits: graph task needs a node mask");
        if (mask->values.size() != static_cast<std::size_t>(g.n))
            throw std::invalid_argument("predictor_logits: mask length " +
                                        std::to_string(mask->values.size()) + " for n=" +
                                        std::to_string(g.n));
        return predictor_logits_masked(a, x, mask->values, p);
    }
    return predictor_logits_raw(normalize_adjacency(a), x, p);
}

/// Node-level logits (n x C) on a prenormalized (possibly edge-masked)
/// adjacency.
inline Tensor predictor_logits_nodes(const Tensor& ahat, const Tensor& x,
                                     const PredictorParams& p) {
    return mlp_forward(gcn_forward(ahat, x, std::nullopt, p.gcn), p.head);
}

// ---------------------------------------------------------------------------
// Parameter plumbing
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, Tensor>> named_params(const PredictorParams& p,
                                                                const std::string& prefix = "") {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t l = 0; l < p.gcn.size(); ++l) {
        out.emplace_back(prefix + "gcn" + std::to_string(l) + ".w", p.gcn[l].w);
        out.emplace_back(prefix + "gcn" + std::to_string(l) + ".b", p.gcn[l].b);
    }
    out.emplace_back(prefix + "head.w1", p.head.w1);
    out.emplace_back(prefix + "head.b1", p.head.b1);
    out.emplace_back(prefix + "head.w2", p.head.w2);
    out.emplace_back(prefix + "head.b2", p.head.b2);
    return out;
}

inline std::vector<Tensor> param_tensors(const std::vector<std::pair<std::string, Tensor>>& nv) {
    std::vector<Tensor> out;
    out.reserve(nv.size());
    for (const auto& [name, t] : nv) out.push_back(t);
    return out;
}

inline void set_requires_grad(const std::vector<Tensor>& params, bool rg) {
    for (const Tensor& t : params) const_cast<Tensor&>(t).set_requires_grad(rg);
}

inline PredictorParams clone(const PredictorParams& p) {
    PredictorParams c;
    c.in_dim = p.in_dim;
    c.hidden = p.hidden;
    c.classes = p.classes;
    for (const auto& l : p.gcn)
        c.gcn.push_back({Tensor::from(l.w.shape(), l.w.data()),
                         Tensor::from(l.b.shape(), l.b.data())});
    c.head = {Tensor::from(p.head.w1.shape(), p.head.w1.data()),
              Tensor::from(p.head.b1.shape(), p.head.b1.data()),
              Tensor::from(p.head.w2.shape(), p.head.w2.data()),
              Tensor::from(p.head.b2.shape(), p.head.b2.data())};
    return c;
}

/// Checkpoint fragment: parameter names mapped to shape + flat values.
inline nlohmann::json params_to_json(const std::vector<std::pair<std::string, Tensor>>& nv) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, t] : nv) {
        j[name] = {{"shape", t.shape()}, {"data", t.data()}};
    }
    return j;
}

inline void params_from_json(const nlohmann::json& j,
                             std::vector<std::pair<std::string, Tensor>>& nv) {
    for (auto& [name, t] : nv) {
        if (!j.contains(name))
            throw std::runtime_error("checkpoint: missing parameter '" + name + "'");
        const auto shape = j.at(name).at("shape").get<std::vector<std::size_t>>();
        auto data = j.at(name).at("data").get<std::vector<double>>();
        if (shape != t.shape() || data.size() != t.size())
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        t.mutable_data() = std::move(data);
    }
}

}  // namespace dps
