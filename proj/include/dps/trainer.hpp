#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dps/adam.hpp"
#include "dps/backbone.hpp"
#include "dps/generators.hpp"
#include "dps/graph.hpp"
#include "dps/metrics.hpp"
#include "dps/objectives.hpp"
#include "dps/rng.hpp"

namespace dps {

enum class Method { dps, erm, dps_random, dps_rex };
enum class Task { graph, node };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::dps: return "dps";
        case Method::erm: return "erm";
        case Method::dps_random: return "dps_random";
        default: return "dps_rex";
    }
}

inline Method method_from_name(const std::string& s) {
    if (s == "dps") return Method::dps;
    if (s == "erm") return Method::erm;
    if (s == "dps_random") return Method::dps_random;
    if (s == "dps_rex") return Method::dps_rex;
    throw std::invalid_argument("unknown method '" + s + "'");
}

struct TrainConfig {
    Method method = Method::dps;
    Task task = Task::graph;
    int k = 3;                     // augmented-domain count per Table 2's protocol
    double alpha = 0.5;            // energy-distance weight
    double beta = 0.1;             // KL weight
    double rho = 0.5;              // Bernoulli prior keep-probability
    double temperature = 1.0;
    double temperature_end = 1.0;  // linear anneal target; equal start disables
    int inner_steps = 1;           // T
    int epochs = 200;
    int batch_size = 32;
    double lr_gen = 1e-2;
    double lr_pred = 3e-3;
    double drop_rate = 0.3;        // dps_random only
    double prob_clamp = 1e-4;
    int hidden = 32;
    int gcn_layers = 2;
    std::uint64_t seed = 0;
};

inline void validate(const TrainConfig& cfg) {
    if (cfg.k < 1) throw std::invalid_argument("TrainConfig: K must be >= 1");
    if (cfg.inner_steps < 1) throw std::invalid_argument("TrainConfig: T must be >= 1");
    if (!(cfg.rho > 0.0) || !(cfg.rho < 1.0))
        throw std::invalid_argument("TrainConfig: rho must lie in (0,1)");
    if (!(cfg.lr_gen > 0.0) || !(cfg.lr_pred > 0.0))
        throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (cfg.alpha < 0.0 || cfg.beta < 0.0)
        throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw std::invalid_argument("TrainConfig: epochs and batch size must be >= 1");
    if (!(cfg.temperature > 0.0) || !(cfg.temperature_end > 0.0))
        throw std::invalid_argument("TrainConfig: temperatures must be positive");
    if (!(cfg.drop_rate >= 0.0) || cfg.drop_rate >= 1.0)
        throw std::invalid_argument("TrainConfig: drop_rate must be in [0,1)");
    if (cfg.hidden < 1 || cfg.gcn_layers < 1)
        throw std::invalid_argument("TrainConfig: backbone sizes must be >= 1");
}

struct EpochMetrics {
    int epoch = 0;
    std::vector<double> ce;  // per domain, source last (single entry for ERM)
    double kld = 0.0;
    double dist = 0.0;
    double val_acc = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

struct RunRecord {
    Method method = Method::dps;
    Task task = Task::graph;
    std::uint64_t seed = 0;
    std::string config_hash;
    int classes = 0;
    int feat_dim = 0;
    int best_epoch = -1;
    double best_val_acc = -1.0;
    std::vector<EpochMetrics> epochs;
    PredictorParams best_predictor;
    GeneratorParams best_generators;   // count()==0 when the method has none
    PredictorParams final_predictor;
    GeneratorParams final_generators;
};

struct GraphDataset {
    std::vector<LabeledGraph> train;
    std::vector<LabeledGraph> val;
    int classes = 0;
    int feat_dim = 0;
};

inline GraphDataset make_graph_dataset(std::vector<LabeledGraph> train,
                                       std::vector<LabeledGraph> val) {
    GraphDataset d;
    d.train = std::move(train);
    d.val = std::move(val);
    if (d.train.empty()) throw std::invalid_argument("make_graph_dataset: empty train split");
    d.feat_dim = d.train[0].feat_dim;
    for (const auto* part : {&d.train, &d.val})
        for (const auto& g : *part) {
            if (g.feat_dim != d.feat_dim)
                throw std::invalid_argument("make_graph_dataset: inconsistent feature dims (" +
                                            std::to_string(g.feat_dim) + " vs " +
                                            std::to_string(d.feat_dim) + ")");
            d.classes = std::max(d.classes, g.y + 1);
        }
    return d;
}

namespace detail {

struct GraphCache {
    Tensor a;     // raw adjacency
    Tensor x;     // features
    Tensor ahat;  // prenormalized raw adjacency
    int y = 0;
};

inline std::vector<GraphCache> build_cache(const std::vector<LabeledGraph>& graphs) {
    std::vector<GraphCache> out;
    out.reserve(graphs.size());
    for (const auto& g : graphs) {
        GraphCache c;
        c.a = adjacency_tensor(g);
        c.x = features_tensor(g);
        c.ahat = normalize_adjacency(c.a);
        c.y = g.y;
        out.push_back(std::move(c));
    }
    return out;
}

inline int argmax_row(const Tensor& logits, std::size_t row) {
    const std::size_t c = logits.dim(1);
    int best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (logits.at(row, j) > logits.at(row, best)) best = static_cast<int>(j);
    return best;
}

inline double linear_anneal(double start, double end, int epoch, int total_epochs) {
    if (total_epochs <= 1) return end;
    const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
    return start + (end - start) * t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared evaluation
// ---------------------------------------------------------------------------

inline std::vector<int> predict_graphs(const PredictorParams& p,
                                       const std::vector<LabeledGraph>& graphs) {
    std::vector<int> out;
    out.reserve(graphs.size());
    for (const auto& g : graphs)
        out.push_back(detail::argmax_row(predictor_logits(g, std::nullopt, p), 0));
    return out;
}

inline double graph_accuracy(const PredictorParams& p,
                             const std::vector<LabeledGraph>& graphs) {
    if (graphs.empty()) throw std::invalid_argument("graph_accuracy: empty graph list");
    double ok = 0.0;
    for (const auto& g : graphs)
        ok += detail::argmax_row(predictor_logits(g, std::nullopt, p), 0) == g.y;
    return ok / static_cast<double>(graphs.size());
}

inline double node_accuracy(const PredictorParams& p, const NodeDataset& ds, Split split) {
    const auto idx = ds.split_indices(split);
    if (idx.empty()) throw std::invalid_argument("node_accuracy: empty split");
    Tensor ahat = normalize_adjacency(adjacency_tensor(ds.n, ds.edges));
    Tensor logits = predictor_logits_nodes(ahat, features_tensor(ds), p);
    double ok = 0.0;
    for (std::size_t v : idx)
        ok += detail::argmax_row(logits, v) == ds.labels[v];
    return ok / static_cast<double>(idx.size());
}

/// Per-domain CE and energies at a fixed checkpoint, masks drawn from a
/// dedicated evaluation stream (relaxed samples, matching training-time
/// domain construction). Source domain is the last entry of per_domain_ce.
struct DomainEval {
    std::vector<double> per_domain_ce;              // K generator domains + source
    std::vector<std::vector<double>> energies;      // K generator domains
    std::vector<double> source_energies;
};

inline DomainEval eval_domains_graph(const PredictorParams& pred, const GeneratorParams& gens,
                                     Method method, const TrainConfig& cfg,
                                     const std::vector<LabeledGraph>& graphs,
                                     std::uint64_t eval_seed) {
    if (graphs.empty()) throw std::invalid_argument("eval_domains_graph: empty graph list");
    if (method == Method::erm)
        throw std::invalid_argument("eval_domains_graph: ERM has no augmented domains");
    RngStream rng = RngStream(eval_seed).derive(9001);
    ConcreteSampleConfig scfg;
    scfg.temperature = cfg.temperature_end;
    scfg.prob_clamp = cfg.prob_clamp;
    DomainEval ev;
    ev.energies.assign(static_cast<std::size_t>(cfg.k), {});
    std::vector<double> ce(static_cast<std::size_t>(cfg.k) + 1, 0.0);
    for (const auto& g : graphs) {
        Tensor a = adjacency_tensor(g);
        Tensor x = features_tensor(g);
        Tensor ahat = normalize_adjacency(a);
        for (int i = 0; i < cfg.k; ++i) {
            Tensor m;
            if (method == Method::dps_random) {
                m = Tensor::from({static_cast<std::size_t>(g.n)},
                                 random_drop_mask(static_cast<std::size_t>(g.n),
                                                  cfg.drop_rate, rng));
            } else {
                Tensor p = node_probs_from(ahat, x, gens, static_cast<std::size_t>(i),
                                           cfg.prob_clamp);
                m = sample_concrete(p, scfg, rng);
            }
            Tensor logits = predictor_logits_masked(a, x, m, pred);
            ce[static_cast<std::size_t>(i)] +=
                softmax_cross_entropy(logits, {g.y}).value();
            ev.energies[static_cast<std::size_t>(i)].push_back(energy_score(logits).value());
        }
        Tensor src = predictor_logits_raw(ahat, x, pred);
        ce[static_cast<std::size_t>(cfg.k)] += softmax_cross_entropy(src, {g.y}).value();
        ev.source_energies.push_back(energy_score(src).value());
    }
    for (double& v : ce) v /= static_cast<double>(graphs.size());
    ev.per_domain_ce = std::move(ce);
    return ev;
}

inline DomainEval eval_domains_node(const PredictorParams& pred, const GeneratorParams& gens,
                                    Method method, const TrainConfig& cfg,
                                    const NodeDataset& ds, Split split,
                                    std::uint64_t eval_seed) {
    if (method == Method::erm)
        throw std::invalid_argument("eval_domains_node: ERM has no augmented domains");
    const auto idx = ds.split_indices(split);
    if (idx.empty()) throw std::invalid_argument("eval_domains_node: empty split");
    std::vector<int> labels;
    for (std::size_t v : idx) labels.push_back(ds.labels[v]);
    RngStream rng = RngStream(eval_seed).derive(9002);
    ConcreteSampleConfig scfg;
    scfg.temperature = cfg.temperature_end;
    scfg.prob_clamp = cfg.prob_clamp;
    Tensor a = adjacency_tensor(ds.n, ds.edges);
    Tensor x = features_tensor(ds);
    Tensor ahat = normalize_adjacency(a);
    DomainEval ev;
    ev.energies.assign(static_cast<std::size_t>(cfg.k), {});
    std::vector<double> ce;
    for (int i = 0; i < cfg.k; ++i) {
        Tensor m;
        if (method == Method::dps_random) {
            m = Tensor::from({ds.edges.size()},
                             random_drop_mask(ds.edges.size(), cfg.drop_rate, rng));
        } else {
            Tensor p = edge_probs_from(ahat, x, ds.edges, gens, static_cast<std::size_t>(i),
                                       cfg.prob_clamp);
            m = sample_concrete(p, scfg, rng);
        }
        Tensor ahat_m = normalize_adjacency(edge_scatter(m, ds.edges,
                                                         static_cast<std::size_t>(ds.n)));
        Tensor logits = row_select(predictor_logits_nodes(ahat_m, x, pred), idx);
        Tensor ces = softmax_cross_entropy(logits, labels);
        double total = 0.0;
        for (double v : ces.data()) total += v;
        ce.push_back(total / static_cast<double>(idx.size()));
        Tensor en = energy_score(logits);
        ev.energies[static_cast<std::size_t>(i)] = en.data();
    }
    Tensor src_logits = row_select(predictor_logits_nodes(ahat, x, pred), idx);
    Tensor src_ces = softmax_cross_entropy(src_logits, labels);
    double total = 0.0;
    for (double v : src_ces.data()) total += v;
    ce.push_back(total / static_cast<double>(idx.size()));
    ev.source_energies = energy_score(src_logits).data();
    ev.per_domain_ce = std::move(ce);
    return ev;
}

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

/// Optional warm starts; cloned on entry, never aliased.
struct InitOverride {
    const PredictorParams* predictor = nullptr;
    const GeneratorParams* generators = nullptr;
};

namespace detail {

struct PhaseGuard {
    // parameter checksums asserting that a phase only moved its own weights
    static void check(double before, double after, const char* what) {
        if (before != after)
            throw std::logic_error(std::string("trainer: ") + what +
                                   " parameters moved in the wrong phase");
    }
};

inline RunRecord train_graph_impl(const GraphDataset& data, const TrainConfig& cfg,
                                  const EpochCallback& on_epoch,
                                  const InitOverride& init = {}) {
    validate(cfg);
    if (data.train.empty()) throw std::invalid_argument("train: empty train split");
    if (data.val.empty()) throw std::invalid_argument("train: empty val split");
    const bool learned_gens = cfg.method == Method::dps || cfg.method == Method::dps_rex;
    const bool has_domains = cfg.method != Method::erm;
    const Regularizer reg =
        cfg.method == Method::dps_rex ? Regularizer::loss_variance : Regularizer::energy_distance;

    RngStream root(cfg.seed);
    RngStream init_gen = root.derive(2), init_pred = root.derive(3), noise = root.derive(4),
              shuffle_rng = root.derive(5);

    GeneratorParams gens;
    if (learned_gens)
        gens = init.generators ? clone(*init.generators)
                               : init_generators(cfg.k, data.feat_dim, cfg.hidden,
                                                 Mask::Kind::node, cfg.gcn_layers, init_gen);
    PredictorParams pred = init.predictor
                               ? clone(*init.predictor)
                               : init_predictor(data.feat_dim, cfg.hidden, data.classes,
                                                cfg.gcn_layers, init_pred);

    std::vector<Tensor> gen_params = param_tensors(named_params(gens));
    std::vector<Tensor> pred_params = param_tensors(named_params(pred));
    AdamState gen_state, pred_state;

    auto cache = build_cache(data.train);

    RunRecord rec;
    rec.method = cfg.method;
    rec.task = Task::graph;
    rec.seed = cfg.seed;
    rec.classes = data.classes;
    rec.feat_dim = data.feat_dim;

    std::vector<std::size_t> order(cache.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t domains = has_domains ? static_cast<std::size_t>(cfg.k) + 1 : 1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ConcreteSampleConfig scfg;
        scfg.temperature =
            linear_anneal(cfg.temperature, cfg.temperature_end, epoch, cfg.epochs);
        scfg.prob_clamp = cfg.prob_clamp;
        shuffle_rng.shuffle(order);

        std::vector<double> ce_accum(domains, 0.0);
        double kld_accum = 0.0, dist_accum = 0.0;
        std::size_t batches = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));

            // one forward pass over the K+1 domains for the current batch;
            // a precomputed source pair may be reused while the predictor is
            // frozen (its tensors carry no tape in that phase)
            auto source_pair = [&]() -> std::pair<Tensor, Tensor> {
                std::vector<Tensor> ces, ens;
                for (std::size_t gi : batch) {
                    const GraphCache& c = cache[gi];
                    Tensor logits = predictor_logits_raw(c.ahat, c.x, pred);
                    ces.push_back(softmax_cross_entropy(logits, {c.y}));
                    ens.push_back(energy_score(logits));
                }
                return {concat(ces, 0), concat(ens, 0)};
            };
            auto build = [&](bool with_probs, const std::pair<Tensor, Tensor>* src = nullptr)
                -> std::pair<DomainBatch, std::vector<std::vector<Tensor>>> {
                DomainBatch db;
                std::vector<std::vector<Tensor>> probs(
                    learned_gens && with_probs ? static_cast<std::size_t>(cfg.k) : 0);
                if (has_domains) {
                    for (int i = 0; i < cfg.k; ++i) {
                        std::vector<Tensor> ces, ens;
                        for (std::size_t gi : batch) {
                            const GraphCache& c = cache[gi];
                            Tensor m;
                            if (learned_gens) {
                                Tensor p = node_probs_from(c.ahat, c.x, gens,
                                                           static_cast<std::size_t>(i),
                                                           cfg.prob_clamp);
                                if (with_probs) probs[static_cast<std::size_t>(i)].push_back(p);
                                m = sample_concrete(p, scfg, noise);
                            } else {
                                m = Tensor::from({c.x.dim(0)},
                                                 random_drop_mask(c.x.dim(0), cfg.drop_rate,
                                                                  noise));
                            }
                            Tensor logits = predictor_logits_masked(c.a, c.x, m, pred);
                            ces.push_back(softmax_cross_entropy(logits, {c.y}));
                            ens.push_back(energy_score(logits));
                        }
                        db.ce.push_back(concat(ces, 0));
                        db.energy.push_back(concat(ens, 0));
                    }
                }
                const auto [src_ce, src_en] = src ? *src : source_pair();
                db.ce.push_back(src_ce);
                db.energy.push_back(src_en);
                return {std::move(db), std::move(probs)};
            };

            try {
                if (learned_gens) {
                    // inner phase: T generator steps, predictor frozen
                    const double pred_sum = checksum(pred_params);
                    set_requires_grad(gen_params, true);
                    set_requires_grad(pred_params, false);
                    const std::pair<Tensor, Tensor> frozen_src = source_pair();
                    for (int t = 0; t < cfg.inner_steps; ++t) {
                        zero_grads(gen_params);
                        auto [db, probs] = build(true, &frozen_src);
                        Tensor loss = inner_loss(db, probs, cfg.alpha, cfg.beta, cfg.rho,
                                                 static_cast<std::size_t>(cfg.k), reg);
                        if (cfg.beta > 0.0)
                            kld_accum +=
                                kld_loss(probs, cfg.rho, static_cast<std::size_t>(cfg.k))
                                    .value();
                        backward(loss);
                        adam_step(gen_params, gen_state, cfg.lr_gen);
                    }
                    PhaseGuard::check(pred_sum, checksum(pred_params), "predictor");
                }

                // outer phase: one predictor step, generators frozen
                const double gen_sum = checksum(gen_params);
                set_requires_grad(gen_params, false);
                set_requires_grad(pred_params, true);
                zero_grads(pred_params);
                auto [db, probs] = build(false);
                Tensor loss = learned_gens ? outer_loss(db, cfg.alpha, reg)
                                           : (has_domains ? ce_loss(db) : mean(db.ce[0]));
                for (std::size_t d = 0; d < domains; ++d) {
                    double s = 0.0;
                    for (double v : db.ce[d].data()) s += v;
                    ce_accum[d] += s / static_cast<double>(db.ce[d].size());
                }
                if (has_domains) dist_accum += dist_loss(db).value();
                backward(loss);
                adam_step(pred_params, pred_state, cfg.lr_pred);
                PhaseGuard::check(gen_sum, checksum(gen_params), "generator");
            } catch (const std::runtime_error& e) {
                throw std::runtime_error(
                    "train aborted: " + std::string(e.what()) + " [epoch " +
                    std::to_string(epoch) + ", batch of graphs " + std::to_string(start) +
                    ".." + std::to_string(stop - 1) + ", seed " + std::to_string(cfg.seed) +
                    "]");
            }
            ++batches;
        }

        EpochMetrics m;
        m.epoch = epoch;
        for (double v : ce_accum) m.ce.push_back(v / static_cast<double>(batches));
        m.kld = learned_gens && cfg.beta > 0.0
                    ? kld_accum / (static_cast<double>(batches) * cfg.inner_steps)
                    : 0.0;
        m.dist = has_domains ? dist_accum / static_cast<double>(batches) : 0.0;
        m.val_acc = graph_accuracy(pred, data.val);
        rec.epochs.push_back(m);
        if (on_epoch) on_epoch(m);
        if (m.val_acc > rec.best_val_acc) {
            rec.best_val_acc = m.val_acc;
            rec.best_epoch = epoch;
            rec.best_predictor = clone(pred);
            rec.best_generators = clone(gens);
        }
    }
    rec.final_predictor = clone(pred);
    rec.final_generators = clone(gens);
    return rec;
}

inline RunRecord train_node_impl(const NodeDataset& ds, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch,
                                 const InitOverride& init = {}) {
    validate(cfg);
    const auto train_idx = ds.split_indices(Split::train);
    const auto val_idx = ds.split_indices(Split::val);
    if (train_idx.empty()) throw std::invalid_argument("train: empty train split");
    if (val_idx.empty()) throw std::invalid_argument("train: empty val split");
    const bool learned_gens = cfg.method == Method::dps || cfg.method == Method::dps_rex;
    const bool has_domains = cfg.method != Method::erm;
    const Regularizer reg =
        cfg.method == Method::dps_rex ? Regularizer::loss_variance : Regularizer::energy_distance;

    int classes = 0;
    for (int y : ds.labels) classes = std::max(classes, y + 1);

    RngStream root(cfg.seed);
    RngStream init_gen = root.derive(2), init_pred = root.derive(3), noise = root.derive(4);

    GeneratorParams gens;
    if (learned_gens)
        gens = init.generators ? clone(*init.generators)
                               : init_generators(cfg.k, ds.feat_dim, cfg.hidden,
                                                 Mask::Kind::edge, cfg.gcn_layers, init_gen);
    PredictorParams pred = init.predictor
                               ? clone(*init.predictor)
                               : init_predictor(ds.feat_dim, cfg.hidden, classes,
                                                cfg.gcn_layers, init_pred);

    std::vector<Tensor> gen_params = param_tensors(named_params(gens));
    std::vector<Tensor> pred_params = param_tensors(named_params(pred));
    AdamState gen_state, pred_state;

    Tensor a = adjacency_tensor(ds.n, ds.edges);
    Tensor x = features_tensor(ds);
    Tensor ahat_raw = normalize_adjacency(a);
    std::vector<int> train_labels;
    for (std::size_t v : train_idx) train_labels.push_back(ds.labels[v]);

    RunRecord rec;
    rec.method = cfg.method;
    rec.task = Task::node;
    rec.seed = cfg.seed;
    rec.classes = classes;
    rec.feat_dim = ds.feat_dim;

    const std::size_t domains = has_domains ? static_cast<std::size_t>(cfg.k) + 1 : 1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ConcreteSampleConfig scfg;
        scfg.temperature =
            linear_anneal(cfg.temperature, cfg.temperature_end, epoch, cfg.epochs);
        scfg.prob_clamp = cfg.prob_clamp;

        auto build = [&](bool with_probs)
            -> std::pair<DomainBatch, std::vector<std::vector<Tensor>>> {
            DomainBatch db;
            std::vector<std::vector<Tensor>> probs(
                learned_gens && with_probs ? static_cast<std::size_t>(cfg.k) : 0);
            if (has_domains) {
                for (int i = 0; i < cfg.k; ++i) {
                    Tensor m;
                    if (learned_gens) {
                        Tensor p = edge_probs_from(ahat_raw, x, ds.edges, gens,
                                                   static_cast<std::size_t>(i),
                                                   cfg.prob_clamp);
                        if (with_probs) probs[static_cast<std::size_t>(i)].push_back(p);
                        m = sample_concrete(p, scfg, noise);
                    } else {
                        m = Tensor::from({ds.edges.size()},
                                         random_drop_mask(ds.edges.size(), cfg.drop_rate,
                                                          noise));
                    }
                    Tensor ahat_m = normalize_adjacency(
                        edge_scatter(m, ds.edges, static_cast<std::size_t>(ds.n)));
                    Tensor logits = row_select(predictor_logits_nodes(ahat_m, x, pred),
                                               train_idx);
                    db.ce.push_back(softmax_cross_entropy(logits, train_labels));
                    db.energy.push_back(energy_score(logits));
                }
            }
            Tensor logits = row_select(predictor_logits_nodes(ahat_raw, x, pred), train_idx);
            db.ce.push_back(softmax_cross_entropy(logits, train_labels));
            db.energy.push_back(energy_score(logits));
            return {std::move(db), std::move(probs)};
        };

        std::vector<double> ce_vals(domains, 0.0);
        double kld_val = 0.0, dist_val = 0.0;
        try {
            if (learned_gens) {
                const double pred_sum = checksum(pred_params);
                set_requires_grad(gen_params, true);
                set_requires_grad(pred_params, false);
                for (int t = 0; t < cfg.inner_steps; ++t) {
                    zero_grads(gen_params);
                    auto [db, probs] = build(true);
                    // Eq. 11 averaging: one full-graph sample, K+1 in the denominator
                    Tensor loss = inner_loss(db, probs, cfg.alpha, cfg.beta, cfg.rho,
                                             static_cast<std::size_t>(cfg.k) + 1, reg);
                    if (cfg.beta > 0.0)
                        kld_val = kld_loss(probs, cfg.rho,
                                           static_cast<std::size_t>(cfg.k) + 1)
                                      .value();
                    backward(loss);
                    adam_step(gen_params, gen_state, cfg.lr_gen);
                }
                PhaseGuard::check(pred_sum, checksum(pred_params), "predictor");
            }

            const double gen_sum = checksum(gen_params);
            set_requires_grad(gen_params, false);
            set_requires_grad(pred_params, true);
            zero_grads(pred_params);
            auto [db, probs] = build(false);
            Tensor loss = learned_gens ? outer_loss(db, cfg.alpha, reg)
                                       : (has_domains ? ce_loss(db) : mean(db.ce[0]));
            for (std::size_t d = 0; d < domains; ++d) {
                double s = 0.0;
                for (double v : db.ce[d].data()) s += v;
                ce_vals[d] = s / static_cast<double>(db.ce[d].size());
            }
            if (has_domains) dist_val = dist_loss(db).value();
            backward(loss);
            adam_step(pred_params, pred_state, cfg.lr_pred);
            PhaseGuard::check(gen_sum, checksum(gen_params), "generator");
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("train aborted: " + std::string(e.what()) + " [epoch " +
                                     std::to_string(epoch) + ", full-graph batch, seed " +
                                     std::to_string(cfg.seed) + "]");
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.ce = ce_vals;
        m.kld = kld_val;
        m.dist = dist_val;
        m.val_acc = node_accuracy(pred, ds, Split::val);
        rec.epochs.push_back(m);
        if (on_epoch) on_epoch(m);
        if (m.val_acc > rec.best_val_acc) {
            rec.best_val_acc = m.val_acc;
            rec.best_epoch = epoch;
            rec.best_predictor = clone(pred);
            rec.best_generators = clone(gens);
        }
    }
    rec.final_predictor = clone(pred);
    rec.final_generators = clone(gens);
    return rec;
}

}  // namespace detail

inline RunRecord train_run(const GraphDataset& data, const TrainConfig& cfg,
                           const EpochCallback& cb = {}, const InitOverride& init = {}) {
    if (cfg.task != Task::graph)
        throw std::invalid_argument("train_run: config task is not graph");
    return detail::train_graph_impl(data, cfg, cb, init);
}

inline RunRecord train_run(const NodeDataset& data, const TrainConfig& cfg,
                           const EpochCallback& cb = {}, const InitOverride& init = {}) {
    if (cfg.task != Task::node)
        throw std::invalid_argument("train_run: config task is not node");
    return detail::train_node_impl(data, cfg, cb, init);
}

namespace detail {

inline void expect_method(const TrainConfig& cfg, Method m, const char* op) {
    if (cfg.method != m)
        throw std::invalid_argument(std::string(op) + ": cfg.method is " +
                                    method_name(cfg.method) + ", expected " + method_name(m));
}

}  // namespace detail

template <typename Data>
RunRecord dps_train(const Data& data, const TrainConfig& cfg, const EpochCallback& cb = {}) {
    detail::expect_method(cfg, Method::dps, "dps_train");
    return train_run(data, cfg, cb);
}

template <typename Data>
RunRecord erm_train(const Data& data, const TrainConfig& cfg, const EpochCallback& cb = {}) {
    detail::expect_method(cfg, Method::erm, "erm_train");
    return train_run(data, cfg, cb);
}

template <typename Data>
RunRecord dps_random_train(const Data& data, const TrainConfig& cfg,
                           const EpochCallback& cb = {}) {
    detail::expect_method(cfg, Method::dps_random, "dps_random_train");
    return train_run(data, cfg, cb);
}

template <typename Data>
RunRecord dps_rex_train(const Data& data, const TrainConfig& cfg, const EpochCallback& cb = {}) {
    detail::expect_method(cfg, Method::dps_rex, "dps_rex_train");
    return train_run(data, cfg, cb);
}

}  // namespace dps
