#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dps/graph_io.hpp"
#include "dps/metrics.hpp"
#include "dps/synthetic.hpp"
#include "dps/trainer.hpp"

namespace dps {

// ---------------------------------------------------------------------------
// Logging (DPS_LOG in {error, info, debug})
// ---------------------------------------------------------------------------

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("DPS_LOG");
        if (!env) return LogLevel::info;
        const std::string v = env;
        if (v == "error") return LogLevel::error;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

inline void log_msg(LogLevel lvl, const std::string& msg) {
    static std::mutex mu;
    if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
    std::lock_guard<std::mutex> lock(mu);
    std::fprintf(stderr, "[dps] %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) { log_msg(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { log_msg(LogLevel::debug, msg); }
inline void log_error(const std::string& msg) { log_msg(LogLevel::error, msg); }

// ---------------------------------------------------------------------------
// Atomic output files
// ---------------------------------------------------------------------------

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

inline void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
    atomic_write(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return j;
}

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

inline std::string task_name(Task t) { return t == Task::graph ? "graph" : "node"; }

inline Task task_from_name(const std::string& s) {
    if (s == "graph") return Task::graph;
    if (s == "node") return Task::node;
    throw std::invalid_argument("unknown task '" + s + "'");
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"method", method_name(c.method)},
            {"task", task_name(c.task)},
            {"K", c.k},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"rho", c.rho},
            {"temperature", c.temperature},
            {"temperature_end", c.temperature_end},
            {"inner_steps", c.inner_steps},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr_gen", c.lr_gen},
            {"lr_pred", c.lr_pred},
            {"drop_rate", c.drop_rate},
            {"prob_clamp", c.prob_clamp},
            {"hidden", c.hidden},
            {"gcn_layers", c.gcn_layers},
            {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("method")) c.method = method_from_name(j.at("method").get<std::string>());
    if (j.contains("task")) c.task = task_from_name(j.at("task").get<std::string>());
    if (j.contains("K")) c.k = j.at("K").get<int>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("rho")) c.rho = j.at("rho").get<double>();
    if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
    if (j.contains("temperature_end"))
        c.temperature_end = j.at("temperature_end").get<double>();
    if (j.contains("inner_steps")) c.inner_steps = j.at("inner_steps").get<int>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr_gen")) c.lr_gen = j.at("lr_gen").get<double>();
    if (j.contains("lr_pred")) c.lr_pred = j.at("lr_pred").get<double>();
    if (j.contains("drop_rate")) c.drop_rate = j.at("drop_rate").get<double>();
    if (j.contains("prob_clamp")) c.prob_clamp = j.at("prob_clamp").get<double>();
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<int>();
    if (j.contains("gcn_layers")) c.gcn_layers = j.at("gcn_layers").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

inline std::string config_hash(const nlohmann::json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// "7" -> {7}; "0..4" -> {0,1,2,3,4}; "1,3,9" -> {1,3,9}.
inline std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> out;
    const auto range = spec.find("..");
    if (range != std::string::npos) {
        const std::uint64_t a = std::stoull(spec.substr(0, range));
        const std::uint64_t b = std::stoull(spec.substr(range + 2));
        if (b < a) throw std::invalid_argument("seeds: empty range '" + spec + "'");
        for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
        return out;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    if (out.empty()) throw std::invalid_argument("seeds: empty list '" + spec + "'");
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Bounded worker pool over independent jobs; results land in caller-indexed
/// slots so output order never depends on scheduling.
inline void run_parallel(std::size_t n_jobs, int workers,
                         const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n_jobs <= 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr first_error;
    const int count = std::min<std::size_t>(static_cast<std::size_t>(workers), n_jobs);
    for (int w = 0; w < count; ++w)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t mine;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= n_jobs || first_error) return;
                    mine = next++;
                }
                try {
                    fn(mine);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string kind = "spurious-motif";  // spurious-motif | size-shift | sanity | node-domains
    std::string out;
    std::uint64_t seed = 0;
    double b = 0.9;
    int n = 1500;
    int n_val = 300;
    int n_test = 500;
    int base_lo = 8;
    int base_hi = 15;
    int train_max = 15;    // size-shift thresholds
    int val_lo = 15;
    int val_hi = 20;
    int test_min = 20;
    int n_per_domain = 300;  // node-domains
    int domains = 4;
    double spurious = 0.9;
    int feat_dim = 4;
    double feat_noise = 0.1;
};

inline nlohmann::json to_json(const GenDataArgs& a) {
    return {{"kind", a.kind},         {"out", a.out},
            {"seed", a.seed},         {"b", a.b},
            {"n", a.n},               {"n_val", a.n_val},
            {"n_test", a.n_test},     {"base_lo", a.base_lo},
            {"base_hi", a.base_hi},   {"train_max", a.train_max},
            {"val_lo", a.val_lo},     {"val_hi", a.val_hi},
            {"test_min", a.test_min}, {"n_per_domain", a.n_per_domain},
            {"domains", a.domains},   {"spurious", a.spurious},
            {"feat_dim", a.feat_dim}, {"feat_noise", a.feat_noise}};
}

inline GenDataArgs gen_data_args_from_json(const nlohmann::json& j) {
    GenDataArgs a;
    if (j.contains("kind")) a.kind = j.at("kind").get<std::string>();
    if (j.contains("out")) a.out = j.at("out").get<std::string>();
    if (j.contains("seed")) a.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("b")) a.b = j.at("b").get<double>();
    if (j.contains("n")) a.n = j.at("n").get<int>();
    if (j.contains("n_val")) a.n_val = j.at("n_val").get<int>();
    if (j.contains("n_test")) a.n_test = j.at("n_test").get<int>();
    if (j.contains("base_lo")) a.base_lo = j.at("base_lo").get<int>();
    if (j.contains("base_hi")) a.base_hi = j.at("base_hi").get<int>();
    if (j.contains("train_max")) a.train_max = j.at("train_max").get<int>();
    if (j.contains("val_lo")) a.val_lo = j.at("val_lo").get<int>();
    if (j.contains("val_hi")) a.val_hi = j.at("val_hi").get<int>();
    if (j.contains("test_min")) a.test_min = j.at("test_min").get<int>();
    if (j.contains("n_per_domain")) a.n_per_domain = j.at("n_per_domain").get<int>();
    if (j.contains("domains")) a.domains = j.at("domains").get<int>();
    if (j.contains("spurious")) a.spurious = j.at("spurious").get<double>();
    if (j.contains("feat_dim")) a.feat_dim = j.at("feat_dim").get<int>();
    if (j.contains("feat_noise")) a.feat_noise = j.at("feat_noise").get<double>();
    return a;
}

inline void run_gen_data(const GenDataArgs& args) {
    namespace fs = std::filesystem;
    if (args.out.empty()) throw std::invalid_argument("gen-data: --out is required");
    fs::create_directories(args.out);
    const fs::path dir(args.out);
    nlohmann::json manifest;
    manifest["kind"] = args.kind;
    manifest["seed"] = args.seed;
    manifest["config"] = to_json(args);

    auto write_atomic_graphs = [](const std::vector<LabeledGraph>& gs, const fs::path& p) {
        std::ostringstream os;
        for (const auto& g : gs) os << detail::graph_to_json(g).dump() << "\n";
        atomic_write(p, os.str());
    };

    if (args.kind == "spurious-motif") {
        MotifSpec spec;
        spec.base_lo = args.base_lo;
        spec.base_hi = args.base_hi;
        spec.feat_dim = args.feat_dim;
        spec.feat_noise = args.feat_noise;
        RngStream root(args.seed);
        auto train = gen_spurious_motif(args.n, args.b, true, root.derive(1).seed(), spec);
        auto val = gen_spurious_motif(args.n_val, args.b, true, root.derive(2).seed(), spec);
        auto test = gen_spurious_motif(args.n_test, args.b, false, root.derive(3).seed(), spec);
        write_atomic_graphs(train, dir / "train.jsonl");
        write_atomic_graphs(val, dir / "val.jsonl");
        write_atomic_graphs(test, dir / "test.jsonl");
        manifest["b"] = args.b;
        manifest["counts"] = {{"train", train.size()}, {"val", val.size()},
                              {"test", test.size()}};
    } else if (args.kind == "size-shift") {
        MotifSpec spec;
        spec.base_lo = args.base_lo;
        spec.base_hi = args.base_hi;
        spec.feat_dim = args.feat_dim;
        spec.feat_noise = args.feat_noise;
        auto graphs = gen_spurious_motif(args.n, 1.0 / 3.0, false,
                                         RngStream(args.seed).derive(1).seed(), spec);
        SizeSplit split = size_shift_split(graphs, args.train_max,
                                           {args.val_lo, args.val_hi}, args.test_min);
        write_atomic_graphs(split.train, dir / "train.jsonl");
        write_atomic_graphs(split.val, dir / "val.jsonl");
        write_atomic_graphs(split.test, dir / "test.jsonl");
        manifest["thresholds"] = {{"train_max", args.train_max},
                                  {"val", {args.val_lo, args.val_hi}},
                                  {"test_min", args.test_min}};
        manifest["counts"] = {{"train", split.train.size()},
                              {"val", split.val.size()},
                              {"test", split.test.size()},
                              {"dropped", split.dropped}};
    } else if (args.kind == "sanity") {
        RngStream root(args.seed);
        auto train = gen_sanity_linear(args.n, root.derive(1).seed());
        auto val = gen_sanity_linear(args.n_val, root.derive(2).seed());
        auto test = gen_sanity_linear(args.n_test, root.derive(3).seed());
        write_atomic_graphs(train, dir / "train.jsonl");
        write_atomic_graphs(val, dir / "val.jsonl");
        write_atomic_graphs(test, dir / "test.jsonl");
        manifest["counts"] = {{"train", train.size()}, {"val", val.size()},
                              {"test", test.size()}};
    } else if (args.kind == "node-domains") {
        NodeDataset ds = gen_node_domains(args.n_per_domain, args.domains, args.spurious,
                                          args.seed);
        atomic_write(dir / "node_dataset.json", node_dataset_to_json(ds).dump() + "\n");
        manifest["spurious_strength"] = args.spurious;
        manifest["counts"] = {{"nodes", ds.n}, {"edges", ds.edges.size()},
                              {"domains", args.domains}};
    } else {
        throw std::invalid_argument("gen-data: unknown kind '" + args.kind + "'");
    }
    write_json_atomic(dir / "manifest.json", manifest);
    write_json_atomic(dir / "gen_config.json", to_json(args));
    log_info("gen-data: wrote " + args.kind + " dataset to " + args.out);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    TrainConfig cfg;
    std::string data_dir;
    std::string out_dir;
    std::vector<std::uint64_t> seeds = {0};
    int jobs = 1;
};

inline nlohmann::json to_json(const TrainArgs& a) {
    nlohmann::json j = to_json(a.cfg);
    j["data"] = a.data_dir;
    j["out"] = a.out_dir;
    j["seeds"] = a.seeds;
    j["jobs"] = a.jobs;
    return j;
}

inline TrainArgs train_args_from_json(const nlohmann::json& j) {
    TrainArgs a;
    a.cfg = train_config_from_json(j);
    if (j.contains("data")) a.data_dir = j.at("data").get<std::string>();
    if (j.contains("out")) a.out_dir = j.at("out").get<std::string>();
    if (j.contains("seeds")) a.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("jobs")) a.jobs = j.at("jobs").get<int>();
    return a;
}

inline nlohmann::json run_record_to_json(const RunRecord& rec) {
    nlohmann::json j;
    j["method"] = method_name(rec.method);
    j["task"] = task_name(rec.task);
    j["seed"] = rec.seed;
    j["config_hash"] = rec.config_hash;
    j["classes"] = rec.classes;
    j["best_epoch"] = rec.best_epoch;
    j["best_val_acc"] = rec.best_val_acc;
    j["epochs"] = nlohmann::json::array();
    for (const auto& m : rec.epochs)
        j["epochs"].push_back({{"epoch", m.epoch},
                               {"ce", m.ce},
                               {"kld", m.kld},
                               {"dist", m.dist},
                               {"val_acc", m.val_acc}});
    return j;
}

inline nlohmann::json checkpoint_to_json(const RunRecord& rec, const TrainConfig& cfg) {
    nlohmann::json j;
    j["format"] = "dps-checkpoint";
    j["method"] = method_name(rec.method);
    j["task"] = task_name(rec.task);
    j["classes"] = rec.classes;
    j["feat_dim"] = rec.feat_dim;
    j["best_epoch"] = rec.best_epoch;
    j["best_val_acc"] = rec.best_val_acc;
    j["config"] = to_json(cfg);
    j["predictor"] = params_to_json(named_params(rec.best_predictor));
    j["predictor_meta"] = {{"in_dim", rec.best_predictor.in_dim},
                           {"hidden", rec.best_predictor.hidden},
                           {"classes", rec.best_predictor.classes},
                           {"layers", rec.best_predictor.gcn.size()}};
    if (rec.best_generators.count() > 0) {
        j["generators"] = params_to_json(named_params(rec.best_generators));
        j["generator_meta"] = {{"k", rec.best_generators.count()},
                               {"kind", rec.best_generators.kind == Mask::Kind::node
                                            ? "node"
                                            : "edge"},
                               {"in_dim", rec.best_generators.in_dim},
                               {"hidden", rec.best_generators.hidden}};
    }
    return j;
}

struct Checkpoint {
    TrainConfig cfg;
    PredictorParams predictor;
    GeneratorParams generators;  // count()==0 when absent
    int classes = 0;
    int feat_dim = 0;
    double best_val_acc = -1.0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    nlohmann::json j = read_json(path);
    if (!j.contains("format") || j.at("format") != "dps-checkpoint")
        throw std::invalid_argument(path + ": not a dps checkpoint");
    Checkpoint ck;
    ck.cfg = train_config_from_json(j.at("config"));
    ck.cfg.method = method_from_name(j.at("method").get<std::string>());
    ck.cfg.task = task_from_name(j.at("task").get<std::string>());
    ck.classes = j.at("classes").get<int>();
    ck.feat_dim = j.at("feat_dim").get<int>();
    ck.best_val_acc = j.at("best_val_acc").get<double>();

    const auto& pm = j.at("predictor_meta");
    RngStream dummy(0);
    ck.predictor = init_predictor(pm.at("in_dim").get<int>(), pm.at("hidden").get<int>(),
                                  pm.at("classes").get<int>(), pm.at("layers").get<int>(),
                                  dummy);
    auto pred_named = named_params(ck.predictor);
    params_from_json(j.at("predictor"), pred_named);

    if (j.contains("generators")) {
        const auto& gm = j.at("generator_meta");
        ck.generators = init_generators(
            gm.at("k").get<int>(), gm.at("in_dim").get<int>(), gm.at("hidden").get<int>(),
            gm.at("kind").get<std::string>() == "node" ? Mask::Kind::node : Mask::Kind::edge,
            ck.cfg.gcn_layers, dummy);
        auto gen_named = named_params(ck.generators);
        params_from_json(j.at("generators"), gen_named);
    }
    return ck;
}

inline std::string run_tag(Method m, std::uint64_t seed) {
    return method_name(m) + "_seed" + std::to_string(seed);
}

/// Trains one (config, seed) run: streams per-epoch CSV (flushed per epoch),
/// then writes the RunRecord and best checkpoint atomically.
inline RunRecord train_one(const GraphDataset* gdata, const NodeDataset* ndata,
                           TrainConfig cfg, std::uint64_t seed,
                           const std::filesystem::path& out_dir,
                           const std::string& hash) {
    namespace fs = std::filesystem;
    cfg.seed = seed;
    fs::create_directories(out_dir);
    const std::string tag = run_tag(cfg.method, seed);
    std::ofstream csv(out_dir / ("metrics_" + tag + ".csv"));
    csv << "epoch,domain,ce,kld,dist,val_acc\n";
    EpochCallback cb = [&](const EpochMetrics& m) {
        for (std::size_t d = 0; d < m.ce.size(); ++d)
            csv << m.epoch << "," << (d + 1) << "," << format_double(m.ce[d]) << ","
                << format_double(m.kld) << "," << format_double(m.dist) << ","
                << format_double(m.val_acc) << "\n";
        csv.flush();
    };
    RunRecord rec = gdata ? train_run(*gdata, cfg, cb) : train_run(*ndata, cfg, cb);
    rec.config_hash = hash;
    write_json_atomic(out_dir / ("run_" + tag + ".json"), run_record_to_json(rec));
    write_json_atomic(out_dir / ("checkpoint_" + tag + ".json"),
                      checkpoint_to_json(rec, cfg));
    return rec;
}

inline GraphDataset load_graph_dataset(const std::string& data_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(data_dir);
    if (!fs::exists(dir / "train.jsonl"))
        throw std::invalid_argument("train: missing dataset file " +
                                    (dir / "train.jsonl").string());
    return make_graph_dataset(read_graphs((dir / "train.jsonl").string()),
                              read_graphs((dir / "val.jsonl").string()));
}

inline std::vector<RunRecord> run_train(const TrainArgs& args) {
    if (args.out_dir.empty()) throw std::invalid_argument("train: --out is required");
    if (args.seeds.empty()) throw std::invalid_argument("train: empty seed list");
    validate(args.cfg);
    if (args.cfg.method == Method::erm &&
        (args.cfg.alpha != 0.5 || args.cfg.beta != 0.1 || args.cfg.k != 3))
        log_info("train: method erm ignores K/alpha/beta");

    GraphDataset gdata;
    NodeDataset ndata;
    if (args.cfg.task == Task::graph) {
        gdata = load_graph_dataset(args.data_dir);
    } else {
        const std::filesystem::path p =
            std::filesystem::path(args.data_dir) / "node_dataset.json";
        if (!std::filesystem::exists(p))
            throw std::invalid_argument("train: missing dataset file " + p.string());
        ndata = read_node_dataset(p.string());
    }
    write_json_atomic(std::filesystem::path(args.out_dir) / "train_config.json",
                      to_json(args));

    std::vector<RunRecord> records(args.seeds.size());
    run_parallel(args.seeds.size(), args.jobs, [&](std::size_t i) {
        log_debug("train: seed " + std::to_string(args.seeds[i]));
        // the hash identifies the scientific configuration (hyperparameters +
        // seed), not execution details like paths or worker counts
        TrainConfig cfg = args.cfg;
        cfg.seed = args.seeds[i];
        records[i] = train_one(args.cfg.task == Task::graph ? &gdata : nullptr,
                               args.cfg.task == Task::node ? &ndata : nullptr, args.cfg,
                               args.seeds[i], args.out_dir, config_hash(to_json(cfg)));
    });
    return records;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string data_dir;
    std::string split = "test";
    std::string out_dir;
    std::uint64_t eval_seed = 1;
    std::size_t domain_eval_cap = 400;  // graphs used for per-domain CE / energies
};

inline nlohmann::json to_json(const EvalArgs& a) {
    return {{"checkpoint", a.checkpoint}, {"data", a.data_dir},   {"split", a.split},
            {"out", a.out_dir},           {"eval_seed", a.eval_seed},
            {"domain_eval_cap", a.domain_eval_cap}};
}

inline MetricReport eval_checkpoint(const Checkpoint& ck, const EvalArgs& args) {
    MetricReport report;
    if (ck.cfg.task == Task::graph) {
        const auto path =
            std::filesystem::path(args.data_dir) / (args.split + ".jsonl");
        auto graphs = read_graphs(path.string());
        if (graphs.empty())
            throw std::invalid_argument("eval: split '" + args.split + "' in " +
                                        args.data_dir + " is empty");
        if (graphs[0].feat_dim != ck.feat_dim)
            throw std::invalid_argument(
                "eval: checkpoint expects " + std::to_string(ck.feat_dim) +
                "-dim features, dataset has " + std::to_string(graphs[0].feat_dim));
        std::vector<int> labels, preds;
        std::vector<double> scores;
        for (const auto& g : graphs) {
            Tensor logits = predictor_logits(g, std::nullopt, ck.predictor);
            labels.push_back(g.y);
            preds.push_back(detail::argmax_row(logits, 0));
            if (ck.classes == 2) {
                const double lse = log_sum_exp(logits).value();
                scores.push_back(std::exp(logits.at(0, 1) - lse));
            }
        }
        report.accuracy = accuracy(preds, labels);
        report.macro_f1 = macro_f1(preds, labels, ck.classes);
        if (ck.classes == 2) report.roc_auc = roc_auc(scores, labels);
        if (ck.cfg.method != Method::erm) {
            std::vector<LabeledGraph> capped = graphs;
            if (capped.size() > args.domain_eval_cap) capped.resize(args.domain_eval_cap);
            DomainEval ev = eval_domains_graph(ck.predictor, ck.generators, ck.cfg.method,
                                               ck.cfg, capped, args.eval_seed);
            report.per_domain_ce = ev.per_domain_ce;
            report.equipredictivity_gap = equipredictivity_gap(ev.per_domain_ce);
            report.diversity = diversity_from_energies(ev.source_energies, ev.energies);
        }
    } else {
        const auto path = std::filesystem::path(args.data_dir) / "node_dataset.json";
        NodeDataset ds = read_node_dataset(path.string());
        if (ds.feat_dim != ck.feat_dim)
            throw std::invalid_argument(
                "eval: checkpoint expects " + std::to_string(ck.feat_dim) +
                "-dim features, dataset has " + std::to_string(ds.feat_dim));
        Split split = args.split == "train" ? Split::train
                                            : (args.split == "val" ? Split::val : Split::test);
        const auto idx = ds.split_indices(split);
        if (idx.empty())
            throw std::invalid_argument("eval: split '" + args.split + "' is empty");
        Tensor ahat = normalize_adjacency(adjacency_tensor(ds.n, ds.edges));
        Tensor logits = predictor_logits_nodes(ahat, features_tensor(ds), ck.predictor);
        std::vector<int> labels, preds;
        std::vector<double> scores;
        for (std::size_t v : idx) {
            labels.push_back(ds.labels[v]);
            preds.push_back(detail::argmax_row(logits, v));
            if (ck.classes == 2) {
                Tensor row = row_select(logits, {v});
                const double lse = log_sum_exp(row).value();
                scores.push_back(std::exp(row.at(0, 1) - lse));
            }
        }
        report.accuracy = accuracy(preds, labels);
        report.macro_f1 = macro_f1(preds, labels, ck.classes);
        if (ck.classes == 2) report.roc_auc = roc_auc(scores, labels);
        if (ck.cfg.method != Method::erm) {
            DomainEval ev = eval_domains_node(ck.predictor, ck.generators, ck.cfg.method,
                                              ck.cfg, ds, split, args.eval_seed);
            report.per_domain_ce = ev.per_domain_ce;
            report.equipredictivity_gap = equipredictivity_gap(ev.per_domain_ce);
            report.diversity = diversity_from_energies(ev.source_energies, ev.energies);
        }
    }
    return report;
}

inline std::string metric_csv_row(const std::string& method, std::uint64_t seed,
                                  const std::string& split, const MetricReport& r) {
    std::ostringstream os;
    os << method << "," << seed << "," << split << "," << format_double(r.accuracy) << ","
       << format_double(r.macro_f1) << ",";
    if (r.roc_auc) os << format_double(*r.roc_auc);
    os << ",";
    if (r.equipredictivity_gap) os << format_double(*r.equipredictivity_gap);
    os << ",";
    if (r.diversity && r.diversity->d_intra) os << format_double(*r.diversity->d_intra);
    return os.str();
}

inline MetricReport run_eval(const EvalArgs& args) {
    if (args.checkpoint.empty() || args.data_dir.empty())
        throw std::invalid_argument("eval: --checkpoint and --data are required");
    Checkpoint ck = load_checkpoint(args.checkpoint);
    MetricReport report = eval_checkpoint(ck, args);
    if (!args.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(args.out_dir);
        nlohmann::json j = to_json(report);
        j["method"] = method_name(ck.cfg.method);
        j["seed"] = ck.cfg.seed;
        j["split"] = args.split;
        write_json_atomic(fs::path(args.out_dir) / ("eval_" + args.split + ".json"), j);
        atomic_write(fs::path(args.out_dir) / ("eval_" + args.split + ".csv"),
                     "method,seed,split,accuracy,macro_f1,roc_auc,equipredictivity_gap,"
                     "d_intra\n" +
                         metric_csv_row(method_name(ck.cfg.method), ck.cfg.seed, args.split,
                                        report) +
                         "\n");
        write_json_atomic(fs::path(args.out_dir) / "eval_config.json", to_json(args));
    }
    return report;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
    TrainConfig cfg;  // the dps base config; variants derive from it
    std::string data_dir;
    std::string out_dir;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    int jobs = 1;
    std::uint64_t eval_seed = 1;
};

inline nlohmann::json to_json(const AblateArgs& a) {
    nlohmann::json j = to_json(a.cfg);
    j["data"] = a.data_dir;
    j["out"] = a.out_dir;
    j["seeds"] = a.seeds;
    j["jobs"] = a.jobs;
    j["eval_seed"] = a.eval_seed;
    return j;
}

struct AblationVariant {
    std::string label;
    TrainConfig cfg;
};

inline std::vector<AblationVariant> ablation_variants(const TrainConfig& base) {
    std::vector<AblationVariant> out;
    TrainConfig dps = base;
    dps.method = Method::dps;
    out.push_back({"dps", dps});
    TrainConfig no_dist = dps;
    no_dist.alpha = 0.0;
    out.push_back({"dps_no_dist", no_dist});
    TrainConfig no_kld = dps;
    no_kld.beta = 0.0;
    out.push_back({"dps_no_kld", no_kld});
    TrainConfig rnd = base;
    rnd.method = Method::dps_random;
    out.push_back({"dps_random", rnd});
    TrainConfig rex = base;
    rex.method = Method::dps_rex;
    out.push_back({"dps_rex", rex});
    TrainConfig erm = base;
    erm.method = Method::erm;
    out.push_back({"erm", erm});
    return out;
}

/// Runs the six-method comparison and emits the Table-4-shaped CSV:
/// one row per method with mean/std test accuracy and mean d_intra.
inline void run_ablate(const AblateArgs& args) {
    namespace fs = std::filesystem;
    if (args.out_dir.empty()) throw std::invalid_argument("ablate: --out is required");
    if (args.seeds.empty()) throw std::invalid_argument("ablate: empty seed list");
    GraphDataset gdata;
    NodeDataset ndata;
    std::vector<LabeledGraph> test_graphs;
    if (args.cfg.task == Task::graph) {
        gdata = load_graph_dataset(args.data_dir);
        test_graphs =
            read_graphs((fs::path(args.data_dir) / "test.jsonl").string());
        if (test_graphs.empty()) throw std::invalid_argument("ablate: empty test split");
    } else {
        ndata = read_node_dataset(
            (fs::path(args.data_dir) / "node_dataset.json").string());
    }
    fs::create_directories(args.out_dir);
    write_json_atomic(fs::path(args.out_dir) / "ablate_config.json", to_json(args));

    const auto variants = ablation_variants(args.cfg);
    struct Cell {
        double acc = 0.0;
        std::optional<double> d_intra;
    };
    std::vector<std::vector<Cell>> table(variants.size(),
                                         std::vector<Cell>(args.seeds.size()));

    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t v = 0; v < variants.size(); ++v)
        for (std::size_t s = 0; s < args.seeds.size(); ++s) jobs.emplace_back(v, s);

    run_parallel(jobs.size(), args.jobs, [&](std::size_t j) {
        const auto [v, s] = jobs[j];
        TrainConfig cfg = variants[v].cfg;
        cfg.seed = args.seeds[s];
        const fs::path run_dir = fs::path(args.out_dir) / variants[v].label;
        RunRecord rec =
            train_one(args.cfg.task == Task::graph ? &gdata : nullptr,
                      args.cfg.task == Task::node ? &ndata : nullptr, cfg, cfg.seed,
                      run_dir, config_hash(to_json(cfg)));
        Cell cell;
        if (args.cfg.task == Task::graph) {
            cell.acc = graph_accuracy(rec.best_predictor, test_graphs);
            if (cfg.method != Method::erm && cfg.k >= 2) {
                std::vector<LabeledGraph> capped = test_graphs;
                if (capped.size() > 300) capped.resize(300);
                DomainEval ev = eval_domains_graph(rec.best_predictor, rec.best_generators,
                                                   cfg.method, cfg, capped, args.eval_seed);
                cell.d_intra = diversity_from_energies(ev.source_energies, ev.energies)
                                   .d_intra;
            }
        } else {
            cell.acc = node_accuracy(rec.best_predictor, ndata, Split::test);
            if (cfg.method != Method::erm && cfg.k >= 2) {
                DomainEval ev = eval_domains_node(rec.best_predictor, rec.best_generators,
                                                  cfg.method, cfg, ndata, Split::test,
                                                  args.eval_seed);
                cell.d_intra = diversity_from_energies(ev.source_energies, ev.energies)
                                   .d_intra;
            }
        }
        table[v][s] = cell;
        log_info("ablate: " + variants[v].label + " seed " + std::to_string(cfg.seed) +
                 " test_acc " + format_double(cell.acc));
    });

    std::ostringstream csv;
    csv << "method,seeds,test_acc_mean,test_acc_std,d_intra_mean\n";
    for (std::size_t v = 0; v < variants.size(); ++v) {
        double mean = 0.0;
        for (const Cell& c : table[v]) mean += c.acc;
        mean /= static_cast<double>(args.seeds.size());
        double var = 0.0;
        for (const Cell& c : table[v]) var += (c.acc - mean) * (c.acc - mean);
        var /= static_cast<double>(args.seeds.size());
        std::ostringstream seeds;
        for (std::size_t s = 0; s < args.seeds.size(); ++s)
            seeds << (s ? ";" : "") << args.seeds[s];
        csv << variants[v].label << "," << seeds.str() << "," << format_double(mean) << ","
            << format_double(std::sqrt(var)) << ",";
        double d_sum = 0.0;
        int d_n = 0;
        for (const Cell& c : table[v])
            if (c.d_intra) {
                d_sum += *c.d_intra;
                ++d_n;
            }
        if (d_n > 0) csv << format_double(d_sum / d_n);
        csv << "\n";
    }
    atomic_write(fs::path(args.out_dir) / "ablation.csv", csv.str());
    log_info("ablate: wrote " + (fs::path(args.out_dir) / "ablation.csv").string());
}

}  // namespace dps
