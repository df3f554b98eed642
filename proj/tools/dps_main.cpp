#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dps/experiment.hpp"

namespace {

// --config PATH is applied before flag parsing so that flags override the
// file and the file overrides defaults.
std::string find_config_arg(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    return {};
}

int run_guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const std::invalid_argument& e) {
        dps::log_error(e.what());
        return 1;
    } catch (const std::exception& e) {
        dps::log_error(e.what());
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DPS: diverse and predictable subgraph domains for graph OOD generalization"};
    app.require_subcommand(1);
    const std::string config_path = find_config_arg(argc, argv);

    // ---- gen-data ----
    dps::GenDataArgs gen_args;
    std::string gen_config;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset + manifest");
    gen->add_option("--config", gen_config, "JSON config file (flags override)");
    gen->add_option("--kind", gen_args.kind,
                    "spurious-motif | size-shift | sanity | node-domains");
    gen->add_option("--out", gen_args.out, "output directory");
    gen->add_option("--seed", gen_args.seed, "root seed");
    gen->add_option("--b", gen_args.b, "spurious-correlation bias in [1/3, 1]");
    gen->add_option("--n", gen_args.n, "training graphs");
    gen->add_option("--n-val", gen_args.n_val, "validation graphs");
    gen->add_option("--n-test", gen_args.n_test, "test graphs");
    gen->add_option("--base-lo", gen_args.base_lo, "min base size");
    gen->add_option("--base-hi", gen_args.base_hi, "max base size");
    gen->add_option("--train-max", gen_args.train_max, "size-shift: train below this");
    gen->add_option("--val-lo", gen_args.val_lo, "size-shift: val lower bound");
    gen->add_option("--val-hi", gen_args.val_hi, "size-shift: val upper bound");
    gen->add_option("--test-min", gen_args.test_min, "size-shift: test above this");
    gen->add_option("--n-per-domain", gen_args.n_per_domain, "node-domains: nodes per domain");
    gen->add_option("--domains", gen_args.domains, "node-domains: domain count");
    gen->add_option("--spurious", gen_args.spurious, "node-domains: spurious strength");
    gen->add_option("--feat-dim", gen_args.feat_dim, "motif graphs: feature dimension");
    gen->add_option("--feat-noise", gen_args.feat_noise, "motif graphs: feature noise scale");

    // ---- train ----
    dps::TrainArgs train_args;
    std::string train_config, train_method = "dps", train_task = "graph", train_seeds = "0";
    auto* train = app.add_subcommand("train", "train one method over a seed list");
    train->add_option("--config", train_config, "JSON config file (flags override)");
    train->add_option("--data", train_args.data_dir, "dataset directory");
    train->add_option("--out", train_args.out_dir, "output directory");
    train->add_option("--method", train_method, "dps | erm | dps_random | dps_rex");
    train->add_option("--task", train_task, "graph | node");
    train->add_option("--K", train_args.cfg.k, "augmented domain count");
    train->add_option("--alpha", train_args.cfg.alpha, "energy-distance weight");
    train->add_option("--beta", train_args.cfg.beta, "KL weight");
    train->add_option("--rho", train_args.cfg.rho, "Bernoulli prior keep probability");
    train->add_option("--temp", train_args.cfg.temperature, "concrete temperature");
    train->add_option("--temp-end", train_args.cfg.temperature_end,
                      "linear anneal target temperature");
    train->add_option("--inner-steps", train_args.cfg.inner_steps, "inner steps T");
    train->add_option("--epochs", train_args.cfg.epochs, "training epochs");
    train->add_option("--batch", train_args.cfg.batch_size, "batch size (graph task)");
    train->add_option("--lr-gen", train_args.cfg.lr_gen, "generator learning rate");
    train->add_option("--lr-pred", train_args.cfg.lr_pred, "predictor learning rate");
    train->add_option("--drop-rate", train_args.cfg.drop_rate, "dps_random drop rate");
    train->add_option("--hidden", train_args.cfg.hidden, "hidden width");
    train->add_option("--layers", train_args.cfg.gcn_layers, "GCN layers");
    train->add_option("--seeds", train_seeds, "seed list: N, A..B, or a,b,c");
    train->add_option("--jobs", train_args.jobs, "parallel worker slots");

    // ---- eval ----
    dps::EvalArgs eval_args;
    std::string eval_config;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval->add_option("--config", eval_config, "JSON config file (flags override)");
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint JSON path");
    eval->add_option("--data", eval_args.data_dir, "dataset directory");
    eval->add_option("--split", eval_args.split, "train | val | test");
    eval->add_option("--out", eval_args.out_dir, "output directory");
    eval->add_option("--eval-seed", eval_args.eval_seed, "mask-sampling seed for diversity");

    // ---- ablate ----
    dps::AblateArgs ablate_args;
    std::string ablate_config, ablate_task = "graph", ablate_seeds = "0..2";
    auto* ablate =
        app.add_subcommand("ablate", "run the six-method comparison and emit ablation.csv");
    ablate->add_option("--config", ablate_config, "JSON config file (flags override)");
    ablate->add_option("--data", ablate_args.data_dir, "dataset directory");
    ablate->add_option("--out", ablate_args.out_dir, "output directory");
    ablate->add_option("--task", ablate_task, "graph | node");
    ablate->add_option("--K", ablate_args.cfg.k, "augmented domain count");
    ablate->add_option("--alpha", ablate_args.cfg.alpha, "energy-distance weight");
    ablate->add_option("--beta", ablate_args.cfg.beta, "KL weight");
    ablate->add_option("--rho", ablate_args.cfg.rho, "prior keep probability");
    ablate->add_option("--temp", ablate_args.cfg.temperature, "concrete temperature");
    ablate->add_option("--inner-steps", ablate_args.cfg.inner_steps, "inner steps T");
    ablate->add_option("--epochs", ablate_args.cfg.epochs, "training epochs");
    ablate->add_option("--batch", ablate_args.cfg.batch_size, "batch size");
    ablate->add_option("--lr-gen", ablate_args.cfg.lr_gen, "generator learning rate");
    ablate->add_option("--lr-pred", ablate_args.cfg.lr_pred, "predictor learning rate");
    ablate->add_option("--drop-rate", ablate_args.cfg.drop_rate, "dps_random drop rate");
    ablate->add_option("--hidden", ablate_args.cfg.hidden, "hidden width");
    ablate->add_option("--layers", ablate_args.cfg.gcn_layers, "GCN layers");
    ablate->add_option("--seeds", ablate_seeds, "seed list: N, A..B, or a,b,c");
    ablate->add_option("--jobs", ablate_args.jobs, "parallel worker slots");
    ablate->add_option("--eval-seed", ablate_args.eval_seed, "diversity mask seed");

    // preload structs from --config before parsing so flags take precedence
    if (!config_path.empty()) {
        const int rc = run_guarded([&] {
            const nlohmann::json j = dps::read_json(config_path);
            gen_args = dps::gen_data_args_from_json(j);
            train_args = dps::train_args_from_json(j);
            if (j.contains("method")) train_method = j.at("method").get<std::string>();
            if (j.contains("task")) {
                train_task = j.at("task").get<std::string>();
                ablate_task = train_task;
            }
            if (j.contains("checkpoint"))
                eval_args.checkpoint = j.at("checkpoint").get<std::string>();
            if (j.contains("data")) {
                eval_args.data_dir = j.at("data").get<std::string>();
                ablate_args.data_dir = eval_args.data_dir;
            }
            if (j.contains("split")) eval_args.split = j.at("split").get<std::string>();
            if (j.contains("out")) {
                eval_args.out_dir = j.at("out").get<std::string>();
                ablate_args.out_dir = eval_args.out_dir;
            }
            if (j.contains("eval_seed")) {
                eval_args.eval_seed = j.at("eval_seed").get<std::uint64_t>();
                ablate_args.eval_seed = eval_args.eval_seed;
            }
            ablate_args.cfg = dps::train_config_from_json(j);
            if (j.contains("jobs")) ablate_args.jobs = j.at("jobs").get<int>();
            if (j.contains("seeds")) {
                const auto seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
                std::string list;
                for (std::size_t i = 0; i < seeds.size(); ++i)
                    list += (i ? "," : "") + std::to_string(seeds[i]);
                train_seeds = list;
                ablate_seeds = list;
            }
        });
        if (rc != 0) return rc;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (gen->parsed()) return run_guarded([&] { dps::run_gen_data(gen_args); });
    if (train->parsed())
        return run_guarded([&] {
            train_args.cfg.method = dps::method_from_name(train_method);
            train_args.cfg.task = dps::task_from_name(train_task);
            train_args.seeds = dps::parse_seeds(train_seeds);
            dps::run_train(train_args);
        });
    if (eval->parsed()) return run_guarded([&] { dps::run_eval(eval_args); });
    if (ablate->parsed())
        return run_guarded([&] {
            ablate_args.cfg.task = dps::task_from_name(ablate_task);
            ablate_args.seeds = dps::parse_seeds(ablate_seeds);
            dps::run_ablate(ablate_args);
        });
    return 1;
}
