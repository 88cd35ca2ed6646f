// nescl: prepare neighbor tables, train, and evaluate graph contrastive
// recommenders on LightGCN-format interaction files.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nescl/engine.hpp"

namespace fs = std::filesystem;
using namespace nescl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct DatasetArgs {
    std::string dataset_dir;
    std::string train_file;
    std::string test_file;

    void add_to(CLI::App& app) {
        app.add_option("--dataset-dir", dataset_dir, "directory containing train.txt/test.txt");
        app.add_option("--train", train_file, "train interactions file");
        app.add_option("--test", test_file, "test interactions file");
    }

    void resolve() {
        if (!dataset_dir.empty()) {
            if (train_file.empty()) train_file = (fs::path(dataset_dir) / "train.txt").string();
            if (test_file.empty()) test_file = (fs::path(dataset_dir) / "test.txt").string();
        }
        if (train_file.empty())
            throw ConfigError("no dataset given; pass --dataset-dir or --train");
        if (!test_file.empty() && !fs::exists(test_file)) test_file.clear();
    }

    fs::path cache_dir() const {
        return dataset_dir.empty() ? fs::path(train_file).parent_path() : fs::path(dataset_dir);
    }
};

std::vector<std::uint32_t> parse_k_list(const std::string& s) {
    std::vector<std::uint32_t> ks;
    std::size_t pos = 0;
    while (pos < s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = s.substr(pos, comma - pos);
        try {
            ks.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
        } catch (const std::exception&) {
            throw ConfigError("bad k value '" + tok + "'");
        }
        pos = comma + 1;
    }
    if (ks.empty()) throw ConfigError("empty k list");
    return ks;
}

int cmd_prepare(const DatasetArgs& data, const std::string& k_list, std::string out_dir) {
    DatasetArgs d = data;
    d.resolve();
    const InteractionDataset ds = load_dataset(d.train_file, d.test_file);
    const std::uint64_t hash = dataset_hash(ds);
    const fs::path out = out_dir.empty() ? d.cache_dir() : fs::path(out_dir);
    fs::create_directories(out);

    for (std::uint32_t k : parse_k_list(k_list)) {
        for (Side side : {Side::user, Side::item}) {
            const fs::path path = out / neighbor_cache_name(side, k, hash);
            if (fs::exists(path)) {
                std::printf("cache hit: %s\n", path.string().c_str());
                continue;
            }
            save_neighbor_table(build_neighbor_table(ds, side, k), path);
            std::printf("wrote %s\n", path.string().c_str());
        }
    }
    return kExitOk;
}

struct SweepSpec {
    std::string key;
    std::vector<std::string> values;
};

SweepSpec parse_sweep(const std::string& s) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--sweep expects key=v1,v2,...");
    SweepSpec spec;
    spec.key = s.substr(0, eq);
    std::size_t pos = eq + 1;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        spec.values.push_back(s.substr(pos, comma - pos));
        pos = comma + 1;
    }
    if (spec.values.empty()) throw ConfigError("--sweep has no values");
    return spec;
}

void apply_sweep_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "tau")
            cfg.tau = std::stod(value);
        else if (key == "alpha")
            cfg.alpha = std::stod(value);
        else if (key == "rho")
            cfg.rho = std::stod(value);
        else if (key == "lr")
            cfg.lr = std::stod(value);
        else if (key == "layers")
            cfg.layers = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "k-neighbors")
            cfg.k_neighbors = static_cast<std::uint32_t>(std::stoul(value));
        else if (key == "seed")
            cfg.seed = std::stoull(value);
        else
            throw ConfigError("unsupported sweep key '" + key + "'");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad sweep value '" + value + "' for key '" + key + "'");
    }
}

int run_one(const TrainConfig& cfg, const InteractionDataset& ds, const fs::path& out_dir,
            const RunInputs& inputs) {
    const RunResult result = run_training(cfg, ds, out_dir, inputs);
    std::printf("done: best ndcg@20 %.5f (epoch %u); final recall@20 %.5f ndcg@20 %.5f\n",
                result.best_ndcg, result.best_epoch, result.final_eval.recall_at_k,
                result.final_eval.ndcg_at_k);
    return kExitOk;
}

int cmd_train(const TrainConfig& cfg, const DatasetArgs& data, const std::string& out_dir,
              const std::string& sweep, unsigned jobs) {
    DatasetArgs d = data;
    d.resolve();
    cfg.validate();
    const InteractionDataset ds = load_dataset(d.train_file, d.test_file);
    RunInputs inputs;
    inputs.train_path = d.train_file;
    inputs.test_path = d.test_file;
    inputs.cache_dir = d.cache_dir();

    if (sweep.empty()) return run_one(cfg, ds, out_dir, inputs);

    const SweepSpec spec = parse_sweep(sweep);
    std::vector<std::pair<TrainConfig, fs::path>> runs;
    for (const std::string& v : spec.values) {
        TrainConfig c = cfg;
        apply_sweep_value(c, spec.key, v);
        c.validate();
        runs.emplace_back(c, fs::path(out_dir) / (spec.key + "_" + v));
    }

    if (jobs <= 1) {
        for (const auto& [c, dir] : runs) run_one(c, ds, dir, inputs);
        return kExitOk;
    }

    // Run-level parallelism at process granularity; each child owns its
    // output directory.
    std::size_t next = 0;
    std::size_t active = 0;
    bool failed = false;
    while (next < runs.size() || active > 0) {
        while (next < runs.size() && active < jobs) {
            const pid_t pid = fork();
            if (pid < 0) throw DataError("fork failed");
            if (pid == 0) {
                int rc = kExitOk;
                try {
                    run_one(runs[next].first, ds, runs[next].second, inputs);
                } catch (...) {
                    rc = 1;
                }
                _exit(rc);
            }
            ++next;
            ++active;
        }
        int status = 0;
        if (wait(&status) > 0) {
            --active;
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed = true;
        }
    }
    return failed ? kExitNumeric : kExitOk;
}

int cmd_eval(const std::string& checkpoint, const DatasetArgs& data, std::uint32_t k,
             const std::string& out_dir) {
    DatasetArgs d = data;
    d.resolve();
    const InteractionDataset ds = load_dataset(d.train_file, d.test_file);
    const BipartiteGraph graph = build_graph(ds);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    if (ckpt.base.rows != graph.node_count())
        throw DataError("checkpoint has " + std::to_string(ckpt.base.rows) +
                        " rows but dataset has " + std::to_string(graph.node_count()) + " nodes");

    const EvalReport report =
        evaluate(ckpt.base, graph, ds, ckpt.layers, !ckpt.drop_layer0, k);
    const fs::path out = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(out);
    write_eval_report(report, out / "report.json", out / "report.csv");
    std::printf("recall@%u %.5f  ndcg@%u %.5f  users %zu\n", k, report.recall_at_k, k,
                report.ndcg_at_k, report.evaluated_users);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph contrastive recommendation trainer"};
    app.require_subcommand(1);

    // prepare
    auto* prepare = app.add_subcommand("prepare", "build and cache KNN neighbor tables");
    DatasetArgs prep_data;
    prep_data.add_to(*prepare);
    std::string prep_k = "5";
    std::string prep_out;
    prepare->add_option("--k", prep_k, "comma-separated neighbor counts");
    prepare->add_option("--out", prep_out, "cache directory (default: dataset dir)");

    // train
    auto* train = app.add_subcommand("train", "train a model");
    DatasetArgs train_data;
    train_data.add_to(*train);
    TrainConfig cfg;
    std::string loss_name = loss_kind_name(cfg.loss);
    std::string aug_name = aug_strategy_name(cfg.aug);
    std::string neighbor_name = neighbor_strategy_name(cfg.neighbor_strategy);
    std::string interacted_name = interacted_strategy_name(cfg.interacted_strategy);
    std::string renorm_name = "corrupted";
    std::string view_redraw_name = "step";
    std::string out_dir = "runs/run";
    std::string sweep;
    unsigned jobs = 1;
    auto* loss_opt = train->add_option("--loss", loss_name, "bpr|sgl|nescl_in|nescl_out|supcon_in|supcon_out");
    auto* tau_opt = train->add_option("--tau", cfg.tau, "softmax temperature");
    train->add_option("--alpha", cfg.alpha, "contrastive loss weight");
    auto* rho_opt = train->add_option("--rho", cfg.rho, "augmentation drop ratio");
    auto* aug_opt = train->add_option("--aug", aug_name, "nd|ed|rw");
    train->add_option("--layers", cfg.layers, "propagation layers");
    train->add_option("--dim", cfg.dim, "embedding dimension");
    train->add_option("--batch", cfg.batch, "batch size");
    train->add_option("--lr", cfg.lr, "learning rate");
    train->add_option("--epochs", cfg.epochs, "training epochs");
    train->add_option("--seed", cfg.seed, "run seed");
    auto* k_opt = train->add_option("--k-neighbors", cfg.k_neighbors, "KNN positives per node");
    auto* ns_opt = train->add_option("--neighbor-strategy", neighbor_name,
                                     "identity_weights|similarity_weights|random_sampling|weighted_sampling");
    auto* is_opt = train->add_option("--interacted-strategy", interacted_name, "all|sample_one");
    auto* dr_flag = train->add_flag("--drop-ranking", cfg.drop_ranking, "train without the ranking loss");
    train->add_flag("--drop-layer0", cfg.drop_layer0, "exclude layer 0 from the concatenation");
    train->add_option("--renormalize", renorm_name, "original|corrupted view normalization");
    train->add_flag("--full-support", cfg.full_support, "use all nodes as the denominator support");
    train->add_flag("--normalize-reps", cfg.normalize_reps,
                    "length-normalize representations before the contrastive loss");
    train->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay on the base table");
    train->add_option("--view-redraw", view_redraw_name, "step|epoch");
    train->add_option("--eval-every", cfg.eval_every, "evaluate every N epochs (0: only at end)");
    train->add_option("--patience", cfg.patience, "early stop after N stale evals (0: off)");
    train->add_option("--out", out_dir, "output directory");
    train->add_option("--sweep", sweep, "key=v1,v2,... grid over one parameter");
    train->add_option("--jobs", jobs, "parallel sweep processes");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    DatasetArgs eval_data;
    eval_data.add_to(*eval);
    std::string ckpt_path;
    std::uint32_t eval_k = 20;
    std::string eval_out;
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--k", eval_k, "ranking cutoff");
    eval->add_option("--out", eval_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(prep_data, prep_k, prep_out);
        if (train->parsed()) {
            cfg.loss = parse_loss_kind(loss_name);
            cfg.aug = parse_aug_strategy(aug_name);
            cfg.neighbor_strategy = parse_neighbor_strategy(neighbor_name);
            cfg.interacted_strategy = parse_interacted_strategy(interacted_name);
            if (renorm_name == "original")
                cfg.renorm = RenormMode::original;
            else if (renorm_name == "corrupted")
                cfg.renorm = RenormMode::corrupted;
            else
                throw ConfigError("--renormalize must be original or corrupted");
            if (view_redraw_name == "step")
                cfg.view_redraw = TrainConfig::ViewRedraw::step;
            else if (view_redraw_name == "epoch")
                cfg.view_redraw = TrainConfig::ViewRedraw::epoch;
            else
                throw ConfigError("--view-redraw must be step or epoch");

            // flags that make no sense for the chosen loss are hard errors
            std::vector<std::string> conflicts;
            if (cfg.loss == LossKind::bpr) {
                if (ns_opt->count()) conflicts.push_back("--neighbor-strategy");
                if (is_opt->count()) conflicts.push_back("--interacted-strategy");
                if (k_opt->count()) conflicts.push_back("--k-neighbors");
                if (tau_opt->count()) conflicts.push_back("--tau");
                if (rho_opt->count()) conflicts.push_back("--rho");
                if (aug_opt->count()) conflicts.push_back("--aug");
                if (dr_flag->count()) conflicts.push_back("--drop-ranking");
            } else if (cfg.loss == LossKind::sgl) {
                if (ns_opt->count()) conflicts.push_back("--neighbor-strategy");
                if (is_opt->count()) conflicts.push_back("--interacted-strategy");
                if (k_opt->count()) conflicts.push_back("--k-neighbors");
            }
            if (!conflicts.empty()) {
                std::string msg = "--loss " + std::string(loss_kind_name(cfg.loss)) +
                                  " conflicts with:";
                for (const std::string& c : conflicts) msg += " " + c;
                throw ConfigError(msg);
            }
            return cmd_train(cfg, train_data, out_dir, sweep, jobs);
        }
        if (eval->parsed()) return cmd_eval(ckpt_path, eval_data, eval_k, eval_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitOk;
}
