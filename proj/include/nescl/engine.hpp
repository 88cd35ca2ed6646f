#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nescl/augment.hpp"
#include "nescl/common.hpp"
#include "nescl/dataset.hpp"
#include "nescl/evaluate.hpp"
#include "nescl/knn.hpp"
#include "nescl/propagate.hpp"
#include "nescl/train.hpp"

namespace nescl {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string aug_strategy_name(AugmentStrategy s) {
    switch (s) {
        case AugmentStrategy::node_dropout: return "nd";
        case AugmentStrategy::edge_dropout: return "ed";
        case AugmentStrategy::random_walk: return "rw";
    }
    return "?";
}

inline AugmentStrategy parse_aug_strategy(const std::string& s) {
    if (s == "nd" || s == "node_dropout") return AugmentStrategy::node_dropout;
    if (s == "ed" || s == "edge_dropout") return AugmentStrategy::edge_dropout;
    if (s == "rw" || s == "random_walk") return AugmentStrategy::random_walk;
    throw ConfigError("unknown augmentation strategy '" + s + "'");
}

inline const char* neighbor_strategy_name(NeighborStrategy s) {
    switch (s) {
        case NeighborStrategy::identity_weights: return "identity_weights";
        case NeighborStrategy::similarity_weights: return "similarity_weights";
        case NeighborStrategy::random_sampling: return "random_sampling";
        case NeighborStrategy::weighted_sampling: return "weighted_sampling";
    }
    return "?";
}

inline NeighborStrategy parse_neighbor_strategy(const std::string& s) {
    if (s == "identity_weights") return NeighborStrategy::identity_weights;
    if (s == "similarity_weights") return NeighborStrategy::similarity_weights;
    if (s == "random_sampling") return NeighborStrategy::random_sampling;
    if (s == "weighted_sampling") return NeighborStrategy::weighted_sampling;
    throw ConfigError("unknown neighbor strategy '" + s + "'");
}

inline const char* interacted_strategy_name(InteractedStrategy s) {
    return s == InteractedStrategy::all ? "all" : "sample_one";
}

inline InteractedStrategy parse_interacted_strategy(const std::string& s) {
    if (s == "all") return InteractedStrategy::all;
    if (s == "sample_one") return InteractedStrategy::sample_one;
    throw ConfigError("unknown interacted strategy '" + s + "'");
}

inline json config_to_json(const TrainConfig& cfg) {
    return json{{"loss", loss_kind_name(cfg.loss)},
                {"tau", cfg.tau},
                {"alpha", cfg.alpha},
                {"rho", cfg.rho},
                {"aug", aug_strategy_name(cfg.aug)},
                {"layers", cfg.layers},
                {"dim", cfg.dim},
                {"batch", cfg.batch},
                {"epochs", cfg.epochs},
                {"lr", cfg.lr},
                {"seed", cfg.seed},
                {"k_neighbors", cfg.k_neighbors},
                {"neighbor_strategy", neighbor_strategy_name(cfg.neighbor_strategy)},
                {"interacted_strategy", interacted_strategy_name(cfg.interacted_strategy)},
                {"drop_ranking", cfg.drop_ranking},
                {"drop_layer0", cfg.drop_layer0},
                {"renormalize", cfg.renorm == RenormMode::corrupted ? "corrupted" : "original"},
                {"full_support", cfg.full_support},
                {"normalize_reps", cfg.normalize_reps},
                {"weight_decay", cfg.weight_decay},
                {"view_redraw",
                 cfg.view_redraw == TrainConfig::ViewRedraw::step ? "step" : "epoch"},
                {"eval_every", cfg.eval_every},
                {"patience", cfg.patience}};
}

inline std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Everything needed to re-execute a run bit-identically on one platform.
struct RunManifest {
    TrainConfig cfg;
    std::string train_path;
    std::string test_path;
    std::string dataset_hash;
    std::string out_dir;
    std::string started_at;
    std::string finished_at;

    json to_json() const {
        return json{{"build", std::string("nescl ") + kVersion},
                    {"config", config_to_json(cfg)},
                    {"dataset",
                     json{{"train", train_path}, {"test", test_path}, {"hash", dataset_hash}}},
                    {"out_dir", out_dir},
                    {"started_at", started_at},
                    {"finished_at", finished_at}};
    }
};

struct EpochRow {
    std::uint32_t epoch;
    double loss_total;
    double loss_rank;
    double loss_contrast;
    bool evaluated = false;
    double recall = 0.0;
    double ndcg = 0.0;
};

struct RunResult {
    double best_ndcg = -1.0;
    std::uint32_t best_epoch = 0;
    EvalReport final_eval;
    std::vector<EpochRow> history;
    fs::path metrics_csv;
    fs::path best_checkpoint;
    fs::path final_checkpoint;
};

namespace detail {

inline std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace detail

inline void write_eval_report(const EvalReport& report, const fs::path& json_path,
                              const fs::path& csv_path) {
    json j{{"k", report.k},
           {"recall_at_k", report.recall_at_k},
           {"ndcg_at_k", report.ndcg_at_k},
           {"evaluated_users", report.evaluated_users}};
    if (!report.per_user.empty()) {
        json rows = json::array();
        for (const UserMetrics& m : report.per_user)
            rows.push_back(json{{"user", m.user}, {"recall", m.recall}, {"ndcg", m.ndcg}});
        j["per_user"] = rows;
    }
    write_file(json_path, j.dump(2) + "\n");

    std::string csv = "k,recall@k,ndcg@k,evaluated_users\n";
    csv += std::to_string(report.k) + "," + detail::fmt_metric(report.recall_at_k) + "," +
           detail::fmt_metric(report.ndcg_at_k) + "," + std::to_string(report.evaluated_users) +
           "\n";
    write_file(csv_path, csv);
}

// Loads the cached neighbor table for (side, k) or builds and caches it.
inline NeighborTable load_or_build_neighbors(const InteractionDataset& ds, Side side,
                                             std::uint32_t k, const fs::path& cache_dir) {
    const std::string name = neighbor_cache_name(side, k, dataset_hash(ds));
    const fs::path path = cache_dir / name;
    if (fs::exists(path)) {
        NeighborTable nt = load_neighbor_table(path);
        if (nt.k == k && nt.side == side) return nt;
    }
    NeighborTable nt = build_neighbor_table(ds, side, k);
    fs::create_directories(cache_dir);
    save_neighbor_table(nt, path);
    return nt;
}

// Dataset plus everything a run records about where it came from.
struct RunInputs {
    std::string train_path;
    std::string test_path;
    fs::path cache_dir;  // neighbor-table sidecars; falls back to the out dir
    const NeighborTable* nt_user = nullptr;
    const NeighborTable* nt_item = nullptr;
};

// Full training run: manifest first, then epoch loop with periodic
// evaluation, best/final checkpoints, metrics CSV and a final report.
inline RunResult run_training(const TrainConfig& cfg, const InteractionDataset& ds,
                              const fs::path& out_dir, const RunInputs& inputs = {}) {
    cfg.validate();
    fs::create_directories(out_dir);

    RunManifest manifest;
    manifest.cfg = cfg;
    manifest.train_path = inputs.train_path;
    manifest.test_path = inputs.test_path;
    manifest.dataset_hash = hash_hex(dataset_hash(ds));
    manifest.out_dir = out_dir.string();
    manifest.started_at = timestamp_now();
    write_file(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");

    const BipartiteGraph graph = build_graph(ds);
    const AugmentedGraph main_view = identity_view(graph);

    const NeighborTable* nt_user = inputs.nt_user;
    const NeighborTable* nt_item = inputs.nt_item;
    NeighborTable local_user, local_item;
    if (cfg.contrastive_active() && uses_neighbor_positives(cfg.loss)) {
        const fs::path cache_dir = inputs.cache_dir.empty() ? out_dir : inputs.cache_dir;
        if (nt_user == nullptr) {
            local_user = load_or_build_neighbors(ds, Side::user, cfg.k_neighbors, cache_dir);
            nt_user = &local_user;
        }
        if (nt_item == nullptr) {
            local_item = load_or_build_neighbors(ds, Side::item, cfg.k_neighbors, cache_dir);
            nt_item = &local_item;
        }
    }

    ModelParams params = init_params(graph.node_count(), cfg.dim, cfg.seed ^ 0x9e3779b97f4a7c15ull);
    AdamState opt(params.base.rows, params.base.cols);
    Rng rng(cfg.seed);

    RunResult result;
    result.metrics_csv = out_dir / "metrics.csv";
    result.best_checkpoint = out_dir / "best.ckpt";
    result.final_checkpoint = out_dir / "final.ckpt";

    std::ofstream csv(result.metrics_csv, std::ios::trunc);
    if (!csv) throw DataError("cannot write " + result.metrics_csv.string());
    csv << "epoch,loss_total,loss_rank,loss_contrastive,recall@20,ndcg@20\n";

    const Checkpoint ckpt_meta{cfg.layers, cfg.drop_layer0, cfg.normalize_reps, Mat()};
    std::uint32_t stale_evals = 0;
    for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const EpochReport er = train_epoch(params, opt, ds, graph, main_view, nt_user, nt_item, cfg, rng);
        if (!params.base.all_finite())
            throw NumericError("parameter table diverged at epoch " + std::to_string(epoch));
        EpochRow row{epoch, er.loss_total, er.loss_rank, er.loss_contrast};

        const bool do_eval = cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        if (do_eval) {
            const EvalReport ev =
                evaluate(params.base, graph, ds, cfg.layers, !cfg.drop_layer0, 20);
            row.evaluated = true;
            row.recall = ev.recall_at_k;
            row.ndcg = ev.ndcg_at_k;
            if (ev.ndcg_at_k > result.best_ndcg) {
                result.best_ndcg = ev.ndcg_at_k;
                result.best_epoch = epoch;
                Checkpoint best = ckpt_meta;
                best.base = params.base;
                save_checkpoint(result.best_checkpoint, best);
                stale_evals = 0;
            } else {
                ++stale_evals;
            }
        }

        csv << row.epoch << ',' << detail::fmt_metric(row.loss_total) << ','
            << detail::fmt_metric(row.loss_rank) << ',' << detail::fmt_metric(row.loss_contrast)
            << ',';
        if (row.evaluated)
            csv << detail::fmt_metric(row.recall) << ',' << detail::fmt_metric(row.ndcg);
        else
            csv << ',';
        csv << '\n';
        result.history.push_back(row);

        if (static_cast<int>(log_level()) >= static_cast<int>(LogLevel::info)) {
            std::fprintf(stderr, "epoch %u: loss %.6f", epoch, row.loss_total);
            if (row.evaluated) std::fprintf(stderr, "  ndcg@20 %.5f", row.ndcg);
            std::fprintf(stderr, "\n");
        }
        if (cfg.patience > 0 && stale_evals >= cfg.patience) break;
    }
    csv.close();

    Checkpoint final_ckpt = ckpt_meta;
    final_ckpt.base = params.base;
    save_checkpoint(result.final_checkpoint, final_ckpt);
    result.final_eval = evaluate(params.base, graph, ds, cfg.layers, !cfg.drop_layer0, 20);
    if (result.best_epoch == 0) {
        save_checkpoint(result.best_checkpoint, final_ckpt);
        result.best_epoch = static_cast<std::uint32_t>(result.history.size());
        result.best_ndcg = result.final_eval.ndcg_at_k;
    }
    write_eval_report(result.final_eval, out_dir / "report.json", out_dir / "report.csv");

    manifest.finished_at = timestamp_now();
    write_file(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
    return result;
}

}  // namespace nescl
