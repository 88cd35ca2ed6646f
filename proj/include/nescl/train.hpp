#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nescl/augment.hpp"
#include "nescl/common.hpp"
#include "nescl/dataset.hpp"
#include "nescl/graph.hpp"
#include "nescl/knn.hpp"
#include "nescl/losses.hpp"
#include "nescl/mat.hpp"
#include "nescl/optimizer.hpp"
#include "nescl/propagate.hpp"
#include "nescl/rng.hpp"
#include "nescl/sampling.hpp"

namespace nescl {

enum class LossKind { bpr, sgl, nescl_in, nescl_out, supcon_in, supcon_out };

inline const char* loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::bpr: return "bpr";
        case LossKind::sgl: return "sgl";
        case LossKind::nescl_in: return "nescl_in";
        case LossKind::nescl_out: return "nescl_out";
        case LossKind::supcon_in: return "supcon_in";
        case LossKind::supcon_out: return "supcon_out";
    }
    return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
    if (s == "bpr") return LossKind::bpr;
    if (s == "sgl") return LossKind::sgl;
    if (s == "nescl_in") return LossKind::nescl_in;
    if (s == "nescl_out") return LossKind::nescl_out;
    if (s == "supcon_in") return LossKind::supcon_in;
    if (s == "supcon_out") return LossKind::supcon_out;
    throw ConfigError("unknown loss '" + s + "'");
}

// The contrastive objective a training loss maps onto; bpr has none.
inline ContrastKind contrast_kind_of(LossKind k) {
    switch (k) {
        case LossKind::sgl: return ContrastKind::infonce_self;
        case LossKind::nescl_in: return ContrastKind::nescl_in;
        case LossKind::nescl_out: return ContrastKind::nescl_out;
        case LossKind::supcon_in: return ContrastKind::supcon_in;
        case LossKind::supcon_out: return ContrastKind::supcon_out;
        case LossKind::bpr: break;
    }
    throw ConfigError("bpr has no contrastive component");
}

// Whether the loss draws on the KNN / interacted positive lists at all.
inline bool uses_neighbor_positives(LossKind k) {
    return k == LossKind::nescl_in || k == LossKind::nescl_out || k == LossKind::supcon_in ||
           k == LossKind::supcon_out;
}

struct TrainConfig {
    LossKind loss = LossKind::nescl_out;
    double tau = 0.1;
    double alpha = 0.3;
    double rho = 0.3;
    AugmentStrategy aug = AugmentStrategy::edge_dropout;
    std::uint32_t layers = 2;
    std::uint32_t dim = 32;
    std::size_t batch = 1024;
    std::uint32_t epochs = 50;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    std::uint32_t k_neighbors = 5;
    NeighborStrategy neighbor_strategy = NeighborStrategy::random_sampling;
    InteractedStrategy interacted_strategy = InteractedStrategy::all;
    bool drop_ranking = false;
    bool drop_layer0 = false;
    RenormMode renorm = RenormMode::corrupted;
    bool full_support = false;
    bool normalize_reps = false;
    double weight_decay = 1e-4;
    enum class ViewRedraw { step, epoch };
    ViewRedraw view_redraw = ViewRedraw::step;
    std::uint32_t eval_every = 1;
    std::uint32_t patience = 10;

    bool contrastive_active() const { return loss != LossKind::bpr && alpha > 0.0; }

    void validate() const {
        if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
        if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
        if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
        if (layers < 1) throw ConfigError("layers must be >= 1");
        if (dim < 1) throw ConfigError("dim must be >= 1");
        if (batch < 1) throw ConfigError("batch must be >= 1");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
        if (k_neighbors < 1) throw ConfigError("k-neighbors must be >= 1");
        if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
        if (drop_ranking && !contrastive_active())
            throw ConfigError("drop-ranking with no contrastive term leaves nothing to optimize");
    }
};

struct ModelParams {
    Mat base;  // trainable layer-0 table, (m + n) x D
};

// Initial table drawn from N(0, 0.01^2); small scale keeps the contrastive
// logits tame at tau = 0.1.
inline ModelParams init_params(std::size_t node_count, std::uint32_t dim, std::uint64_t seed) {
    ModelParams p;
    p.base = Mat(node_count, dim);
    Rng rng(seed);
    for (double& v : p.base.data) v = 0.01 * rng.normal();
    return p;
}

struct EpochReport {
    double loss_total = 0.0;
    double loss_rank = 0.0;
    double loss_contrast = 0.0;
    double grad_norm_rank = 0.0;
    double grad_norm_contrast = 0.0;
    std::size_t steps = 0;
    std::size_t exhausted_resamples = 0;
};

namespace detail {

// Row-normalizes in place; returns the original norms. Zero rows stay zero.
inline std::vector<double> normalize_rows(Mat& m) {
    std::vector<double> norms(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * r[j];
        const double norm = std::sqrt(s);
        norms[i] = norm;
        if (norm > 0.0) {
            double* rw = m.row(i);
            for (std::size_t j = 0; j < m.cols; ++j) rw[j] /= norm;
        }
    }
    return norms;
}

// Maps a gradient on normalized rows back onto the raw rows.
inline void normalize_rows_backward(const Mat& normalized, const std::vector<double>& norms,
                                    Mat& grad) {
    for (std::size_t i = 0; i < grad.rows; ++i) {
        if (norms[i] == 0.0) {
            std::fill(grad.row(i), grad.row(i) + grad.cols, 0.0);
            continue;
        }
        const double* y = normalized.row(i);
        double* g = grad.row(i);
        const double gy = dot(g, y, grad.cols);
        for (std::size_t j = 0; j < grad.cols; ++j) g[j] = (g[j] - gy * y[j]) / norms[i];
    }
}

inline std::string batch_diagnostic(std::size_t step, const ContrastiveBatch& batch, double tau) {
    std::string s = "{\"step\":" + std::to_string(step) + ",\"tau\":" + std::to_string(tau) +
                    ",\"support\":" + std::to_string(batch.support.size()) + ",\"anchors\":[";
    for (std::size_t i = 0; i < batch.anchors.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(batch.anchors[i].anchor);
    }
    s += "]}";
    return s;
}

}  // namespace detail

// One pass over the shuffled train pairs: |train| / batch optimizer steps,
// each combining the ranking loss on the intact graph with the contrastive
// loss over a freshly corrupted view pair.
inline EpochReport train_epoch(ModelParams& params, AdamState& opt, const InteractionDataset& ds,
                               const BipartiteGraph& graph, const AugmentedGraph& main_view,
                               const NeighborTable* nt_user, const NeighborTable* nt_item,
                               const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    const bool contrastive = cfg.contrastive_active();
    if (contrastive && uses_neighbor_positives(cfg.loss) && (nt_user == nullptr || nt_item == nullptr))
        throw ConfigError("loss requires prepared neighbor tables");

    const std::size_t n_nodes = graph.node_count();
    const std::uint32_t dim = static_cast<std::uint32_t>(params.base.cols);
    const bool include0 = !cfg.drop_layer0;

    std::vector<std::uint32_t> order(ds.train_pairs.size());
    for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const std::size_t steps = std::max<std::size_t>(1, order.size() / cfg.batch);
    EpochReport report;
    report.steps = steps;

    AugmentedGraph view_a, view_b;
    if (contrastive && cfg.view_redraw == TrainConfig::ViewRedraw::epoch) {
        auto pair = make_view_pair(graph, cfg.aug, cfg.rho, cfg.layers, rng, cfg.renorm);
        view_a = std::move(pair.first);
        view_b = std::move(pair.second);
    }

    std::vector<double> totals, ranks, contrasts;
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t begin = s * cfg.batch;
        const std::size_t end = std::min(begin + cfg.batch, order.size());

        std::vector<BprTriple> triples;
        triples.reserve(end - begin);
        for (std::size_t t = begin; t < end; ++t) {
            IdPair p = ds.train_pairs[order[t]];
            std::uint32_t neg;
            while (!sample_negative(ds, p.first, rng, neg)) {
                ++report.exhausted_resamples;
                p = ds.train_pairs[rng.below(ds.train_pairs.size())];
            }
            triples.push_back({p.first, p.second, neg});
        }

        Mat grad_base(n_nodes, dim);
        double step_rank = 0.0, step_contrast = 0.0;

        if (!cfg.drop_ranking) {
            Propagated main = propagate(params.base, main_view, cfg.layers, include0);
            const std::size_t w = main.concat.cols;
            std::vector<double> pos_scores(triples.size()), neg_scores(triples.size());
            for (std::size_t t = 0; t < triples.size(); ++t) {
                const double* hu = main.concat.row(triples[t].user);
                pos_scores[t] = dot(hu, main.concat.row(graph.item_node(triples[t].pos_item)), w);
                neg_scores[t] = dot(hu, main.concat.row(graph.item_node(triples[t].neg_item)), w);
            }
            step_rank = bpr_loss(pos_scores, neg_scores);
            const std::vector<double> g = bpr_grad(pos_scores, neg_scores);
            Mat grad_concat(n_nodes, w);
            for (std::size_t t = 0; t < triples.size(); ++t) {
                const std::uint32_t u = triples[t].user;
                const std::uint32_t pi = graph.item_node(triples[t].pos_item);
                const std::uint32_t ni = graph.item_node(triples[t].neg_item);
                const double* hu = main.concat.row(u);
                axpy(g[t], main.concat.row(pi), grad_concat.row(u), w);
                axpy(-g[t], main.concat.row(ni), grad_concat.row(u), w);
                axpy(g[t], hu, grad_concat.row(pi), w);
                axpy(-g[t], hu, grad_concat.row(ni), w);
            }
            Mat grad_rank = propagate_backward(grad_concat, main_view, cfg.layers, include0, dim);
            report.grad_norm_rank += frobenius_norm(grad_rank);
            for (std::size_t i = 0; i < grad_base.data.size(); ++i)
                grad_base.data[i] += grad_rank.data[i];
        }

        if (contrastive) {
            if (cfg.view_redraw == TrainConfig::ViewRedraw::step) {
                auto pair = make_view_pair(graph, cfg.aug, cfg.rho, cfg.layers, rng, cfg.renorm);
                view_a = std::move(pair.first);
                view_b = std::move(pair.second);
            }
            Propagated prop_a = propagate(params.base, view_a, cfg.layers, include0);
            Propagated prop_b = propagate(params.base, view_b, cfg.layers, include0);

            std::vector<double> norms_a, norms_b;
            if (cfg.normalize_reps) {
                norms_a = detail::normalize_rows(prop_a.concat);
                norms_b = detail::normalize_rows(prop_b.concat);
            }

            ContrastiveBatch batch;
            batch.view_a = prop_a.concat;
            batch.view_b = prop_b.concat;
            if (cfg.full_support) {
                batch.support.resize(n_nodes);
                for (std::uint32_t i = 0; i < n_nodes; ++i) batch.support[i] = i;
            } else {
                batch.support.reserve(3 * triples.size());
                for (const BprTriple& t : triples) {
                    batch.support.push_back(t.user);
                    batch.support.push_back(graph.item_node(t.pos_item));
                    batch.support.push_back(graph.item_node(t.neg_item));
                }
                std::sort(batch.support.begin(), batch.support.end());
                batch.support.erase(std::unique(batch.support.begin(), batch.support.end()),
                                    batch.support.end());
            }
            // anchors are the batch nodes themselves (both sides)
            std::vector<std::uint32_t> anchor_ids;
            if (cfg.full_support) {
                anchor_ids.reserve(3 * triples.size());
                for (const BprTriple& t : triples) {
                    anchor_ids.push_back(t.user);
                    anchor_ids.push_back(graph.item_node(t.pos_item));
                    anchor_ids.push_back(graph.item_node(t.neg_item));
                }
                std::sort(anchor_ids.begin(), anchor_ids.end());
                anchor_ids.erase(std::unique(anchor_ids.begin(), anchor_ids.end()),
                                 anchor_ids.end());
            } else {
                anchor_ids = batch.support;
            }
            for (std::uint32_t id : anchor_ids) {
                AnchorPositives ap;
                ap.anchor = id;
                if (uses_neighbor_positives(cfg.loss)) {
                    const NeighborTable& nt = id < ds.num_users ? *nt_user : *nt_item;
                    ResolvedPositives rp = select_positives(id, nt, ds, cfg.neighbor_strategy,
                                                            cfg.interacted_strategy, rng);
                    ap.nearest = std::move(rp.nearest);
                    ap.interacted = std::move(rp.interacted);
                }
                batch.anchors.push_back(std::move(ap));
            }

            Mat grad_a(n_nodes, prop_a.concat.cols);
            Mat grad_b(n_nodes, prop_b.concat.cols);
            try {
                step_contrast =
                    contrastive_loss_grad(contrast_kind_of(cfg.loss), batch, cfg.tau, grad_a, grad_b);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + "; " +
                                   detail::batch_diagnostic(s, batch, cfg.tau));
            }
            if (cfg.normalize_reps) {
                detail::normalize_rows_backward(prop_a.concat, norms_a, grad_a);
                detail::normalize_rows_backward(prop_b.concat, norms_b, grad_b);
            }
            Mat gc = propagate_backward(grad_a, view_a, cfg.layers, include0, dim);
            Mat gc2 = propagate_backward(grad_b, view_b, cfg.layers, include0, dim);
            for (std::size_t i = 0; i < gc.data.size(); ++i) gc.data[i] += gc2.data[i];
            report.grad_norm_contrast += cfg.alpha * frobenius_norm(gc);
            for (std::size_t i = 0; i < grad_base.data.size(); ++i)
                grad_base.data[i] += cfg.alpha * gc.data[i];
        }

        if (cfg.weight_decay > 0.0) {
            for (std::size_t i = 0; i < grad_base.data.size(); ++i)
                grad_base.data[i] += cfg.weight_decay * params.base.data[i];
        }

        const double step_total = combined_loss(step_rank, step_contrast, cfg.alpha, cfg.drop_ranking);
        if (!std::isfinite(step_total))
            throw NumericError("non-finite loss at step " + std::to_string(s));
        totals.push_back(step_total);
        ranks.push_back(step_rank);
        contrasts.push_back(step_contrast);

        adam_step(params.base, grad_base, opt, cfg.lr);
    }

    report.loss_total = pairwise_sum(totals) / static_cast<double>(steps);
    report.loss_rank = pairwise_sum(ranks) / static_cast<double>(steps);
    report.loss_contrast = pairwise_sum(contrasts) / static_cast<double>(steps);
    report.grad_norm_rank /= static_cast<double>(steps);
    report.grad_norm_contrast /= static_cast<double>(steps);
    return report;
}

}  // namespace nescl
