#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nescl/augment.hpp"
#include "nescl/common.hpp"
#include "nescl/dataset.hpp"
#include "nescl/graph.hpp"
#include "nescl/mat.hpp"
#include "nescl/propagate.hpp"

namespace nescl {

struct UserMetrics {
    std::uint32_t user;
    double recall;
    double ndcg;
};

struct EvalReport {
    std::uint32_t k = 20;
    double recall_at_k = 0.0;
    double ndcg_at_k = 0.0;
    std::size_t evaluated_users = 0;
    std::vector<UserMetrics> per_user;  // filled on request
};

inline double recall_at_k(std::span<const std::uint32_t> ranked,
                          const std::vector<std::uint32_t>& relevant, std::uint32_t k) {
    if (relevant.empty()) throw ConfigError("recall_at_k: empty relevant set");
    std::size_t hits = 0;
    const std::size_t limit = std::min<std::size_t>(k, ranked.size());
    for (std::size_t r = 0; r < limit; ++r)
        if (std::binary_search(relevant.begin(), relevant.end(), ranked[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

// Binary gains with the log2(rank + 1) discount; the ideal list is truncated
// at min(k, |relevant|).
inline double ndcg_at_k(std::span<const std::uint32_t> ranked,
                        const std::vector<std::uint32_t>& relevant, std::uint32_t k) {
    if (relevant.empty()) throw ConfigError("ndcg_at_k: empty relevant set");
    double dcg = 0.0;
    const std::size_t limit = std::min<std::size_t>(k, ranked.size());
    for (std::size_t r = 0; r < limit; ++r) {
        if (std::binary_search(relevant.begin(), relevant.end(), ranked[r]))
            dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min<std::size_t>(k, relevant.size());
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

// Top-k item ids for one user by score, train items excluded, ties broken by
// ascending item id.
inline std::vector<std::uint32_t> rank_items(std::span<const double> scores,
                                             const std::vector<std::uint32_t>& train_items,
                                             std::uint32_t k) {
    std::vector<std::uint32_t> cand;
    cand.reserve(scores.size());
    for (std::uint32_t i = 0; i < scores.size(); ++i)
        if (!std::binary_search(train_items.begin(), train_items.end(), i)) cand.push_back(i);
    const std::size_t top = std::min<std::size_t>(k, cand.size());
    auto better = [&scores](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::partial_sort(cand.begin(), cand.begin() + top, cand.end(), better);
    cand.resize(top);
    return cand;
}

// Full-ranking evaluation over the held-out pairs on the intact graph. Users
// without test interactions, or with no train history, are excluded from the
// means.
inline EvalReport evaluate(const Mat& base, const BipartiteGraph& graph,
                           const InteractionDataset& ds, std::uint32_t layers,
                           bool include_layer0, std::uint32_t k, bool keep_per_user = false) {
    const AugmentedGraph view = identity_view(graph);
    const Propagated prop = propagate(base, view, layers, include_layer0);
    const MatView users = MatView(prop.concat).block(0, ds.num_users);
    const MatView items = MatView(prop.concat).block(ds.num_users, ds.num_items);

    EvalReport report;
    report.k = k;
    std::vector<double> recalls, ndcgs;
    std::vector<double> scores(ds.num_items);
    for (std::uint32_t u = 0; u < ds.num_users; ++u) {
        if (ds.user_test_items[u].empty() || ds.user_items[u].empty()) continue;
        const double* hu = users.row(u);
        for (std::uint32_t i = 0; i < ds.num_items; ++i)
            scores[i] = dot(hu, items.row(i), users.cols);
        const std::vector<std::uint32_t> ranked = rank_items(scores, ds.user_items[u], k);
        const double rec = recall_at_k(ranked, ds.user_test_items[u], k);
        const double ndcg = ndcg_at_k(ranked, ds.user_test_items[u], k);
        recalls.push_back(rec);
        ndcgs.push_back(ndcg);
        if (keep_per_user) report.per_user.push_back({u, rec, ndcg});
    }
    report.evaluated_users = recalls.size();
    if (!recalls.empty()) {
        report.recall_at_k = pairwise_sum(recalls) / static_cast<double>(recalls.size());
        report.ndcg_at_k = pairwise_sum(ndcgs) / static_cast<double>(ndcgs.size());
    }
    return report;
}

}  // namespace nescl
