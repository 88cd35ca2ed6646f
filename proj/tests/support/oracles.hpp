#pragma once

// Independent reference implementations the unit and acceptance suites check
// the library against. Everything here is written the straightforward way:
// raw exponentials, dense matrices, all-pairs loops.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nescl/dataset.hpp"
#include "nescl/graph.hpp"
#include "nescl/knn.hpp"
#include "nescl/losses.hpp"
#include "nescl/mat.hpp"

namespace testsupport {

using nescl::ContrastiveBatch;
using nescl::InteractionDataset;
using nescl::Mat;
using nescl::Side;

// --- losses: literal term-by-term transcription -----------------------------

inline double oracle_partition(const ContrastiveBatch& b, std::uint32_t row, double tau) {
    double x = 0.0;
    for (std::uint32_t j : b.support)
        x += std::exp(nescl::dot(b.view_a.row(row), b.view_b.row(j), b.view_a.cols) / tau);
    return x;
}

inline double oracle_ratio(const ContrastiveBatch& b, std::uint32_t row, std::uint32_t anchor,
                           double tau) {
    const double numer =
        std::exp(nescl::dot(b.view_a.row(row), b.view_b.row(anchor), b.view_a.cols) / tau);
    return numer / oracle_partition(b, row, tau);
}

inline double oracle_nescl_loss(bool out_variant, const ContrastiveBatch& b, double tau) {
    double total = 0.0;
    for (const auto& ap : b.anchors) {
        const double self_ratio = oracle_ratio(b, ap.anchor, ap.anchor, tau);
        double nn = 0.0;
        for (const auto& p : ap.nearest) nn += p.weight * oracle_ratio(b, p.id, ap.anchor, tau);
        double inter = 0.0;
        for (const auto& p : ap.interacted)
            inter += p.weight * oracle_ratio(b, p.id, ap.anchor, tau);
        if (out_variant) {
            total += -std::log(self_ratio + nn + inter);
        } else {
            total += -std::log(self_ratio);
            if (!ap.nearest.empty()) total += -std::log(nn);
            if (!ap.interacted.empty()) total += -std::log(inter);
        }
    }
    return total;
}

inline double oracle_supcon_loss(bool in_variant, const ContrastiveBatch& b, double tau) {
    double total = 0.0;
    for (const auto& ap : b.anchors) {
        const double partition = oracle_partition(b, ap.anchor, tau);
        std::vector<std::uint32_t> positives{ap.anchor};
        for (const auto& p : ap.nearest) positives.push_back(p.id);
        for (const auto& p : ap.interacted) positives.push_back(p.id);
        double sum_ratio = 0.0, sum_log = 0.0;
        for (std::uint32_t p : positives) {
            const double q =
                std::exp(nescl::dot(b.view_a.row(ap.anchor), b.view_b.row(p), b.view_a.cols) / tau) /
                partition;
            sum_ratio += q;
            sum_log += std::log(q);
        }
        const double count = static_cast<double>(positives.size());
        total += in_variant ? -std::log(sum_ratio / count) : -sum_log / count;
    }
    return total;
}

// --- finite differences ------------------------------------------------------

// Central difference of f w.r.t. one matrix entry.
inline double finite_diff(const std::function<double(const Mat&)>& f, Mat m, std::size_t row,
                          std::size_t col, double step = 1e-5) {
    m.at(row, col) += step;
    const double up = f(m);
    m.at(row, col) -= 2 * step;
    const double down = f(m);
    return (up - down) / (2 * step);
}

inline double rel_err(double a, double b, double floor = 1e-7) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// --- dense propagation --------------------------------------------------------

inline Mat dense_from_adj(const nescl::SparseAdj& a) {
    Mat d(a.n, a.n);
    for (std::size_t i = 0; i < a.n; ++i)
        for (std::size_t e = a.row_ptr[i]; e < a.row_ptr[i + 1]; ++e)
            d.at(i, a.col[e]) += a.weight[e];
    return d;
}

inline Mat dense_matmul(const Mat& a, const Mat& b) {
    Mat c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c.at(i, j) += aik * b.at(k, j);
        }
    return c;
}

// --- brute-force KNN ----------------------------------------------------------

inline double oracle_similarity(const InteractionDataset& ds, Side side, std::uint32_t i,
                                std::uint32_t j) {
    const auto& lists = side == Side::user ? ds.user_items : ds.item_users;
    std::vector<std::uint32_t> common;
    std::set_intersection(lists[i].begin(), lists[i].end(), lists[j].begin(), lists[j].end(),
                          std::back_inserter(common));
    if (lists[i].empty() || lists[j].empty()) return 0.0;
    return static_cast<double>(common.size()) /
           std::sqrt(static_cast<double>(lists[i].size()) * static_cast<double>(lists[j].size()));
}

// --- popularity ranking baseline ----------------------------------------------

inline double popularity_ndcg(const InteractionDataset& ds, std::uint32_t k) {
    std::vector<std::uint32_t> by_pop(ds.num_items);
    for (std::uint32_t i = 0; i < ds.num_items; ++i) by_pop[i] = i;
    std::stable_sort(by_pop.begin(), by_pop.end(), [&](std::uint32_t a, std::uint32_t b) {
        const auto da = ds.item_users[a].size(), db = ds.item_users[b].size();
        if (da != db) return da > db;
        return a < b;
    });
    double total = 0.0;
    std::size_t users = 0;
    for (std::uint32_t u = 0; u < ds.num_users; ++u) {
        if (ds.user_test_items[u].empty() || ds.user_items[u].empty()) continue;
        std::vector<std::uint32_t> ranking;
        for (std::uint32_t i : by_pop)
            if (!std::binary_search(ds.user_items[u].begin(), ds.user_items[u].end(), i))
                ranking.push_back(i);
        double dcg = 0.0;
        for (std::size_t r = 0; r < std::min<std::size_t>(k, ranking.size()); ++r)
            if (std::binary_search(ds.user_test_items[u].begin(), ds.user_test_items[u].end(),
                                   ranking[r]))
                dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        double idcg = 0.0;
        for (std::size_t r = 0; r < std::min<std::size_t>(k, ds.user_test_items[u].size()); ++r)
            idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        total += dcg / idcg;
        ++users;
    }
    return total / static_cast<double>(users);
}

inline nescl::NeighborTable brute_force_knn(const InteractionDataset& ds, Side side,
                                            std::uint32_t k) {
    const std::size_t count = side == Side::user ? ds.num_users : ds.num_items;
    nescl::NeighborTable nt;
    nt.side = side;
    nt.k = k;
    nt.neighbors.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<nescl::Neighbor> cand;
        for (std::uint32_t j = 0; j < count; ++j) {
            if (j == i) continue;
            const double sim = oracle_similarity(ds, side, i, j);
            if (sim > 0.0) cand.push_back({j, sim});
        }
        std::sort(cand.begin(), cand.end(), [](const nescl::Neighbor& a, const nescl::Neighbor& b) {
            if (a.sim != b.sim) return a.sim > b.sim;
            return a.id < b.id;
        });
        if (cand.size() > k) cand.resize(k);
        nt.neighbors[i] = std::move(cand);
    }
    return nt;
}

}  // namespace testsupport
