#pragma once

#include <vector>

#include "nescl/losses.hpp"
#include "nescl/mat.hpp"
#include "nescl/rng.hpp"

namespace testsupport {

using nescl::AnchorPositives;
using nescl::ContrastiveBatch;
using nescl::Mat;
using nescl::Rng;

// A random single-anchor (or few-anchor) contrastive instance with owned
// matrices; dots stay O(1) so the raw-exponential oracles remain exact.
struct BatchInstance {
    Mat view_a;
    Mat view_b;
    ContrastiveBatch batch;
};

inline Mat random_rows(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Mat m(rows, cols);
    for (double& v : m.data) v = scale * (2.0 * rng.uniform01() - 1.0);
    return m;
}

// Draws `count` distinct ids from [0, n) excluding `used` entries.
inline std::vector<std::uint32_t> draw_distinct(Rng& rng, std::size_t n, std::size_t count,
                                                std::vector<std::uint32_t> used) {
    if (used.size() + count > n) throw std::logic_error("draw_distinct: not enough ids");
    std::vector<std::uint32_t> out;
    while (out.size() < count) {
        const auto cand = static_cast<std::uint32_t>(rng.below(n));
        bool taken = false;
        for (std::uint32_t u : used)
            if (u == cand) taken = true;
        if (!taken) {
            out.push_back(cand);
            used.push_back(cand);
        }
    }
    return out;
}

inline BatchInstance make_instance(Rng& rng, std::size_t n_nodes, std::size_t dim,
                                   std::size_t n_anchors, std::size_t n_nearest,
                                   std::size_t n_interacted, bool full_support = true,
                                   bool sim_weights = true) {
    BatchInstance inst;
    inst.view_a = random_rows(rng, n_nodes, dim, 0.6);
    inst.view_b = random_rows(rng, n_nodes, dim, 0.6);
    inst.batch.view_a = inst.view_a;
    inst.batch.view_b = inst.view_b;

    const std::vector<std::uint32_t> anchors =
        draw_distinct(rng, n_nodes, n_anchors, {});
    for (std::uint32_t a : anchors) {
        AnchorPositives ap;
        ap.anchor = a;
        for (std::uint32_t id : draw_distinct(rng, n_nodes, n_nearest, {a}))
            ap.nearest.push_back({id, sim_weights ? 0.2 + 0.8 * rng.uniform01() : 1.0});
        std::vector<std::uint32_t> used{a};
        for (const auto& p : ap.nearest) used.push_back(p.id);
        for (std::uint32_t id : draw_distinct(rng, n_nodes, n_interacted, used))
            ap.interacted.push_back({id, 1.0});
        inst.batch.anchors.push_back(std::move(ap));
    }

    if (full_support) {
        for (std::uint32_t j = 0; j < n_nodes; ++j) inst.batch.support.push_back(j);
    } else {
        // anchors plus a random half of the remaining nodes
        std::vector<bool> keep(n_nodes, false);
        for (std::uint32_t a : anchors) keep[a] = true;
        for (std::uint32_t j = 0; j < n_nodes; ++j)
            if (!keep[j] && rng.uniform01() < 0.5) keep[j] = true;
        for (std::uint32_t j = 0; j < n_nodes; ++j)
            if (keep[j]) inst.batch.support.push_back(j);
    }
    return inst;
}

}  // namespace testsupport
