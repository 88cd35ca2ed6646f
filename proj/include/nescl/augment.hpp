#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "nescl/common.hpp"
#include "nescl/graph.hpp"
#include "nescl/rng.hpp"

namespace nescl {

enum class AugmentStrategy { node_dropout, edge_dropout, random_walk };

// A stochastically corrupted view of the bipartite graph. Node and edge
// dropout share one structure across propagation layers; random walk carries
// an independent edge-dropout draw per layer.
struct AugmentedGraph {
    AugmentStrategy strategy = AugmentStrategy::edge_dropout;
    double rho = 0.0;
    std::vector<SparseAdj> per_layer;
};

namespace detail {

// round-half-up; drop counts use llround(ratio * total)
inline std::size_t round_count(double x) {
    return static_cast<std::size_t>(std::llround(x));
}

// Uniform subset of `keep` indices from [0, total), returned sorted. Partial
// Fisher-Yates, integer draws only.
inline std::vector<std::uint32_t> sample_subset(std::size_t total, std::size_t keep, Rng& rng) {
    std::vector<std::uint32_t> idx(total);
    for (std::uint32_t i = 0; i < total; ++i) idx[i] = i;
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::vector<std::uint32_t> edge_dropout_keep(const BipartiteGraph& g, double rho, Rng& rng) {
    const std::size_t total = g.edges.size();
    const std::size_t keep = round_count((1.0 - rho) * static_cast<double>(total));
    return sample_subset(total, keep, rng);
}

inline std::vector<std::uint32_t> node_dropout_keep(const BipartiteGraph& g, double rho, Rng& rng) {
    const std::size_t n = g.node_count();
    const std::size_t drop = round_count(rho * static_cast<double>(n));
    const std::vector<std::uint32_t> dropped = sample_subset(n, drop, rng);
    std::vector<bool> is_dropped(n, false);
    for (std::uint32_t v : dropped) is_dropped[v] = true;
    std::vector<std::uint32_t> keep;
    keep.reserve(g.edges.size());
    for (std::uint32_t e = 0; e < g.edges.size(); ++e) {
        if (!is_dropped[g.edges[e].first] && !is_dropped[g.edges[e].second]) keep.push_back(e);
    }
    return keep;
}

}  // namespace detail

inline AugmentedGraph augment(const BipartiteGraph& g, AugmentStrategy strategy, double rho,
                              std::uint32_t layers, Rng& rng,
                              RenormMode renorm = RenormMode::corrupted) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("augment: rho must lie in [0, 1]");
    if (layers < 1) throw ConfigError("augment: layers must be >= 1");

    AugmentedGraph out;
    out.strategy = strategy;
    out.rho = rho;
    switch (strategy) {
        case AugmentStrategy::node_dropout:
            out.per_layer.push_back(build_adjacency(g, detail::node_dropout_keep(g, rho, rng), renorm));
            break;
        case AugmentStrategy::edge_dropout:
            out.per_layer.push_back(build_adjacency(g, detail::edge_dropout_keep(g, rho, rng), renorm));
            break;
        case AugmentStrategy::random_walk:
            for (std::uint32_t l = 0; l < layers; ++l)
                out.per_layer.push_back(build_adjacency(g, detail::edge_dropout_keep(g, rho, rng), renorm));
            break;
    }
    return out;
}

// Two independent draws from the same corruption settings.
inline std::pair<AugmentedGraph, AugmentedGraph> make_view_pair(const BipartiteGraph& g,
                                                                AugmentStrategy strategy,
                                                                double rho, std::uint32_t layers,
                                                                Rng& rng,
                                                                RenormMode renorm = RenormMode::corrupted) {
    AugmentedGraph a = augment(g, strategy, rho, layers, rng, renorm);
    AugmentedGraph b = augment(g, strategy, rho, layers, rng, renorm);
    return {std::move(a), std::move(b)};
}

// The uncorrupted graph wrapped as a single-structure view; used for the
// ranking forward pass and evaluation.
inline AugmentedGraph identity_view(const BipartiteGraph& g) {
    AugmentedGraph out;
    out.strategy = AugmentStrategy::edge_dropout;
    out.rho = 0.0;
    out.per_layer.push_back(full_adjacency(g));
    return out;
}

}  // namespace nescl
