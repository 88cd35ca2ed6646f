#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "nescl/common.hpp"
#include "nescl/dataset.hpp"
#include "nescl/knn.hpp"
#include "nescl/losses.hpp"
#include "nescl/rng.hpp"

namespace nescl {

struct BprTriple {
    std::uint32_t user;
    std::uint32_t pos_item;
    std::uint32_t neg_item;
};

// Uniform rejection draw of an item outside the user's train set. Returns
// false when the user has interacted with every item (the caller resamples).
inline bool sample_negative(const InteractionDataset& ds, std::uint32_t user, Rng& rng,
                            std::uint32_t& out) {
    const auto& items = ds.user_items[user];
    if (items.size() >= ds.num_items) return false;
    for (;;) {
        const std::uint32_t cand = static_cast<std::uint32_t>(rng.below(ds.num_items));
        if (!std::binary_search(items.begin(), items.end(), cand)) {
            out = cand;
            return true;
        }
    }
}

// One negative per positive; positives drawn uniformly from the train pairs.
// Users whose positives cover the whole catalog are resampled and counted.
inline std::vector<BprTriple> sample_bpr_pairs(const InteractionDataset& ds, Rng& rng,
                                               std::size_t batch,
                                               std::size_t* exhausted_users = nullptr) {
    if (ds.train_pairs.empty()) throw DataError("sample_bpr_pairs: no train interactions");
    std::vector<BprTriple> out;
    out.reserve(batch);
    while (out.size() < batch) {
        const IdPair& p = ds.train_pairs[rng.below(ds.train_pairs.size())];
        std::uint32_t neg;
        if (!sample_negative(ds, p.first, rng, neg)) {
            if (exhausted_users != nullptr) ++*exhausted_users;
            continue;
        }
        out.push_back({p.first, p.second, neg});
    }
    return out;
}

enum class NeighborStrategy { identity_weights, similarity_weights, random_sampling, weighted_sampling };
enum class InteractedStrategy { all, sample_one };

struct ResolvedPositives {
    std::vector<PositiveRef> nearest;
    std::vector<PositiveRef> interacted;
};

// Resolves which collaborative neighbors of a (global) anchor node enter the
// loss this step, and with what weight. Node ids in the result are global.
inline ResolvedPositives select_positives(std::uint32_t anchor, const NeighborTable& nt,
                                          const InteractionDataset& ds,
                                          NeighborStrategy neighbor_strategy,
                                          InteractedStrategy interacted_strategy, Rng& rng) {
    const bool is_user = anchor < ds.num_users;
    if ((is_user && nt.side != Side::user) || (!is_user && nt.side != Side::item))
        throw ConfigError("select_positives: neighbor table side does not match anchor");
    const std::uint32_t local = is_user ? anchor : anchor - ds.num_users;
    const std::uint32_t same_side_offset = is_user ? 0 : ds.num_users;

    ResolvedPositives out;
    const auto& neighbors = nt.neighbors[local];
    if (!neighbors.empty()) {
        switch (neighbor_strategy) {
            case NeighborStrategy::identity_weights:
                for (const Neighbor& nb : neighbors)
                    out.nearest.push_back({nb.id + same_side_offset, 1.0});
                break;
            case NeighborStrategy::similarity_weights:
                for (const Neighbor& nb : neighbors)
                    out.nearest.push_back({nb.id + same_side_offset, nb.sim});
                break;
            case NeighborStrategy::random_sampling: {
                const Neighbor& nb = neighbors[rng.below(neighbors.size())];
                out.nearest.push_back({nb.id + same_side_offset, 1.0});
                break;
            }
            case NeighborStrategy::weighted_sampling: {
                std::vector<double> sims(neighbors.size());
                for (std::size_t i = 0; i < neighbors.size(); ++i) sims[i] = neighbors[i].sim;
                const Neighbor& nb = neighbors[rng.weighted_index(sims)];
                out.nearest.push_back({nb.id + same_side_offset, 1.0});
                break;
            }
        }
    }

    const auto& interacted = is_user ? ds.user_items[local] : ds.item_users[local];
    const std::uint32_t other_side_offset = is_user ? ds.num_users : 0;
    if (!interacted.empty()) {
        if (interacted_strategy == InteractedStrategy::sample_one) {
            out.interacted.push_back({interacted[rng.below(interacted.size())] + other_side_offset, 1.0});
        } else {
            for (std::uint32_t id : interacted) out.interacted.push_back({id + other_side_offset, 1.0});
        }
    }
    return out;
}

}  // namespace nescl
