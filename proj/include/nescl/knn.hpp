#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nescl/binio.hpp"
#include "nescl/common.hpp"
#include "nescl/dataset.hpp"

namespace nescl {

enum class Side : std::uint8_t { user = 0, item = 1 };

struct Neighbor {
    std::uint32_t id;
    double sim;
};

// Top-K nearest neighbors per node under co-occurrence cosine. Lists are
// sorted by similarity descending, ties by ascending id; zero-similarity
// pairs never appear, so a list may run shorter than k.
struct NeighborTable {
    Side side = Side::user;
    std::uint32_t k = 0;
    std::vector<std::vector<Neighbor>> neighbors;
};

namespace detail {

inline const std::vector<std::vector<std::uint32_t>>& interaction_lists(
    const InteractionDataset& ds, Side side) {
    return side == Side::user ? ds.user_items : ds.item_users;
}

inline std::size_t side_count(const InteractionDataset& ds, Side side) {
    return side == Side::user ? ds.num_users : ds.num_items;
}

inline double cosine_from_counts(std::uint32_t common, std::size_t deg_i, std::size_t deg_j) {
    if (deg_i == 0 || deg_j == 0) return 0.0;
    return static_cast<double>(common) /
           std::sqrt(static_cast<double>(deg_i) * static_cast<double>(deg_j));
}

}  // namespace detail

// |R+_i ∩ R+_j| / sqrt(|R+_i| |R+_j|) over the train partition.
inline double similarity(std::uint32_t i, std::uint32_t j, const InteractionDataset& ds,
                         Side side) {
    const auto& lists = detail::interaction_lists(ds, side);
    const std::size_t count = detail::side_count(ds, side);
    if (i >= count || j >= count) throw std::out_of_range("similarity: id out of range");
    if (i == j) throw std::out_of_range("similarity: i and j must differ");
    const auto& a = lists[i];
    const auto& b = lists[j];
    std::uint32_t common = 0;
    std::size_t x = 0, y = 0;
    while (x < a.size() && y < b.size()) {
        if (a[x] == b[y]) {
            ++common;
            ++x;
            ++y;
        } else if (a[x] < b[y]) {
            ++x;
        } else {
            ++y;
        }
    }
    return detail::cosine_from_counts(common, a.size(), b.size());
}

// Co-occurrence counts gathered through the interacting nodes rather than
// over all pairs; quadratic only in the co-rating lists. This is data
// preparation, run once per dataset and cached.
inline NeighborTable build_neighbor_table(const InteractionDataset& ds, Side side,
                                          std::uint32_t k) {
    if (k < 1) throw ConfigError("build_neighbor_table: k must be >= 1");
    const auto& lists = detail::interaction_lists(ds, side);
    const auto& inverse = detail::interaction_lists(ds, side == Side::user ? Side::item : Side::user);
    const std::size_t count = detail::side_count(ds, side);

    NeighborTable nt;
    nt.side = side;
    nt.k = k;
    nt.neighbors.resize(count);

    std::vector<std::uint32_t> common(count, 0);
    std::vector<std::uint32_t> touched;
    for (std::uint32_t i = 0; i < count; ++i) {
        touched.clear();
        for (std::uint32_t ctx : lists[i]) {
            for (std::uint32_t j : inverse[ctx]) {
                if (j == i) continue;
                if (common[j]++ == 0) touched.push_back(j);
            }
        }
        std::vector<Neighbor> cand;
        cand.reserve(touched.size());
        for (std::uint32_t j : touched) {
            cand.push_back({j, detail::cosine_from_counts(common[j], lists[i].size(), lists[j].size())});
            common[j] = 0;
        }
        std::sort(cand.begin(), cand.end(), [](const Neighbor& a, const Neighbor& b) {
            if (a.sim != b.sim) return a.sim > b.sim;
            return a.id < b.id;
        });
        if (cand.size() > k) cand.resize(k);
        nt.neighbors[i] = std::move(cand);
    }
    return nt;
}

// Sidecar cache: header (magic, version, side, k, node count) then per-node
// length-prefixed (id, similarity) records, little-endian throughout.
inline constexpr char kNeighborMagic[8] = {'N', 'E', 'S', 'C', 'L', 'K', 'N', 'N'};
inline constexpr std::uint32_t kNeighborVersion = 1;

inline void save_neighbor_table(const NeighborTable& nt, const std::filesystem::path& path) {
    std::string out;
    out.append(kNeighborMagic, sizeof(kNeighborMagic));
    put_u32(out, kNeighborVersion);
    put_u32(out, static_cast<std::uint32_t>(nt.side));
    put_u32(out, nt.k);
    put_u64(out, nt.neighbors.size());
    for (const auto& list : nt.neighbors) {
        put_u32(out, static_cast<std::uint32_t>(list.size()));
        for (const Neighbor& nb : list) {
            put_u32(out, nb.id);
            put_f64(out, nb.sim);
        }
    }
    write_file(path, out);
}

inline NeighborTable load_neighbor_table(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    ByteReader r(bytes);
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kNeighborMagic, sizeof(magic)) != 0)
        throw DataError(path.string() + ": not a neighbor cache file");
    const std::uint32_t version = r.u32();
    if (version != kNeighborVersion)
        throw DataError(path.string() + ": unsupported cache version " + std::to_string(version));
    NeighborTable nt;
    nt.side = static_cast<Side>(r.u32());
    nt.k = r.u32();
    nt.neighbors.resize(r.u64());
    for (auto& list : nt.neighbors) {
        list.resize(r.u32());
        for (Neighbor& nb : list) {
            nb.id = r.u32();
            nb.sim = r.f64();
        }
    }
    if (!r.done()) throw DataError(path.string() + ": trailing bytes in cache file");
    return nt;
}

inline std::string neighbor_cache_name(Side side, std::uint32_t k, std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(side == Side::user ? "user" : "item") + "_k" + std::to_string(k) + "_" +
           buf + ".knn";
}

}  // namespace nescl
