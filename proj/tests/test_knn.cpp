#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "nescl/knn.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace nescl;

namespace {

bool tables_equal(const NeighborTable& a, const NeighborTable& b) {
    if (a.side != b.side || a.k != b.k || a.neighbors.size() != b.neighbors.size()) return false;
    for (std::size_t i = 0; i < a.neighbors.size(); ++i) {
        if (a.neighbors[i].size() != b.neighbors[i].size()) return false;
        for (std::size_t t = 0; t < a.neighbors[i].size(); ++t) {
            if (a.neighbors[i][t].id != b.neighbors[i][t].id) return false;
            if (a.neighbors[i][t].sim != b.neighbors[i][t].sim) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("similarity on hand cases") {
    // items 0 and 1 share users {0,1}; item 2 is user 2 only; item 3 covers {0,1,2}
    const auto ds = testsupport::make_dataset(
        3, 4, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 2}, {0, 3}, {1, 3}, {2, 3}});
    CHECK(similarity(0, 1, ds, Side::item) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(similarity(0, 2, ds, Side::item) == 0.0);
    // |{0,1} ∩ {0,1,2}| / sqrt(2*3) = 2/sqrt(6)
    const double expect = testsupport::oracle_similarity(ds, Side::item, 0, 3);
    CHECK(expect == doctest::Approx(0.816496580927726).epsilon(1e-12));
    CHECK(similarity(0, 3, ds, Side::item) == expect);
}

TEST_CASE("similarity rejects bad ids") {
    const auto ds = testsupport::make_dataset(2, 2, {{0, 0}, {1, 1}});
    CHECK_THROWS_AS(similarity(0, 5, ds, Side::item), std::out_of_range);
    CHECK_THROWS_AS(similarity(1, 1, ds, Side::user), std::out_of_range);
}

TEST_CASE("symmetry and monotonicity properties") {
    Rng rng(23);
    const InteractionDataset ds = testsupport::random_dataset(rng, 25, 30, 0.2);
    for (int rep = 0; rep < 200; ++rep) {
        const auto i = static_cast<std::uint32_t>(rng.below(30));
        auto j = static_cast<std::uint32_t>(rng.below(30));
        if (i == j) continue;
        CHECK(std::abs(similarity(i, j, ds, Side::item) - similarity(j, i, ds, Side::item)) <=
              1e-12);
    }

    // adding a shared interacting user to both items never decreases sim
    for (int rep = 0; rep < 50; ++rep) {
        const auto i = static_cast<std::uint32_t>(rng.below(30));
        auto j = static_cast<std::uint32_t>(rng.below(30));
        if (i == j) j = (j + 1) % 30;
        auto pairs = ds.train_pairs;
        const std::uint32_t new_user = ds.num_users;  // fresh user interacting with both
        pairs.emplace_back(new_user, i);
        pairs.emplace_back(new_user, j);
        const auto grown = testsupport::make_dataset(ds.num_users + 1, ds.num_items, pairs);
        CHECK(similarity(i, j, grown, Side::item) >= similarity(i, j, ds, Side::item) - 1e-12);
    }
}

TEST_CASE("three items with one shared audience") {
    const auto ds = testsupport::make_dataset(
        2, 3, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0, 2}, {1, 2}});
    const NeighborTable nt = build_neighbor_table(ds, Side::item, 2);
    for (std::uint32_t i = 0; i < 3; ++i) {
        REQUIRE(nt.neighbors[i].size() == 2);
        for (const Neighbor& nb : nt.neighbors[i]) {
            CHECK(nb.id != i);
            CHECK(nb.sim == doctest::Approx(1.0).epsilon(1e-15));
        }
        // tie broken by ascending id
        CHECK(nt.neighbors[i][0].id < nt.neighbors[i][1].id);
    }
}

TEST_CASE("no co-raters means an empty list") {
    const auto ds = testsupport::make_dataset(2, 2, {{0, 0}, {1, 1}});
    const NeighborTable nt = build_neighbor_table(ds, Side::item, 3);
    CHECK(nt.neighbors[0].empty());
    CHECK(nt.neighbors[1].empty());
}

TEST_CASE("matches the exhaustive all-pairs table") {
    Rng rng(31);
    const InteractionDataset ds = testsupport::random_dataset(rng, 40, 60, 0.1);
    for (const Side side : {Side::user, Side::item}) {
        const NeighborTable fast = build_neighbor_table(ds, side, 5);
        const NeighborTable brute = testsupport::brute_force_knn(ds, side, 5);
        CHECK(tables_equal(fast, brute));
    }
}

TEST_CASE("user side uses item sets") {
    // users 0,1 share items; user 2 disjoint
    const auto ds = testsupport::make_dataset(3, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 3}});
    const NeighborTable nt = build_neighbor_table(ds, Side::user, 2);
    REQUIRE(nt.neighbors[0].size() == 1);
    CHECK(nt.neighbors[0][0].id == 1);
    CHECK(nt.neighbors[0][0].sim == doctest::Approx(1.0));
    CHECK(nt.neighbors[2].empty());
}

TEST_CASE("cache file round trip") {
    Rng rng(37);
    const InteractionDataset ds = testsupport::random_dataset(rng, 20, 25, 0.15);
    const NeighborTable nt = build_neighbor_table(ds, Side::item, 4);
    const auto path = std::filesystem::temp_directory_path() /
                      neighbor_cache_name(Side::item, 4, dataset_hash(ds));
    save_neighbor_table(nt, path);
    const NeighborTable re = load_neighbor_table(path);
    CHECK(tables_equal(nt, re));

    CHECK_THROWS_AS(
        [&] {
            std::string bytes = read_file(path);
            bytes.resize(bytes.size() - 3);
            const auto bad = path.string() + ".trunc";
            write_file(bad, bytes);
            return load_neighbor_table(bad);
        }(),
        DataError);
}
