#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nescl/binio.hpp"
#include "nescl/common.hpp"

namespace nescl {

using IdPair = std::pair<std::uint32_t, std::uint32_t>;  // (user, item)

// Implicit-feedback records with a train/test split. Immutable after load;
// ids are dense and 0-based just like the public LightGCN releases.
struct InteractionDataset {
    std::uint32_t num_users = 0;
    std::uint32_t num_items = 0;
    std::vector<IdPair> train_pairs;  // sorted, unique
    std::vector<IdPair> test_pairs;   // sorted, unique, disjoint from train
    std::vector<std::vector<std::uint32_t>> user_items;       // train items per user, sorted
    std::vector<std::vector<std::uint32_t>> item_users;       // train users per item, sorted
    std::vector<std::vector<std::uint32_t>> user_test_items;  // test items per user, sorted
    std::vector<std::string> warnings;
};

namespace detail {

struct ParsedFile {
    std::vector<IdPair> pairs;  // may contain duplicates
    std::vector<std::uint32_t> bare_users;
    std::uint32_t max_user = 0;
    std::uint32_t max_item = 0;
    bool any_user = false;
    bool any_item = false;
};

inline std::uint32_t parse_id(const std::string& token, const std::string& file, std::size_t line_no) {
    std::uint32_t v = 0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw DataError(file + ":" + std::to_string(line_no) + ": bad token '" + token + "'");
    return v;
}

// One line per user: "user_id item_1 ... item_k". Empty lines are skipped.
inline ParsedFile parse_interaction_file(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    const std::string name = path.filename().string();
    ParsedFile out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        ++line_no;
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        std::vector<std::string> tokens;
        std::size_t tpos = 0;
        while (tpos < line.size()) {
            while (tpos < line.size() && (line[tpos] == ' ' || line[tpos] == '\t')) ++tpos;
            std::size_t tend = tpos;
            while (tend < line.size() && line[tend] != ' ' && line[tend] != '\t') ++tend;
            if (tend > tpos) tokens.emplace_back(line.substr(tpos, tend - tpos));
            tpos = tend;
        }
        if (tokens.empty()) continue;

        const std::uint32_t user = parse_id(tokens[0], name, line_no);
        out.any_user = true;
        out.max_user = std::max(out.max_user, user);
        if (tokens.size() == 1) {
            out.bare_users.push_back(user);
            continue;
        }
        for (std::size_t t = 1; t < tokens.size(); ++t) {
            const std::uint32_t item = parse_id(tokens[t], name, line_no);
            out.any_item = true;
            out.max_item = std::max(out.max_item, item);
            out.pairs.emplace_back(user, item);
        }
    }
    return out;
}

}  // namespace detail

inline InteractionDataset load_dataset(const std::filesystem::path& train_path,
                                       const std::filesystem::path& test_path) {
    detail::ParsedFile train = detail::parse_interaction_file(train_path);
    detail::ParsedFile test;
    if (!test_path.empty()) test = detail::parse_interaction_file(test_path);

    if (train.pairs.empty()) throw DataError(train_path.string() + ": no interactions");

    InteractionDataset ds;
    std::uint32_t max_user = std::max(train.max_user, test.any_user ? test.max_user : 0);
    std::uint32_t max_item = std::max(train.max_item, test.any_item ? test.max_item : 0);
    ds.num_users = max_user + 1;
    ds.num_items = max_item + 1;

    std::set<IdPair> train_set(train.pairs.begin(), train.pairs.end());
    ds.train_pairs.assign(train_set.begin(), train_set.end());

    std::set<IdPair> test_set(test.pairs.begin(), test.pairs.end());
    for (const IdPair& p : test_set) {
        if (train_set.count(p)) {
            ds.warnings.push_back("test pair (" + std::to_string(p.first) + "," +
                                  std::to_string(p.second) + ") also in train; dropped from test");
            continue;
        }
        ds.test_pairs.push_back(p);
    }

    ds.user_items.resize(ds.num_users);
    ds.item_users.resize(ds.num_items);
    ds.user_test_items.resize(ds.num_users);
    for (const IdPair& p : ds.train_pairs) {
        ds.user_items[p.first].push_back(p.second);
        ds.item_users[p.second].push_back(p.first);
    }
    for (const IdPair& p : ds.test_pairs) ds.user_test_items[p.first].push_back(p.second);

    for (std::uint32_t u = 0; u < ds.num_users; ++u) {
        if (ds.user_items[u].empty())
            ds.warnings.push_back("user " + std::to_string(u) +
                                  " has no train interactions; excluded from evaluation");
    }
    return ds;
}

// Writes the text format back out. Bare user lines keep train-less users (and
// the user-id range) intact so a reload reproduces the dataset exactly.
inline void save_dataset(const InteractionDataset& ds, const std::filesystem::path& train_path,
                         const std::filesystem::path& test_path) {
    std::string train_text;
    for (std::uint32_t u = 0; u < ds.num_users; ++u) {
        train_text += std::to_string(u);
        for (std::uint32_t it : ds.user_items[u]) {
            train_text += ' ';
            train_text += std::to_string(it);
        }
        train_text += '\n';
    }
    write_file(train_path, train_text);

    std::string test_text;
    for (std::uint32_t u = 0; u < ds.num_users; ++u) {
        if (ds.user_test_items[u].empty()) continue;
        test_text += std::to_string(u);
        for (std::uint32_t it : ds.user_test_items[u]) {
            test_text += ' ';
            test_text += std::to_string(it);
        }
        test_text += '\n';
    }
    write_file(test_path, test_text);
}

// FNV-1a over the shape and train pairs; keys the neighbor-table cache.
inline std::uint64_t dataset_hash(const InteractionDataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ull;
        }
    };
    mix(ds.num_users);
    mix(ds.num_items);
    for (const IdPair& p : ds.train_pairs)
        mix((static_cast<std::uint64_t>(p.first) << 32) | p.second);
    return h;
}

}  // namespace nescl
