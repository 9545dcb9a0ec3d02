#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "streamrec/rng.hpp"
#include "streamrec/types.hpp"

namespace streamrec {

//! One parsed rating line before id remapping. The rating magnitude is
//! discarded at parse time: any logged event is an implicit 1.
struct RawRecord {
    std::uint64_t user = 0;
    std::uint64_t item = 0;
    std::int64_t timestamp = 0;
};

/*!
 * Preprocessed interaction stream: users with at most ten interactions
 * removed, ids densely remapped, sorted by timestamp (ties by file order),
 * seq assigned 0..N-1.
 */
struct Dataset {
    std::vector<Interaction> interactions;
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::vector<std::uint64_t> user_remap;  // dense id -> original id
    std::vector<std::uint64_t> item_remap;
};

namespace detail {

inline bool split_fields(const std::string& line, const std::string& delim,
                         std::vector<std::string>& fields) {
    fields.clear();
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(delim, pos);
        if (next == std::string::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, next - pos));
        pos = next + delim.size();
    }
    return fields.size() == 4;
}

}  // namespace detail

/*!
 * Parses user<delim>item<delim>rating<delim>timestamp lines ("::" for the
 * MovieLens layout). Malformed lines are an error naming the line number.
 */
inline std::vector<RawRecord> parse_ratings(std::istream& in, const std::string& delim) {
    if (delim.empty()) throw std::invalid_argument("delimiter must be non-empty");
    std::vector<RawRecord> records;
    std::string line;
    std::vector<std::string> fields;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!detail::split_fields(line, delim, fields))
            throw std::runtime_error("parse error at line " + std::to_string(lineno) +
                                     ": expected 4 fields, got " + std::to_string(fields.size()));
        try {
            RawRecord rec;
            rec.user = std::stoull(fields[0]);
            rec.item = std::stoull(fields[1]);
            std::stod(fields[2]);  // rating checked for well-formedness, then discarded
            rec.timestamp = std::stoll(fields[3]);
            records.push_back(rec);
        } catch (const std::exception&) {
            throw std::runtime_error("parse error at line " + std::to_string(lineno) + ": '" +
                                     line + "'");
        }
    }
    if (records.empty()) throw std::runtime_error("no rating records parsed (empty input?)");
    return records;
}

inline std::vector<RawRecord> parse_ratings_file(const std::string& path,
                                                 const std::string& delim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ratings file '" + path + "'");
    return parse_ratings(in, delim);
}

//! Keeps the records of `keep` uniformly chosen users (by original id).
//! Applied before the sparsity filter.
inline std::vector<RawRecord> subsample_users(std::vector<RawRecord> records, std::size_t keep,
                                              std::uint64_t seed) {
    if (keep == 0) return records;
    std::vector<std::uint64_t> users;
    {
        std::unordered_map<std::uint64_t, bool> seen;
        for (const auto& r : records) {
            if (!seen.count(r.user)) {
                seen[r.user] = true;
                users.push_back(r.user);
            }
        }
    }
    if (keep >= users.size()) return records;
    std::sort(users.begin(), users.end());  // stable universe regardless of file order
    Rng rng(derive_seed(seed, kTagSynthesis, 5));
    // partial Fisher-Yates over the sorted universe
    for (std::size_t i = 0; i < keep; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(users.size() - i));
        std::swap(users[i], users[j]);
    }
    std::unordered_map<std::uint64_t, bool> chosen;
    for (std::size_t i = 0; i < keep; ++i) chosen[users[i]] = true;
    std::vector<RawRecord> kept;
    kept.reserve(records.size());
    for (const auto& r : records)
        if (chosen.count(r.user)) kept.push_back(r);
    return kept;
}

/*!
 * Implicit-stream preprocessing: drop users with <= 10 interactions (one
 * pass), remap surviving user/item ids densely by first appearance in time
 * order, sort by timestamp with ties broken by file order, assign seq.
 */
inline Dataset preprocess(std::span<const RawRecord> records) {
    if (records.empty()) throw std::invalid_argument("preprocess: no records");

    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (const auto& r : records) ++counts[r.user];

    std::vector<std::size_t> keep_order;
    keep_order.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        if (counts[records[i].user] > 10) keep_order.push_back(i);
    if (keep_order.empty())
        throw std::runtime_error("all users filtered out (need more than ten interactions each)");

    // stable sort by timestamp; index order preserves file order on ties
    std::stable_sort(keep_order.begin(), keep_order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].timestamp < records[b].timestamp;
    });

    Dataset ds;
    ds.interactions.reserve(keep_order.size());
    std::unordered_map<std::uint64_t, UserId> user_ids;
    std::unordered_map<std::uint64_t, ItemId> item_ids;
    for (std::size_t seq = 0; seq < keep_order.size(); ++seq) {
        const RawRecord& r = records[keep_order[seq]];
        auto [uit, unew] = user_ids.try_emplace(r.user, static_cast<UserId>(user_ids.size()));
        if (unew) ds.user_remap.push_back(r.user);
        auto [iit, inew] = item_ids.try_emplace(r.item, static_cast<ItemId>(item_ids.size()));
        if (inew) ds.item_remap.push_back(r.item);
        ds.interactions.push_back(
            {uit->second, iit->second, r.timestamp, static_cast<std::uint64_t>(seq)});
    }
    ds.num_users = user_ids.size();
    ds.num_items = item_ids.size();
    return ds;
}

/*!
 * Chronological split: the first floor(N * train_fraction) interactions by
 * seq are the training stream, the remainder the test stream.
 */
inline std::pair<std::span<const Interaction>, std::span<const Interaction>> chronological_split(
    const Dataset& ds, double train_fraction) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw std::invalid_argument("train_fraction must lie in (0,1), got " +
                                    std::to_string(train_fraction));
    std::size_t n = ds.interactions.size();
    std::size_t cut = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * train_fraction));
    std::span<const Interaction> all(ds.interactions);
    return {all.subspan(0, cut), all.subspan(cut)};
}

// ---- binary dataset cache ----
// Layout: magic, num_users u64, num_items u64, N u64, then N records of
// (user u32, item u32, timestamp i64); seq is implicit in position.

constexpr std::uint32_t kCacheMagic = 0x53524331;  // "SRC1"

inline void save_dataset_cache(const Dataset& ds, std::ostream& out) {
    auto put32 = [&](std::uint32_t x) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xFF);
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    auto put64 = [&](std::uint64_t x) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xFF);
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    put32(kCacheMagic);
    put64(ds.num_users);
    put64(ds.num_items);
    put64(ds.interactions.size());
    for (const auto& x : ds.interactions) {
        put32(x.user);
        put32(x.item);
        put64(static_cast<std::uint64_t>(x.timestamp));
    }
    if (!out) throw std::runtime_error("dataset cache write failed");
}

inline Dataset load_dataset_cache(std::istream& in) {
    auto get32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return x;
    };
    auto get64 = [&]() {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return x;
    };
    if (get32() != kCacheMagic) throw std::runtime_error("not a dataset cache file");
    Dataset ds;
    ds.num_users = get64();
    ds.num_items = get64();
    std::size_t n = get64();
    ds.interactions.reserve(n);
    for (std::size_t seq = 0; seq < n; ++seq) {
        Interaction x;
        x.user = get32();
        x.item = get32();
        x.timestamp = static_cast<std::int64_t>(get64());
        x.seq = seq;
        ds.interactions.push_back(x);
    }
    if (!in) throw std::runtime_error("dataset cache truncated");
    return ds;
}

inline bool looks_like_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) return false;
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return x == kCacheMagic;
}

/*!
 * Loads a dataset from either a binary cache or a delimited ratings file,
 * with optional user subsampling (ratings files only).
 */
inline Dataset load_dataset(const std::string& path, const std::string& delim = "::",
                            std::size_t subsample = 0, std::uint64_t seed = 0) {
    if (looks_like_cache(path)) {
        std::ifstream in(path, std::ios::binary);
        return load_dataset_cache(in);
    }
    std::vector<RawRecord> records = parse_ratings_file(path, delim);
    if (subsample > 0) records = subsample_users(std::move(records), subsample, seed);
    return preprocess(records);
}

}  // namespace streamrec
