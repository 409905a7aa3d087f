// Dataset preparation: 5-core filtering, the leave-two-out split,
// per-user train sequences and multimodal feature loading.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "musicrec/interactions.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

// Iteratively drops users and items with fewer than `core` interaction
// events until a fixed point, then reindexes densely.
inline InteractionLog core_filter(const InteractionLog& log, int core) {
    std::vector<char> keep_user(log.num_users, 1), keep_item(log.num_items, 1);
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<int> udeg(log.num_users, 0), ideg(log.num_items, 0);
        for (const auto& it : log.interactions) {
            if (!keep_user[it.user] || !keep_item[it.item]) continue;
            ++udeg[it.user];
            ++ideg[it.item];
        }
        for (int u = 0; u < log.num_users; ++u)
            if (keep_user[u] && udeg[u] < core) { keep_user[u] = 0; changed = true; }
        for (int i = 0; i < log.num_items; ++i)
            if (keep_item[i] && ideg[i] < core) { keep_item[i] = 0; changed = true; }
    }

    std::vector<RawInteraction> surviving;
    for (const auto& it : log.interactions)
        if (keep_user[it.user] && keep_item[it.item])
            surviving.push_back({log.user_labels[it.user], log.item_labels[it.item], it.timestamp});
    if (surviving.empty())
        throw DataError("dataset vanished under " + std::to_string(core) + "-core");
    return reindex(surviving);
}

inline InteractionLog five_core_filter(const InteractionLog& log) { return core_filter(log, 5); }

// Per-user split: final event -> test, penultimate -> valid, the rest -> train.
// Valid and test share the identical train-only prefix.
struct Split {
    InteractionLog train;
    std::vector<int> valid_item;  // indexed by user
    std::vector<int> test_item;
    int num_users = 0;
    int num_items = 0;
};

inline Split leave_two_out(const InteractionLog& log) {
    Split split;
    split.num_users = log.num_users;
    split.num_items = log.num_items;
    split.valid_item.assign(log.num_users, -1);
    split.test_item.assign(log.num_users, -1);
    split.train.num_users = log.num_users;
    split.train.num_items = log.num_items;
    split.train.user_labels = log.user_labels;
    split.train.item_labels = log.item_labels;

    auto per_user = log.by_user();
    for (int u = 0; u < log.num_users; ++u) {
        const auto& hist = per_user[u];
        if (hist.size() < 3)
            throw DataError("user " + std::to_string(u) +
                            " has fewer than 3 interactions; split undefined");
        for (std::size_t k = 0; k + 2 < hist.size(); ++k)
            split.train.interactions.push_back(hist[k]);
        split.valid_item[u] = hist[hist.size() - 2].item;
        split.test_item[u] = hist[hist.size() - 1].item;
    }
    return split;
}

// One sequence per user: train items in chronological order, most recent
// L_max kept. Repeats are kept (the sequence is a multiset).
struct SequenceSet {
    std::vector<std::vector<int>> items;  // indexed by user
    int num_items = 0;
};

inline SequenceSet build_sequences(const Split& split, int L_max) {
    SequenceSet seqs;
    seqs.num_items = split.num_items;
    seqs.items.assign(split.num_users, {});
    auto per_user = split.train.by_user();
    for (int u = 0; u < split.num_users; ++u) {
        const auto& hist = per_user[u];
        std::size_t start = hist.size() > static_cast<std::size_t>(L_max)
                                ? hist.size() - static_cast<std::size_t>(L_max)
                                : 0;
        for (std::size_t k = start; k < hist.size(); ++k)
            seqs.items[u].push_back(hist[k].item);
    }
    return seqs;
}

// ----- multimodal features -----

struct FeatureMatrix {
    Mat values;  // rows = items, cols = feature dim
    int rows() const { return static_cast<int>(values.rows()); }
    int dim() const { return static_cast<int>(values.cols()); }
};

namespace detail {
inline void check_finite(const Mat& m, const std::string& path) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            if (!std::isfinite(m(r, c)))
                throw DataError("non-finite feature value at row " + std::to_string(r) +
                                " in " + path);
}
}  // namespace detail

// Binary format: magic "FEAT", u32 rows, u32 dim, rows*dim float32 row-major LE.
inline FeatureMatrix load_features_binary(const std::string& path, int expected_rows,
                                          int expected_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + path);
    char magic[4];
    std::uint32_t rows = 0, dim = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    if (!in || std::memcmp(magic, "FEAT", 4) != 0)
        throw DataError("bad feature file header: " + path);
    if (static_cast<int>(rows) != expected_rows || static_cast<int>(dim) != expected_dim)
        throw DataError("feature shape mismatch in " + path + ": got " + std::to_string(rows) +
                        "x" + std::to_string(dim) + ", expected " + std::to_string(expected_rows) +
                        "x" + std::to_string(expected_dim));
    std::vector<float> buf(static_cast<std::size_t>(rows) * dim);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!in) throw DataError("truncated feature file: " + path);

    FeatureMatrix F;
    F.values.resize(rows, dim);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < dim; ++c)
            F.values(r, c) = buf[static_cast<std::size_t>(r) * dim + c];
    detail::check_finite(F.values, path);
    return F;
}

inline void save_features_binary(const std::string& path, const Mat& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature file: " + path);
    std::uint32_t rows = static_cast<std::uint32_t>(values.rows());
    std::uint32_t dim = static_cast<std::uint32_t>(values.cols());
    out.write("FEAT", 4);
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    std::vector<float> buf(static_cast<std::size_t>(rows) * dim);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < dim; ++c)
            buf[static_cast<std::size_t>(r) * dim + c] = static_cast<float>(values(r, c));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * 4));
}

// CSV fallback: one row per item, comma-separated floats, no header.
inline FeatureMatrix load_features_csv(const std::string& path, int expected_rows,
                                       int expected_dim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature file: " + path);
    FeatureMatrix F;
    F.values.resize(expected_rows, expected_dim);
    std::string line;
    int r = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (r >= expected_rows)
            throw DataError("too many feature rows in " + path);
        std::stringstream ss(line);
        std::string cell;
        int c = 0;
        while (std::getline(ss, cell, ',')) {
            if (c >= expected_dim)
                throw DataError("feature dim mismatch at row " + std::to_string(r) + " in " + path);
            F.values(r, c) = std::stod(cell);
            ++c;
        }
        if (c != expected_dim)
            throw DataError("feature dim mismatch at row " + std::to_string(r) + " in " + path);
        ++r;
    }
    if (r != expected_rows)
        throw DataError("feature row count mismatch in " + path + ": got " + std::to_string(r) +
                        ", expected " + std::to_string(expected_rows));
    detail::check_finite(F.values, path);
    return F;
}

inline FeatureMatrix load_features(const std::string& path, int expected_rows, int expected_dim) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open feature file: " + path);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    if (std::memcmp(magic, "FEAT", 4) == 0)
        return load_features_binary(path, expected_rows, expected_dim);
    return load_features_csv(path, expected_rows, expected_dim);
}

// Labeled raw features: CSV rows `item_label,v1,...,vdim`. Rows are aligned
// to the reindexed item order; items without a feature row are an error.
inline FeatureMatrix align_features(const std::string& path,
                                    const std::vector<std::string>& item_labels, int dim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature file: " + path);
    std::map<std::string, std::vector<double>> by_label;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string label, cell;
        if (!std::getline(ss, label, ','))
            throw DataError("malformed feature row at line " + std::to_string(lineno));
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (static_cast<int>(vals.size()) != dim)
            throw DataError("feature dim mismatch for item '" + label + "' in " + path);
        by_label[label] = std::move(vals);
    }

    std::string missing;
    FeatureMatrix F;
    F.values.resize(static_cast<int>(item_labels.size()), dim);
    for (std::size_t i = 0; i < item_labels.size(); ++i) {
        auto it = by_label.find(item_labels[i]);
        if (it == by_label.end()) {
            if (!missing.empty()) missing += ", ";
            missing += item_labels[i];
            continue;
        }
        for (int c = 0; c < dim; ++c) F.values(static_cast<int>(i), c) = it->second[c];
    }
    if (!missing.empty())
        throw DataError("missing feature rows for items: " + missing);
    detail::check_finite(F.values, path);
    return F;
}

struct DatasetStats {
    int users = 0;
    int items = 0;
    std::size_t interactions = 0;
    double sparsity_percent = 0.0;
};

inline DatasetStats compute_stats(const InteractionLog& log) {
    DatasetStats s;
    s.users = log.num_users;
    s.items = log.num_items;
    s.interactions = log.interactions.size();
    double cells = static_cast<double>(log.num_users) * static_cast<double>(log.num_items);
    s.sparsity_percent = cells > 0 ? 100.0 * (1.0 - static_cast<double>(s.interactions) / cells)
                                   : 0.0;
    return s;
}

}  // namespace musicrec
