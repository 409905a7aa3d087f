// Interaction log ingestion: raw triples -> dense-id, time-ordered log,
// plus the binary interaction matrix over train pairs.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "musicrec/types.hpp"

namespace musicrec {

struct Interaction {
    int user;
    int item;
    std::int64_t timestamp;
};

// Dense-id, per-user chronologically ordered interaction events.
// Immutable after construction.
struct InteractionLog {
    std::vector<Interaction> interactions;  // sorted by (user, timestamp, arrival order)
    int num_users = 0;
    int num_items = 0;
    // raw-id mapping retained for export
    std::vector<std::string> user_labels;
    std::vector<std::string> item_labels;

    std::vector<std::vector<Interaction>> by_user() const {
        std::vector<std::vector<Interaction>> out(num_users);
        for (const auto& it : interactions) out[it.user].push_back(it);
        return out;
    }
};

struct RawInteraction {
    std::string user;
    std::string item;
    std::int64_t timestamp;
};

// Relabels raw ids densely and orders each user's events by timestamp,
// breaking ties by input order. Exact duplicate (u,i,t) events are dropped;
// repeated (u,i) at different times survive.
inline InteractionLog reindex(const std::vector<RawInteraction>& raw) {
    if (raw.empty()) throw DataError("empty log");

    struct Event {
        std::string user, item;
        std::int64_t t;
        std::size_t order;
    };
    std::vector<Event> events;
    events.reserve(raw.size());
    std::set<std::tuple<std::string, std::string, std::int64_t>> seen;
    for (std::size_t k = 0; k < raw.size(); ++k) {
        if (!seen.insert({raw[k].user, raw[k].item, raw[k].timestamp}).second) continue;
        events.push_back({raw[k].user, raw[k].item, raw[k].timestamp, k});
    }

    // first-appearance order of users keeps relabeling deterministic
    std::unordered_map<std::string, int> umap, imap;
    InteractionLog log;
    for (const auto& e : events) {
        if (umap.emplace(e.user, static_cast<int>(log.user_labels.size())).second)
            log.user_labels.push_back(e.user);
        if (imap.emplace(e.item, static_cast<int>(log.item_labels.size())).second)
            log.item_labels.push_back(e.item);
    }
    log.num_users = static_cast<int>(log.user_labels.size());
    log.num_items = static_cast<int>(log.item_labels.size());

    std::stable_sort(events.begin(), events.end(), [&](const Event& a, const Event& b) {
        int ua = umap.at(a.user), ub = umap.at(b.user);
        if (ua != ub) return ua < ub;
        if (a.t != b.t) return a.t < b.t;
        return a.order < b.order;
    });
    log.interactions.reserve(events.size());
    for (const auto& e : events)
        log.interactions.push_back({umap.at(e.user), imap.at(e.item), e.t});
    return log;
}

// CSV with header `user,item,timestamp`.
inline std::vector<RawInteraction> read_interaction_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open interaction file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty interaction file: " + path);
    // tolerate a BOM and whitespace in the header check
    auto strip = [](std::string s) {
        s.erase(std::remove_if(s.begin(), s.end(),
                               [](unsigned char c) { return c == ' ' || c == '\r' || c == '\xef' ||
                                                            c == '\xbb' || c == '\xbf'; }),
                s.end());
        return s;
    };
    if (strip(line) != "user,item,timestamp")
        throw DataError("interaction file must start with header 'user,item,timestamp': " + path);

    std::vector<RawInteraction> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        RawInteraction r;
        std::string ts;
        if (!std::getline(ss, r.user, ',') || !std::getline(ss, r.item, ',') ||
            !std::getline(ss, ts))
            throw DataError("malformed interaction row at line " + std::to_string(lineno));
        if (!ts.empty() && ts.back() == '\r') ts.pop_back();
        try {
            r.timestamp = std::stoll(ts);
        } catch (const std::exception&) {
            throw DataError("bad timestamp at line " + std::to_string(lineno) + ": " + ts);
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Binary interaction matrix R over distinct (u,i) pairs, CSR-ish per-user item lists.
struct InteractionMatrix {
    int num_users = 0;
    int num_items = 0;
    std::vector<std::vector<int>> items_of_user;  // sorted ascending, distinct
    std::size_t nnz = 0;

    bool has(int u, int i) const {
        const auto& row = items_of_user[u];
        return std::binary_search(row.begin(), row.end(), i);
    }
};

inline InteractionMatrix build_interaction_matrix(const InteractionLog& log) {
    InteractionMatrix R;
    R.num_users = log.num_users;
    R.num_items = log.num_items;
    R.items_of_user.assign(log.num_users, {});
    for (const auto& it : log.interactions) R.items_of_user[it.user].push_back(it.item);
    for (auto& row : R.items_of_user) {
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        R.nnz += row.size();
    }
    return R;
}

}  // namespace musicrec
