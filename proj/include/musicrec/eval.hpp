// Leave-two-out ranking evaluation: Recall@k / NDCG@k and
// history-depth bucket breakdowns.
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "musicrec/dataset.hpp"
#include "musicrec/model.hpp"

namespace musicrec {

enum class EvalMode { Valid, Test };

struct MetricPair {
    double recall = 0.0;
    double ndcg = 0.0;
};

struct BucketRow {
    std::string label;
    int user_count = 0;
    double recall20 = 0.0;
    double ndcg20 = 0.0;
};

struct EvalReport {
    MetricPair at10;
    MetricPair at20;
    std::vector<BucketRow> buckets;
    EvalMode mode = EvalMode::Valid;
    int users_evaluated = 0;
};

// All items scored, the user's train items removed, descending score,
// ties toward the lower item id.
inline std::vector<int> rank_for_user(int u, const ForwardState& state,
                                      const std::vector<int>& exclude, double alpha_mm) {
    const int N = static_cast<int>(state.I_ui.rows());
    Vec item_scores = state.I_ui * state.U_ui.row(u).transpose();
    if (state.has_mm) item_scores += alpha_mm * (state.I_mm * state.U_ui.row(u).transpose());

    std::vector<char> excluded(N, 0);
    for (int i : exclude) excluded[i] = 1;
    std::vector<int> order;
    order.reserve(N);
    for (int i = 0; i < N; ++i)
        if (!excluded[i]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (item_scores(a) != item_scores(b)) return item_scores(a) > item_scores(b);
        return a < b;
    });
    return order;
}

inline int recall_at_k(const std::vector<int>& ranked, int target, int k) {
    for (int r = 0; r < k && r < static_cast<int>(ranked.size()); ++r)
        if (ranked[r] == target) return 1;
    return 0;
}

// Single relevant item: 1/log2(rank+1) with 1-based rank, IDCG = 1.
inline double ndcg_at_k(const std::vector<int>& ranked, int target, int k) {
    for (int r = 0; r < k && r < static_cast<int>(ranked.size()); ++r)
        if (ranked[r] == target) return 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return 0.0;
}

namespace detail {
inline int bucket_index(int train_len) {
    if (train_len <= 5) return 0;
    if (train_len <= 20) return 1;
    if (train_len <= 50) return 2;
    return 3;  // overflow bucket, reported explicitly
}
}  // namespace detail

// Metrics averaged over every user holding out `mode`'s item; per-user
// candidates are all items minus that user's train items.
inline EvalReport evaluate(const Split& split, const ForwardState& state, EvalMode mode,
                           double alpha_mm, bool with_buckets = true) {
    EvalReport rep;
    rep.mode = mode;
    const auto R = build_interaction_matrix(split.train);
    auto per_user_train = split.train.by_user();

    const std::vector<int>& targets =
        mode == EvalMode::Valid ? split.valid_item : split.test_item;

    static const char* kBucketLabels[4] = {"1-5", "6-20", "21-50", "50+"};
    double bucket_r[4] = {0, 0, 0, 0}, bucket_n[4] = {0, 0, 0, 0};
    int bucket_c[4] = {0, 0, 0, 0};

    double r10 = 0, n10 = 0, r20 = 0, n20 = 0;
    int evaluated = 0;
    for (int u = 0; u < split.num_users; ++u) {
        if (targets[u] < 0) continue;
        auto ranked = rank_for_user(u, state, R.items_of_user[u], alpha_mm);
        int target = targets[u];
        int hit10 = recall_at_k(ranked, target, 10);
        int hit20 = recall_at_k(ranked, target, 20);
        double nd10 = ndcg_at_k(ranked, target, 10);
        double nd20 = ndcg_at_k(ranked, target, 20);
        r10 += hit10; n10 += nd10; r20 += hit20; n20 += nd20;
        ++evaluated;

        int b = detail::bucket_index(static_cast<int>(per_user_train[u].size()));
        bucket_r[b] += hit20;
        bucket_n[b] += nd20;
        ++bucket_c[b];
    }
    if (evaluated > 0) {
        rep.at10 = {r10 / evaluated, n10 / evaluated};
        rep.at20 = {r20 / evaluated, n20 / evaluated};
    }
    rep.users_evaluated = evaluated;
    if (with_buckets) {
        for (int b = 0; b < 4; ++b) {
            BucketRow row;
            row.label = kBucketLabels[b];
            row.user_count = bucket_c[b];
            if (bucket_c[b] > 0) {
                row.recall20 = bucket_r[b] / bucket_c[b];
                row.ndcg20 = bucket_n[b] / bucket_c[b];
            }
            rep.buckets.push_back(row);
        }
    }
    return rep;
}

inline EvalReport bucket_evaluate(const Split& split, const ForwardState& state,
                                  double alpha_mm) {
    return evaluate(split, state, EvalMode::Test, alpha_mm, true);
}

inline nlohmann::json eval_report_to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["mode"] = rep.mode == EvalMode::Valid ? "valid" : "test";
    j["users_evaluated"] = rep.users_evaluated;
    j["recall@10"] = rep.at10.recall;
    j["ndcg@10"] = rep.at10.ndcg;
    j["recall@20"] = rep.at20.recall;
    j["ndcg@20"] = rep.at20.ndcg;
    j["buckets"] = nlohmann::json::array();
    for (const auto& b : rep.buckets) {
        j["buckets"].push_back({{"history", b.label},
                                {"users", b.user_count},
                                {"recall@20", b.recall20},
                                {"ndcg@20", b.ndcg20}});
    }
    return j;
}

inline std::string eval_report_to_table(const EvalReport& rep) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "mode: " << (rep.mode == EvalMode::Valid ? "valid" : "test")
       << "  users: " << rep.users_evaluated << "\n";
    os << "  R@10 " << rep.at10.recall << "  N@10 " << rep.at10.ndcg << "  R@20 "
       << rep.at20.recall << "  N@20 " << rep.at20.ndcg << "\n";
    if (!rep.buckets.empty()) {
        os << "  history   users   R@20    N@20\n";
        for (const auto& b : rep.buckets)
            os << "  " << std::left << std::setw(9) << b.label << std::right << std::setw(6)
               << b.user_count << "  " << b.recall20 << "  " << b.ndcg20 << "\n";
    }
    return os.str();
}

}  // namespace musicrec
