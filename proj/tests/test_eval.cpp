#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "musicrec/eval.hpp"

using namespace musicrec;

namespace {

// Split with per-user train histories of chosen lengths; items are drawn
// round-robin so ids stay in range.
Split make_split(const std::vector<int>& train_lens, int num_items, Rng& rng) {
    const int M = static_cast<int>(train_lens.size());
    Split s;
    s.num_users = M;
    s.num_items = num_items;
    s.train.num_users = M;
    s.train.num_items = num_items;
    s.valid_item.resize(M);
    s.test_item.resize(M);
    std::uniform_int_distribution<int> item(0, num_items - 1);
    for (int u = 0; u < M; ++u) {
        std::set<int> used;
        while (static_cast<int>(used.size()) < train_lens[u] + 2) used.insert(item(rng));
        std::vector<int> items(used.begin(), used.end());
        std::shuffle(items.begin(), items.end(), rng);
        for (int k = 0; k < train_lens[u]; ++k)
            s.train.interactions.push_back({u, items[k], k});
        s.valid_item[u] = items[train_lens[u]];
        s.test_item[u] = items[train_lens[u] + 1];
    }
    return s;
}

ForwardState random_scorer(int M, int N, int d, Rng& rng) {
    ForwardState st;
    std::normal_distribution<double> gauss(0.0, 1.0);
    st.U_ui.resize(M, d);
    st.I_ui.resize(N, d);
    for (int r = 0; r < M; ++r)
        for (int c = 0; c < d; ++c) st.U_ui(r, c) = gauss(rng);
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < d; ++c) st.I_ui(r, c) = gauss(rng);
    st.I_fused = st.I_ui;
    return st;
}

}  // namespace

TEST_CASE("rank_for_user breaks ties toward the lower id and excludes train") {
    ForwardState st;
    st.U_ui = Mat::Ones(1, 1);
    st.I_ui = Mat::Zero(5, 1);
    st.I_ui << 2.0, 1.0, 1.0, 3.0, 1.0;  // scores equal item values
    st.I_fused = st.I_ui;
    auto ranked = rank_for_user(0, st, {3}, 0.0);
    REQUIRE(ranked == std::vector<int>{0, 1, 2, 4});
}

TEST_CASE("recall and ndcg closed forms") {
    std::vector<int> ranked = {7, 4, 9, 1, 0};
    REQUIRE(recall_at_k(ranked, 7, 1) == 1);
    REQUIRE(recall_at_k(ranked, 9, 2) == 0);
    REQUIRE(recall_at_k(ranked, 9, 10) == 1);
    REQUIRE(ndcg_at_k(ranked, 7, 10) == Catch::Approx(1.0).margin(1e-12));
    // rank 3 (1-based): 1/log2(4) = 0.5
    REQUIRE(ndcg_at_k(ranked, 9, 10) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(ndcg_at_k(ranked, 1, 4) == Catch::Approx(1.0 / std::log2(5.0)).margin(1e-12));
    // outside the cutoff
    REQUIRE(ndcg_at_k(ranked, 1, 3) == 0.0);
    REQUIRE(recall_at_k(ranked, 99, 10) == 0);
}

TEST_CASE("rank_for_user matches a brute-force sort") {
    Rng rng(501);
    const int N = 200, d = 6;
    auto st = random_scorer(3, N, d, rng);
    st.I_mm = Mat::Random(N, d);
    st.has_mm = true;
    const double alpha_mm = 0.2;
    std::vector<int> exclude = {5, 17, 130};

    for (int u = 0; u < 3; ++u) {
        auto ranked = rank_for_user(u, st, exclude, alpha_mm);
        std::vector<std::pair<double, int>> oracle;
        for (int i = 0; i < N; ++i) {
            if (i == 5 || i == 17 || i == 130) continue;
            double s = st.U_ui.row(u).dot(st.I_ui.row(i)) +
                       alpha_mm * st.U_ui.row(u).dot(st.I_mm.row(i));
            oracle.push_back({s, i});
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        REQUIRE(ranked.size() == oracle.size());
        for (std::size_t k = 0; k < ranked.size(); ++k) REQUIRE(ranked[k] == oracle[k].second);
    }
}

TEST_CASE("random scorer lands near the chance rate") {
    Rng rng(503);
    const int M = 400, N = 500;
    std::vector<int> lens(M, 3);
    auto split = make_split(lens, N, rng);
    auto st = random_scorer(M, N, 8, rng);
    auto rep = evaluate(split, st, EvalMode::Test, 0.0);
    REQUIRE(rep.users_evaluated == M);
    // each user ranks N-3 candidates; expect R@20 ~ 20/(N-3)
    double p = 20.0 / (N - 3);
    double sigma = std::sqrt(p * (1.0 - p) / M);
    REQUIRE(rep.at20.recall > p - 3.0 * sigma);
    REQUIRE(rep.at20.recall < p + 3.0 * sigma);
    REQUIRE(rep.at10.recall <= rep.at20.recall);
}

TEST_CASE("perfect scorer scores all ones") {
    Rng rng(505);
    const int M = 40, N = 60;
    std::vector<int> lens(M, 4);
    auto split = make_split(lens, N, rng);
    ForwardState st;
    st.U_ui = Mat::Zero(M, N);
    st.I_ui = Mat::Identity(N, N);
    st.I_fused = st.I_ui;
    for (int u = 0; u < M; ++u) st.U_ui(u, split.test_item[u]) = 1.0;
    auto rep = evaluate(split, st, EvalMode::Test, 0.0);
    REQUIRE(rep.at10.recall == 1.0);
    REQUIRE(rep.at20.recall == 1.0);
    REQUIRE(rep.at10.ndcg == 1.0);
    REQUIRE(rep.at20.ndcg == 1.0);
}

TEST_CASE("valid mode targets the validation item") {
    Rng rng(507);
    const int M = 20, N = 40;
    std::vector<int> lens(M, 4);
    auto split = make_split(lens, N, rng);
    ForwardState st;
    st.U_ui = Mat::Zero(M, N);
    st.I_ui = Mat::Identity(N, N);
    st.I_fused = st.I_ui;
    for (int u = 0; u < M; ++u) st.U_ui(u, split.valid_item[u]) = 1.0;
    REQUIRE(evaluate(split, st, EvalMode::Valid, 0.0).at20.recall == 1.0);
    REQUIRE(evaluate(split, st, EvalMode::Test, 0.0).at20.recall < 1.0);
}

TEST_CASE("ndcg never exceeds recall") {
    Rng rng(509);
    const int M = 100, N = 80;
    std::vector<int> lens(M, 5);
    auto split = make_split(lens, N, rng);
    auto st = random_scorer(M, N, 6, rng);
    auto rep = evaluate(split, st, EvalMode::Test, 0.0);
    REQUIRE(rep.at10.ndcg <= rep.at10.recall + 1e-12);
    REQUIRE(rep.at20.ndcg <= rep.at20.recall + 1e-12);
}

TEST_CASE("ranking is invariant to a positive rescale of the user vector") {
    Rng rng(511);
    const int M = 15, N = 50;
    std::vector<int> lens(M, 4);
    auto split = make_split(lens, N, rng);
    auto st = random_scorer(M, N, 7, rng);
    auto rep1 = evaluate(split, st, EvalMode::Test, 0.0);
    st.U_ui *= 3.5;
    auto rep2 = evaluate(split, st, EvalMode::Test, 0.0);
    REQUIRE(rep1.at20.recall == rep2.at20.recall);
    REQUIRE(rep1.at20.ndcg == Catch::Approx(rep2.at20.ndcg).margin(1e-12));
    REQUIRE(rep1.at10.recall == rep2.at10.recall);
}

TEST_CASE("history buckets partition the users") {
    REQUIRE(detail::bucket_index(1) == 0);
    REQUIRE(detail::bucket_index(5) == 0);
    REQUIRE(detail::bucket_index(6) == 1);
    REQUIRE(detail::bucket_index(20) == 1);
    REQUIRE(detail::bucket_index(21) == 2);
    REQUIRE(detail::bucket_index(50) == 2);
    REQUIRE(detail::bucket_index(51) == 3);

    Rng rng(513);
    // lengths spanning all four buckets
    std::vector<int> lens;
    for (int u = 0; u < 12; ++u) lens.push_back(3);
    for (int u = 0; u < 9; ++u) lens.push_back(10);
    for (int u = 0; u < 5; ++u) lens.push_back(30);
    for (int u = 0; u < 4; ++u) lens.push_back(60);
    auto split = make_split(lens, 120, rng);
    auto st = random_scorer(static_cast<int>(lens.size()), 120, 5, rng);
    auto rep = bucket_evaluate(split, st, 0.0);

    REQUIRE(rep.buckets.size() == 4);
    REQUIRE(rep.buckets[0].user_count == 12);
    REQUIRE(rep.buckets[1].user_count == 9);
    REQUIRE(rep.buckets[2].user_count == 5);
    REQUIRE(rep.buckets[3].user_count == 4);
    int total = 0;
    for (const auto& b : rep.buckets) total += b.user_count;
    REQUIRE(total == rep.users_evaluated);

    // bucket metrics equal the subset average computed by hand
    const auto R = build_interaction_matrix(split.train);
    double sub_r = 0.0;
    int sub_c = 0;
    for (int u = 0; u < split.num_users; ++u) {
        if (static_cast<int>(R.items_of_user[u].size()) > 5) continue;  // bucket "1-5"
        auto ranked = rank_for_user(u, st, R.items_of_user[u], 0.0);
        sub_r += recall_at_k(ranked, split.test_item[u], 20);
        ++sub_c;
    }
    REQUIRE(sub_c == rep.buckets[0].user_count);
    REQUIRE(rep.buckets[0].recall20 == Catch::Approx(sub_r / sub_c).margin(1e-12));

    // the overall metric is the user-count weighted bucket mean
    double weighted = 0.0;
    for (const auto& b : rep.buckets) weighted += b.recall20 * b.user_count;
    REQUIRE(weighted / total == Catch::Approx(rep.at20.recall).margin(1e-12));
}

TEST_CASE("report serialization carries every field") {
    Rng rng(515);
    auto split = make_split({4, 4, 4}, 30, rng);
    auto st = random_scorer(3, 30, 4, rng);
    auto rep = evaluate(split, st, EvalMode::Test, 0.0);
    auto j = eval_report_to_json(rep);
    REQUIRE(j["mode"] == "test");
    REQUIRE(j["users_evaluated"] == 3);
    REQUIRE(j.contains("recall@10"));
    REQUIRE(j.contains("ndcg@20"));
    REQUIRE(j["buckets"].size() == 4);

    auto table = eval_report_to_table(rep);
    REQUIRE(table.find("R@20") != std::string::npos);
    REQUIRE(table.find("1-5") != std::string::npos);
}
