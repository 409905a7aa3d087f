// Synthetic cluster-planted dataset: users interact mostly within their
// latent cluster, with cluster-correlated item features. Used by the demo
// fixtures and the end-to-end tests.
#pragma once

#include <vector>

#include "musicrec/dataset.hpp"
#include "musicrec/interactions.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

struct SyntheticSpec {
    int num_users = 200;
    int num_items = 120;
    int num_clusters = 4;
    int min_history = 8;
    int max_history = 14;
    double within_cluster_prob = 0.9;
    int d_v = 16;
    int d_t = 8;
    double feature_noise = 0.3;
};

struct SyntheticDataset {
    std::vector<RawInteraction> raw;
    Mat visual;   // num_items x d_v
    Mat text;     // num_items x d_t
    std::vector<int> item_cluster;
    std::vector<int> user_cluster;
};

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    SyntheticDataset out;
    const int per_cluster = spec.num_items / spec.num_clusters;

    out.item_cluster.resize(spec.num_items);
    for (int i = 0; i < spec.num_items; ++i)
        out.item_cluster[i] = std::min(i / per_cluster, spec.num_clusters - 1);
    out.user_cluster.resize(spec.num_users);
    for (int u = 0; u < spec.num_users; ++u) out.user_cluster[u] = u % spec.num_clusters;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> hist_len(spec.min_history, spec.max_history);

    for (int u = 0; u < spec.num_users; ++u) {
        const int c = out.user_cluster[u];
        const int T = hist_len(rng);
        std::vector<char> used(spec.num_items, 0);
        int made = 0;
        std::int64_t t = 0;
        while (made < T) {
            int item;
            if (unit(rng) < spec.within_cluster_prob) {
                std::uniform_int_distribution<int> pick(c * per_cluster,
                                                        (c + 1) * per_cluster - 1);
                item = pick(rng);
            } else {
                std::uniform_int_distribution<int> pick(0, spec.num_items - 1);
                item = pick(rng);
            }
            if (used[item]) continue;  // distinct items keep the split clean
            used[item] = 1;
            out.raw.push_back({"u" + std::to_string(u), "i" + std::to_string(item), t++});
            ++made;
        }
    }

    // cluster centroids plus noise
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat vc(spec.num_clusters, spec.d_v), tc(spec.num_clusters, spec.d_t);
    for (int c = 0; c < spec.num_clusters; ++c) {
        for (int j = 0; j < spec.d_v; ++j) vc(c, j) = gauss(rng);
        for (int j = 0; j < spec.d_t; ++j) tc(c, j) = gauss(rng);
    }
    out.visual.resize(spec.num_items, spec.d_v);
    out.text.resize(spec.num_items, spec.d_t);
    for (int i = 0; i < spec.num_items; ++i) {
        int c = out.item_cluster[i];
        for (int j = 0; j < spec.d_v; ++j)
            out.visual(i, j) = vc(c, j) + spec.feature_noise * gauss(rng);
        for (int j = 0; j < spec.d_t; ++j)
            out.text(i, j) = tc(c, j) + spec.feature_noise * gauss(rng);
    }
    return out;
}

}  // namespace musicrec
