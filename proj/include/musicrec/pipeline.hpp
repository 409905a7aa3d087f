// Convenience layer tying data preparation to model inputs: owns the three
// graphs, the sequences and the feature matrices for one run.
#pragma once

#include <utility>

#include "musicrec/dataset.hpp"
#include "musicrec/graph.hpp"
#include "musicrec/model.hpp"

namespace musicrec {

struct BuiltInputs {
    NormalizedSparseGraph g_ui, g_si, g_mm;
    SequenceSet seqs;
    FeatureMatrix F_v, F_t;
    bool has_mm = false;

    ModelInputs view() const {
        ModelInputs in;
        in.g_ui = &g_ui;
        in.g_si = &g_si;
        in.seqs = &seqs;
        if (has_mm) {
            in.g_mm = &g_mm;
            in.F_v = &F_v;
            in.F_t = &F_t;
        }
        return in;
    }
};

inline BuiltInputs build_inputs(const Split& split, const HyperParams& hp, FeatureMatrix F_v,
                                FeatureMatrix F_t, bool with_mm = true) {
    BuiltInputs b;
    const InteractionMatrix R = build_interaction_matrix(split.train);
    b.g_ui = build_ui_graph(R);
    b.seqs = build_sequences(split, hp.L_max);
    b.g_si = build_si_graph(b.seqs, hp.tau_jac);
    if (with_mm) {
        auto A_v = symmetric_normalize(build_knn_graph(F_v, hp.k_nn), GraphKind::MM);
        auto A_t = symmetric_normalize(build_knn_graph(F_t, hp.k_nn), GraphKind::MM);
        b.g_mm = fuse_mm_graphs(A_v, A_t, hp.alpha_v);
        b.F_v = std::move(F_v);
        b.F_t = std::move(F_t);
        b.has_mm = true;
    }
    return b;
}

}  // namespace musicrec
