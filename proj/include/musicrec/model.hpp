// Forward pass: UI propagation, attention-pooled sequence nodes with SI
// propagation, ID-gated multimodal seeding with MM propagation, fusion
// and scoring.
#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "musicrec/dataset.hpp"
#include "musicrec/graph.hpp"
#include "musicrec/params.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

enum class LayerAggregate { MeanOverLayers, LastLayer };

// Counts SpMM layer applications; one full forward with default depths
// performs 3 UI + 2 SI + 1 MM = 6.
struct PropagationCounter {
    std::size_t spmm_calls = 0;
};

// Z^(l+1) = G Z^(l); MeanOverLayers returns (1/(L+1)) sum_l Z^(l),
// LastLayer returns Z^(L).
inline Mat propagate(const NormalizedSparseGraph& G, const Mat& X, int L,
                     LayerAggregate aggregate, PropagationCounter* counter = nullptr) {
    if (X.rows() != G.dim()) throw DataError("propagate: row count does not match graph dim");
    Mat Z = X;
    Mat acc = X;
    for (int l = 0; l < L; ++l) {
        Z = G.adj.multiply(Z);
        if (counter) ++counter->spmm_calls;
        if (aggregate == LayerAggregate::MeanOverLayers) acc += Z;
    }
    if (aggregate == LayerAggregate::MeanOverLayers) return acc / static_cast<double>(L + 1);
    return Z;
}

// Stack [U; I], propagate with layer-mean aggregation, split back out.
inline std::pair<Mat, Mat> ui_forward(const NormalizedSparseGraph& G_ui, const Mat& U,
                                      const Mat& I, int L_ui,
                                      PropagationCounter* counter = nullptr) {
    const int M = static_cast<int>(U.rows()), N = static_cast<int>(I.rows());
    Mat Z0(M + N, U.cols());
    Z0.topRows(M) = U;
    Z0.bottomRows(N) = I;
    Mat Z = propagate(G_ui, Z0, L_ui, LayerAggregate::MeanOverLayers, counter);
    return {Z.topRows(M), Z.bottomRows(N)};
}

// Intermediates of one pooled sequence, kept for the backward pass.
struct PoolRecord {
    std::vector<int> items;
    Vec weights;      // softmax attention weights, length ell
    Mat tanh_act;     // ell x h, tanh(W_a h_t); empty for sinusoidal pooling
    bool sinusoidal = false;
};

// Additive attention pooling. Scores come from the raw item embeddings;
// positions enter only through the pooled value X = H + P.
inline Vec attention_pool(const std::vector<int>& seq, const ModelParams& params,
                          PoolRecord* record = nullptr) {
    const int ell = static_cast<int>(seq.size());
    if (ell == 0) throw DataError("attention_pool: empty sequence");
    if (ell > params.P.rows()) throw DataError("attention_pool: sequence longer than L_max");
    const int h = static_cast<int>(params.W_a.rows());
    const int d = static_cast<int>(params.I.cols());

    Mat tanh_act(ell, h);
    Vec logits(ell);
    for (int t = 0; t < ell; ++t) {
        Vec q = params.W_a * params.I.row(seq[t]).transpose();
        for (int j = 0; j < h; ++j) tanh_act(t, j) = std::tanh(q(j));
        logits(t) = params.v_a.dot(tanh_act.row(t));
    }
    Vec a = (logits.array() - logits.maxCoeff()).exp();
    a /= a.sum();

    Vec out = Vec::Zero(d);
    for (int t = 0; t < ell; ++t)
        out += a(t) * (params.I.row(seq[t]).transpose() + params.P.row(t).transpose());

    if (record) {
        record->items = seq;
        record->weights = a;
        record->tanh_act = tanh_act;
        record->sinusoidal = false;
    }
    return out;
}

inline Vec sinusoidal_encoding(int pos, int d) {
    Vec pe(d);
    for (int j = 0; j < d; ++j) {
        double angle = pos / std::pow(10000.0, 2.0 * (j / 2) / d);
        pe(j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return pe;
}

// Parameter-free alternative: fixed sinusoidal encodings added to item
// embeddings, then a uniform mean. Independent of W_a, v_a and P.
inline Vec sinusoidal_pool(const std::vector<int>& seq, const ModelParams& params,
                           PoolRecord* record = nullptr) {
    const int ell = static_cast<int>(seq.size());
    if (ell == 0) throw DataError("sinusoidal_pool: empty sequence");
    const int d = static_cast<int>(params.I.cols());
    Vec out = Vec::Zero(d);
    for (int t = 0; t < ell; ++t)
        out += params.I.row(seq[t]).transpose() + sinusoidal_encoding(t, d);
    out /= static_cast<double>(ell);
    if (record) {
        record->items = seq;
        record->weights = Vec::Constant(ell, 1.0 / ell);
        record->tanh_act = Mat();
        record->sinusoidal = true;
    }
    return out;
}

struct SequenceCache {
    Mat vectors;                    // n_s x d
    std::vector<int> epoch_stamp;   // epoch of last refresh, per row

    static SequenceCache create(int n_s, int d) {
        SequenceCache c;
        c.vectors = Mat::Zero(n_s, d);
        c.epoch_stamp.assign(n_s, -1);
        return c;
    }
};

enum class PoolMode { Attention, Sinusoidal };

inline Vec pool_sequence(const std::vector<int>& seq, const ModelParams& params, PoolMode mode,
                         PoolRecord* record = nullptr) {
    return mode == PoolMode::Attention ? attention_pool(seq, params, record)
                                       : sinusoidal_pool(seq, params, record);
}

// Recomputes the listed rows (or all) under the current parameters.
inline void refresh_cache(SequenceCache& cache, const std::vector<int>& users,
                          const SequenceSet& seqs, const ModelParams& params, PoolMode mode,
                          int epoch = 0) {
    for (int u : users) {
        if (!seqs.items[u].empty())
            cache.vectors.row(u) = pool_sequence(seqs.items[u], params, mode).transpose();
        cache.epoch_stamp[u] = epoch;
    }
}

inline void refresh_cache_all(SequenceCache& cache, const SequenceSet& seqs,
                              const ModelParams& params, PoolMode mode, int epoch = 0) {
    std::vector<int> all(seqs.items.size());
    for (std::size_t u = 0; u < all.size(); ++u) all[u] = static_cast<int>(u);
    refresh_cache(cache, all, seqs, params, mode, epoch);
}

// Stack [S; I], propagate, take the last layer, split.
inline std::pair<Mat, Mat> si_forward(const NormalizedSparseGraph& G_si, const Mat& S,
                                      const Mat& I, int L_si,
                                      PropagationCounter* counter = nullptr) {
    const int n_s = static_cast<int>(S.rows()), N = static_cast<int>(I.rows());
    Mat Z0(n_s + N, S.cols());
    Z0.topRows(n_s) = S;
    Z0.bottomRows(N) = I;
    Mat Z = propagate(G_si, Z0, L_si, LayerAggregate::LastLayer, counter);
    return {Z.topRows(n_s), Z.bottomRows(N)};
}

constexpr double kNormGuard = 1e-12;

// Row-wise l2 normalization; rows with norm below the guard stay zero.
inline Mat l2_normalize_rows(const Mat& X, Vec* norms_out = nullptr) {
    Mat out = X;
    if (norms_out) norms_out->resize(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        double n = X.row(r).norm();
        if (norms_out) (*norms_out)(r) = n;
        if (n >= kNormGuard) out.row(r) /= n;
        else out.row(r).setZero();
    }
    return out;
}

struct AblationFlags {
    bool no_ui = false;
    bool no_si = false;
    bool no_mm = false;
    bool no_mm_id_seed = false;
    bool sinusoidal_pool = false;

    int count() const {
        return int(no_ui) + int(no_si) + int(no_mm) + int(no_mm_id_seed) + int(sinusoidal_pool);
    }
    PoolMode pool_mode() const {
        return sinusoidal_pool ? PoolMode::Sinusoidal : PoolMode::Attention;
    }
};

struct MmForwardOut {
    Mat I_mm;    // N x d
    Vec beta;    // N gates
    Mat mix;     // N x d gated content
    Mat t_norm;  // N x d
    Mat v_norm;  // N x d
    // backward intermediates
    Vec t_proj_norm;
    Vec v_proj_norm;
};

// project -> normalize -> gate -> mix -> seed -> propagate (last layer).
// With id_seed disabled the gate is fixed at 0.5 and the ID anchor is dropped.
inline MmForwardOut mm_forward(const NormalizedSparseGraph& G_mm, const Mat& I,
                               const FeatureMatrix& F_v, const FeatureMatrix& F_t,
                               const ModelParams& params, double alpha_seed, int L_mm,
                               bool id_seed = true, PropagationCounter* counter = nullptr) {
    MmForwardOut out;
    Mat v_proj = F_v.values * params.W_v;
    Mat t_proj = F_t.values * params.W_t;
    out.v_norm = l2_normalize_rows(v_proj, &out.v_proj_norm);
    out.t_norm = l2_normalize_rows(t_proj, &out.t_proj_norm);

    const int N = static_cast<int>(I.rows());
    out.beta.resize(N);
    if (id_seed) {
        Vec logits = I * params.w_beta;
        out.beta = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    } else {
        out.beta.setConstant(0.5);
    }

    out.mix.resize(N, I.cols());
    for (int i = 0; i < N; ++i)
        out.mix.row(i) = (1.0 - out.beta(i)) * out.t_norm.row(i) + out.beta(i) * out.v_norm.row(i);

    Mat z0 = alpha_seed * out.mix;
    if (id_seed) z0 += I;
    out.I_mm = propagate(G_mm, z0, L_mm, LayerAggregate::LastLayer, counter);
    return out;
}

// Everything the losses and the evaluator consume from one forward pass.
struct ForwardState {
    Mat U_ui, I_ui;
    Mat S_si, I_si;
    Mat I_mm;
    Mat I_fused;  // I_ui + alpha_mm * I_mm
    Vec beta;
    Mat mix, t_norm, v_norm;
    bool has_si = false;
    bool has_mm = false;
};

struct ModelInputs {
    const NormalizedSparseGraph* g_ui = nullptr;
    const NormalizedSparseGraph* g_si = nullptr;
    const NormalizedSparseGraph* g_mm = nullptr;
    const SequenceSet* seqs = nullptr;
    const FeatureMatrix* F_v = nullptr;
    const FeatureMatrix* F_t = nullptr;
};

// Intermediates needed to run the analytic backward pass.
struct BackwardContext {
    std::vector<int> live_users;  // rows of S whose pooling is differentiated
    std::unordered_map<int, PoolRecord> pool_records;
    Vec t_proj_norm, v_proj_norm;
};

// Full forward. `live_users` rows of the sequence cache are recomputed from
// the current parameters (and recorded for backward); all other cached rows
// enter the SI branch as constants.
inline ForwardState forward(const ModelParams& params, const ModelInputs& in,
                            const HyperParams& hp, SequenceCache& cache,
                            const std::vector<int>& live_users, const AblationFlags& flags,
                            PropagationCounter* counter = nullptr,
                            BackwardContext* ctx = nullptr) {
    ForwardState st;
    if (flags.no_ui) {
        st.U_ui = params.U;
        st.I_ui = params.I;
    } else {
        std::tie(st.U_ui, st.I_ui) = ui_forward(*in.g_ui, params.U, params.I, hp.L_ui, counter);
    }

    if (!flags.no_si) {
        for (int u : live_users) {
            PoolRecord rec;
            if (!in.seqs->items[u].empty()) {
                cache.vectors.row(u) =
                    pool_sequence(in.seqs->items[u], params, flags.pool_mode(), &rec).transpose();
                if (ctx) ctx->pool_records[u] = std::move(rec);
            }
        }
        if (ctx) ctx->live_users = live_users;
        std::tie(st.S_si, st.I_si) =
            si_forward(*in.g_si, cache.vectors, params.I, hp.L_si, counter);
        st.has_si = true;
    }

    if (!flags.no_mm) {
        MmForwardOut mm = mm_forward(*in.g_mm, params.I, *in.F_v, *in.F_t, params, hp.alpha_seed,
                                     hp.L_mm, !flags.no_mm_id_seed, counter);
        st.I_mm = std::move(mm.I_mm);
        st.beta = std::move(mm.beta);
        st.mix = std::move(mm.mix);
        st.t_norm = std::move(mm.t_norm);
        st.v_norm = std::move(mm.v_norm);
        if (ctx) {
            ctx->t_proj_norm = std::move(mm.t_proj_norm);
            ctx->v_proj_norm = std::move(mm.v_proj_norm);
        }
        st.I_fused = st.I_ui + hp.alpha_mm * st.I_mm;
        st.has_mm = true;
    } else {
        st.I_fused = st.I_ui;
    }
    return st;
}

// y_hat(u, i) = <U_ui[u], I_ui[i] + alpha_mm * I_mm[i]>.
inline Vec fuse_and_score(int u, const std::vector<int>& items, const ForwardState& state,
                          double alpha_mm) {
    if (u < 0 || u >= state.U_ui.rows()) throw DataError("fuse_and_score: user id out of range");
    Vec scores(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
        int i = items[k];
        if (i < 0 || i >= state.I_ui.rows())
            throw DataError("fuse_and_score: item id out of range");
        double s = state.U_ui.row(u).dot(state.I_ui.row(i));
        if (state.has_mm) s += alpha_mm * state.U_ui.row(u).dot(state.I_mm.row(i));
        scores(k) = s;
    }
    return scores;
}

}  // namespace musicrec
