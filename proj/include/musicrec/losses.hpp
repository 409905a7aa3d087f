// Training objectives: BPR ranking, user<->sequence and item<->item
// InfoNCE alignment, modality-aware pairwise alignment, and the weighted
// total. Each loss has a value-only form and a gradient-accumulating form
// writing into branch-level adjoints.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "musicrec/model.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

struct Triple {
    int user;
    int pos_item;
    int neg_item;
};

struct TripleBatch {
    std::vector<Triple> triples;

    // distinct users / positive items in first-appearance order
    std::vector<int> distinct_users() const {
        std::vector<int> out;
        for (const auto& t : triples)
            if (std::find(out.begin(), out.end(), t.user) == out.end()) out.push_back(t.user);
        return out;
    }
    std::vector<int> distinct_pos_items() const {
        std::vector<int> out;
        for (const auto& t : triples)
            if (std::find(out.begin(), out.end(), t.pos_item) == out.end())
                out.push_back(t.pos_item);
        return out;
    }
};

// Adjoints of the branch outputs the losses touch. Branch backward passes
// pull these back to the parameter tables.
struct LossAdjoints {
    Mat dU_ui, dI_fused, dS_si, dI_si, dt_norm, dv_norm;

    static LossAdjoints zeros(int M, int N, int n_s, int d) {
        LossAdjoints a;
        a.dU_ui = Mat::Zero(M, d);
        a.dI_fused = Mat::Zero(N, d);
        a.dS_si = Mat::Zero(n_s, d);
        a.dI_si = Mat::Zero(N, d);
        a.dt_norm = Mat::Zero(N, d);
        a.dv_norm = Mat::Zero(N, d);
        return a;
    }
};

namespace detail {
inline double log_sigmoid(double x) {
    // stable -softplus(-x)
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
inline double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace detail

// -(1/|T|) sum log sigma(y+ - y-). `weight` scales the accumulated adjoints
// (1 for the bare loss; lambda weighting happens at the call site).
inline double bpr_loss(const TripleBatch& batch, const ForwardState& state,
                       LossAdjoints* adj = nullptr, double weight = 1.0) {
    if (batch.triples.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(batch.triples.size());
    double loss = 0.0;
    for (const auto& t : batch.triples) {
        auto yu = state.U_ui.row(t.user);
        double margin = yu.dot(state.I_fused.row(t.pos_item)) -
                        yu.dot(state.I_fused.row(t.neg_item));
        loss -= detail::log_sigmoid(margin) * inv;
        if (adj) {
            double g = -detail::sigmoid(-margin) * inv * weight;  // dL/dmargin
            adj->dU_ui.row(t.user) +=
                g * (state.I_fused.row(t.pos_item) - state.I_fused.row(t.neg_item));
            adj->dI_fused.row(t.pos_item) += g * yu;
            adj->dI_fused.row(t.neg_item) -= g * yu;
        }
    }
    return loss;
}

namespace detail {

// Shared InfoNCE over cosine similarity. Anchor k's positive is
// candidates[pos_of[k]]; the denominator runs over all candidates.
// Adjoints are written through the provided row accumulators.
struct RowRef {
    Mat* grad;          // adjoint matrix
    const Mat* value;   // forward values
    const std::vector<int>* rows;
};

inline double info_nce(const RowRef& anchors, const RowRef& candidates,
                       const std::vector<int>& pos_of, double tau, double weight) {
    const std::size_t K = anchors.rows->size();
    const std::size_t C = candidates.rows->size();
    if (K == 0) return 0.0;
    if (tau <= 0.0) throw ConfigError("contrastive temperature must be > 0");

    auto unit = [](const Mat& m, int r, double& norm) {
        norm = m.row(r).norm();
        Vec v = m.row(r).transpose();
        if (norm >= kNormGuard) v /= norm;
        else v.setZero();
        return v;
    };

    std::vector<Vec> ahat(K), chat(C);
    std::vector<double> anorm(K), cnorm(C);
    for (std::size_t k = 0; k < K; ++k) ahat[k] = unit(*anchors.value, (*anchors.rows)[k], anorm[k]);
    for (std::size_t c = 0; c < C; ++c)
        chat[c] = unit(*candidates.value, (*candidates.rows)[c], cnorm[c]);

    double loss = 0.0;
    const double inv_k = 1.0 / static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) {
        Vec sims(C);
        for (std::size_t c = 0; c < C; ++c) sims(c) = ahat[k].dot(chat[c]) / tau;
        double mx = sims.maxCoeff();
        double denom = (sims.array() - mx).exp().sum();
        loss += -(sims(pos_of[k]) - mx) + std::log(denom);

        if (anchors.grad) {
            Vec p = (sims.array() - mx).exp() / denom;
            for (std::size_t c = 0; c < C; ++c) {
                double coef =
                    (p(c) - (c == static_cast<std::size_t>(pos_of[k]) ? 1.0 : 0.0)) / tau;
                coef *= inv_k * weight;
                if (coef == 0.0) continue;
                double dot = ahat[k].dot(chat[c]);
                if (anorm[k] >= kNormGuard)
                    anchors.grad->row((*anchors.rows)[k]) +=
                        (coef / anorm[k]) * (chat[c] - dot * ahat[k]).transpose();
                if (cnorm[c] >= kNormGuard)
                    candidates.grad->row((*candidates.rows)[c]) +=
                        (coef / cnorm[c]) * (ahat[k] - dot * chat[c]).transpose();
            }
        }
    }
    return loss * inv_k;
}

}  // namespace detail

// Anchors: UI user vectors; positives: the user's own SI sequence vector.
// Contrast set = the given users' sequences (batch mode) or all sequences.
inline double us_contrastive(const std::vector<int>& users, const ForwardState& state,
                             double tau_cl, bool full_set = false, LossAdjoints* adj = nullptr,
                             double weight = 1.0) {
    if (!state.has_si) throw DataError("us_contrastive: SI branch not computed");
    std::vector<int> candidates;
    std::vector<int> pos_of(users.size());
    if (full_set) {
        candidates.resize(state.S_si.rows());
        for (std::size_t c = 0; c < candidates.size(); ++c) candidates[c] = static_cast<int>(c);
        for (std::size_t k = 0; k < users.size(); ++k) pos_of[k] = users[k];
    } else {
        candidates = users;
        for (std::size_t k = 0; k < users.size(); ++k) pos_of[k] = static_cast<int>(k);
    }
    detail::RowRef a{adj ? &adj->dU_ui : nullptr, &state.U_ui, &users};
    detail::RowRef c{adj ? &adj->dS_si : nullptr, &state.S_si, &candidates};
    return detail::info_nce(a, c, pos_of, tau_cl, weight);
}

// Anchors: fused item vectors; positives: the SI-branch item vectors.
// Contrast set = the batch's positive items.
inline double is_contrastive(const std::vector<int>& items, const ForwardState& state,
                             double tau_cl, LossAdjoints* adj = nullptr, double weight = 1.0) {
    if (!state.has_si) throw DataError("is_contrastive: SI branch not computed");
    std::vector<int> pos_of(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) pos_of[k] = static_cast<int>(k);
    detail::RowRef a{adj ? &adj->dI_fused : nullptr, &state.I_fused, &items};
    detail::RowRef c{adj ? &adj->dI_si : nullptr, &state.I_si, &items};
    return detail::info_nce(a, c, pos_of, tau_cl, weight);
}

// -(1/|T|) sum_triples sum_{m in {t,v}} log sigma(<e_u, m+ - m->).
inline double mm_alignment(const TripleBatch& batch, const ForwardState& state,
                           LossAdjoints* adj = nullptr, double weight = 1.0) {
    if (!state.has_mm) throw DataError("mm_alignment: MM branch not computed");
    if (batch.triples.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(batch.triples.size());
    double loss = 0.0;
    for (const auto& t : batch.triples) {
        auto yu = state.U_ui.row(t.user);
        for (int m = 0; m < 2; ++m) {
            const Mat& mod = (m == 0) ? state.t_norm : state.v_norm;
            Mat* dmod = adj ? ((m == 0) ? &adj->dt_norm : &adj->dv_norm) : nullptr;
            double margin = yu.dot(mod.row(t.pos_item)) - yu.dot(mod.row(t.neg_item));
            loss -= detail::log_sigmoid(margin) * inv;
            if (adj) {
                double g = -detail::sigmoid(-margin) * inv * weight;
                adj->dU_ui.row(t.user) += g * (mod.row(t.pos_item) - mod.row(t.neg_item));
                dmod->row(t.pos_item) += g * yu;
                dmod->row(t.neg_item) -= g * yu;
            }
        }
    }
    return loss;
}

struct LossBreakdown {
    double bpr = 0.0;
    double us = 0.0;
    double is = 0.0;
    double mm = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

// L = L_BPR + lambda_u L_US + lambda_i L_IS + lambda_sv L_SV + lambda_mm L_MM + reg.
// lambda_sv must be 0: the SV term has no published definition.
inline double total_loss(const LossBreakdown& c, const HyperParams& hp) {
    if (hp.lambda_u < 0 || hp.lambda_i < 0 || hp.lambda_sv < 0 || hp.lambda_mm < 0)
        throw ConfigError("loss weights must be non-negative");
    if (hp.lambda_sv != 0.0)
        throw ConfigError("lambda_sv must be 0: the SV loss term has no published definition");
    return c.bpr + hp.lambda_u * c.us + hp.lambda_i * c.is + hp.lambda_mm * c.mm + c.reg;
}

}  // namespace musicrec
