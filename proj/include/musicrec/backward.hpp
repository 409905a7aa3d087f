// Analytic reverse pass. Loss adjoints on branch outputs are pulled back
// through the propagation chains, the attention pooling and the multimodal
// seeding into gradients for every parameter table. Frozen structures
// (graphs, out-of-batch cached sequence rows) receive no gradient.
#pragma once

#include <cmath>

#include "musicrec/losses.hpp"
#include "musicrec/model.hpp"
#include "musicrec/params.hpp"

namespace musicrec {

// Backprop through one pooled sequence: g is dLoss/d(pooled vector).
inline void pool_backward(const PoolRecord& rec, const Vec& g, const ModelParams& params,
                          Gradients& grads) {
    const int ell = static_cast<int>(rec.items.size());
    if (rec.sinusoidal) {
        for (int t = 0; t < ell; ++t) grads.I.row(rec.items[t]) += g.transpose() / ell;
        return;
    }

    Vec da(ell);
    for (int t = 0; t < ell; ++t)
        da(t) = g.dot(params.I.row(rec.items[t]).transpose() + params.P.row(t).transpose());
    double a_dot = rec.weights.dot(da);
    Vec de = rec.weights.array() * (da.array() - a_dot);  // softmax backward

    for (int t = 0; t < ell; ++t) {
        grads.P.row(t) += rec.weights(t) * g.transpose();
        Vec dH = rec.weights(t) * g;  // value path X = H + P
        grads.v_a += de(t) * rec.tanh_act.row(t).transpose();
        Vec dq = de(t) * (params.v_a.array() *
                          (1.0 - rec.tanh_act.row(t).transpose().array().square()))
                             .matrix();
        grads.W_a += dq * params.I.row(rec.items[t]);
        dH += params.W_a.transpose() * dq;
        grads.I.row(rec.items[t]) += dH.transpose();
    }
}

// One training step's objective with exact gradients. With `grads == nullptr`
// this is a pure forward evaluation of the same function, which is what the
// finite-difference oracle perturbs.
inline LossBreakdown compute_loss_and_grads(const ModelParams& params, const ModelInputs& in,
                                            const HyperParams& hp, SequenceCache& cache,
                                            const TripleBatch& batch, const AblationFlags& flags,
                                            Gradients* grads = nullptr,
                                            ForwardState* state_out = nullptr,
                                            PropagationCounter* counter = nullptr) {
    const int M = static_cast<int>(params.U.rows());
    const int N = static_cast<int>(params.I.rows());
    const int d = static_cast<int>(params.U.cols());

    std::vector<int> live_users = flags.no_si ? std::vector<int>{} : batch.distinct_users();
    BackwardContext ctx;
    ForwardState st = forward(params, in, hp, cache, live_users, flags, counter,
                              grads ? &ctx : nullptr);

    LossAdjoints adj = LossAdjoints::zeros(M, N, st.has_si ? static_cast<int>(st.S_si.rows()) : 0, d);
    LossAdjoints* adjp = grads ? &adj : nullptr;

    LossBreakdown lb;
    lb.bpr = bpr_loss(batch, st, adjp, 1.0);
    if (st.has_si) {
        auto users = batch.distinct_users();
        auto items = batch.distinct_pos_items();
        lb.us = us_contrastive(users, st, hp.tau_cl, hp.full_set_us_contrast,
                               hp.lambda_u > 0 ? adjp : nullptr, hp.lambda_u);
        lb.is = is_contrastive(items, st, hp.tau_cl, hp.lambda_i > 0 ? adjp : nullptr,
                               hp.lambda_i);
    }
    if (st.has_mm && !flags.no_mm) {
        lb.mm = mm_alignment(batch, st, hp.lambda_mm > 0 ? adjp : nullptr, hp.lambda_mm);
    }
    if (hp.l2_reg > 0.0) {
        lb.reg = hp.l2_reg * (params.U.squaredNorm() + params.I.squaredNorm());
        if (grads) {
            grads->U += 2.0 * hp.l2_reg * params.U;
            grads->I += 2.0 * hp.l2_reg * params.I;
        }
    }
    lb.total = total_loss(lb, hp);

    if (grads) {
        // fused item vector splits into UI and MM contributions
        Mat dI_ui = adj.dI_fused;
        Mat dI_mm;
        if (st.has_mm) dI_mm = hp.alpha_mm * adj.dI_fused;

        // UI branch (identity when ablated)
        if (flags.no_ui) {
            grads->U += adj.dU_ui;
            grads->I += dI_ui;
        } else {
            Mat dY(M + N, d);
            dY.topRows(M) = adj.dU_ui;
            dY.bottomRows(N) = dI_ui;
            Mat dZ0 = propagate(*in.g_ui, dY, hp.L_ui, LayerAggregate::MeanOverLayers);
            grads->U += dZ0.topRows(M);
            grads->I += dZ0.bottomRows(N);
        }

        // SI branch: adjoint through L_si hops, then through pooling for
        // the live rows only; other cached rows are constants.
        if (st.has_si) {
            const int n_s = static_cast<int>(st.S_si.rows());
            Mat dY(n_s + N, d);
            dY.topRows(n_s) = adj.dS_si;
            dY.bottomRows(N) = adj.dI_si;
            Mat dZ0 = propagate(*in.g_si, dY, hp.L_si, LayerAggregate::LastLayer);
            grads->I += dZ0.bottomRows(N);
            for (int u : ctx.live_users) {
                auto it = ctx.pool_records.find(u);
                if (it == ctx.pool_records.end()) continue;
                Vec g = dZ0.row(u).transpose();
                if (g.squaredNorm() > 0.0) pool_backward(it->second, g, params, *grads);
            }
        }

        // MM branch
        if (st.has_mm) {
            Mat dz0 = propagate(*in.g_mm, dI_mm, hp.L_mm, LayerAggregate::LastLayer);
            const bool id_seed = !flags.no_mm_id_seed;
            if (id_seed) grads->I += dz0;
            Mat dmix = hp.alpha_seed * dz0;

            for (int i = 0; i < N; ++i) {
                adj.dt_norm.row(i) += (1.0 - st.beta(i)) * dmix.row(i);
                adj.dv_norm.row(i) += st.beta(i) * dmix.row(i);
                if (id_seed) {
                    double dbeta = dmix.row(i).dot(st.v_norm.row(i) - st.t_norm.row(i));
                    double s = st.beta(i) * (1.0 - st.beta(i)) * dbeta;
                    if (s != 0.0) {
                        grads->w_beta += s * params.I.row(i).transpose();
                        grads->I.row(i) += s * params.w_beta.transpose();
                    }
                }
            }

            // row normalization backward, then the linear projections
            Mat dT_proj = Mat::Zero(N, d), dV_proj = Mat::Zero(N, d);
            for (int i = 0; i < N; ++i) {
                if (ctx.t_proj_norm(i) >= kNormGuard) {
                    double dot = st.t_norm.row(i).dot(adj.dt_norm.row(i));
                    dT_proj.row(i) =
                        (adj.dt_norm.row(i) - dot * st.t_norm.row(i)) / ctx.t_proj_norm(i);
                }
                if (ctx.v_proj_norm(i) >= kNormGuard) {
                    double dot = st.v_norm.row(i).dot(adj.dv_norm.row(i));
                    dV_proj.row(i) =
                        (adj.dv_norm.row(i) - dot * st.v_norm.row(i)) / ctx.v_proj_norm(i);
                }
            }
            grads->W_t += in.F_t->values.transpose() * dT_proj;
            grads->W_v += in.F_v->values.transpose() * dV_proj;
        }
    }

    if (state_out) *state_out = std::move(st);
    return lb;
}

}  // namespace musicrec
