// Optimization loop: uniform negative sampling, Adam with bias correction,
// the cache refresh schedule and validation-driven early stopping.
#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "musicrec/backward.hpp"
#include "musicrec/eval.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

struct OptimizerState {
    Gradients m, v;  // first/second moment accumulators
    long step = 0;

    static OptimizerState create(const ModelParams& p) {
        OptimizerState s;
        s.m = Gradients::zeros_like(p);
        s.v = Gradients::zeros_like(p);
        return s;
    }
};

namespace detail {
inline void adam_update(Mat& param, const Mat& grad, Mat& m, Mat& v, double lr, double b1,
                        double b2, double eps, long step) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v.array().matrix() + (1.0 - b2) * grad.array().square().matrix();
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    param -= (lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).matrix();
}
inline void adam_update(Vec& param, const Vec& grad, Vec& m, Vec& v, double lr, double b1,
                        double b2, double eps, long step) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v.array().matrix() + (1.0 - b2) * grad.array().square().matrix();
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    param -= (lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).matrix();
}
}  // namespace detail

inline void adam_step(ModelParams& params, const Gradients& grads, OptimizerState& opt,
                      const HyperParams& hp) {
    ++opt.step;
    const double lr = hp.learning_rate, b1 = hp.adam_beta1, b2 = hp.adam_beta2,
                 eps = hp.adam_eps;
    detail::adam_update(params.U, grads.U, opt.m.U, opt.v.U, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.I, grads.I, opt.m.I, opt.v.I, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.P, grads.P, opt.m.P, opt.v.P, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.W_a, grads.W_a, opt.m.W_a, opt.v.W_a, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.W_v, grads.W_v, opt.m.W_v, opt.v.W_v, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.W_t, grads.W_t, opt.m.W_t, opt.v.W_t, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.v_a, grads.v_a, opt.m.v_a, opt.v.v_a, lr, b1, b2, eps, opt.step);
    detail::adam_update(params.w_beta, grads.w_beta, opt.m.w_beta, opt.v.w_beta, lr, b1, b2, eps,
                        opt.step);
}

// Positives uniform over train pairs; negatives uniform over the user's
// non-interacted items, resampling on collision.
inline TripleBatch sample_batch(const InteractionMatrix& R,
                                const std::vector<std::pair<int, int>>& train_pairs,
                                int batch_size, Rng& rng) {
    TripleBatch batch;
    batch.triples.reserve(batch_size);
    std::uniform_int_distribution<std::size_t> pair_dist(0, train_pairs.size() - 1);
    std::uniform_int_distribution<int> item_dist(0, R.num_items - 1);
    for (int b = 0; b < batch_size; ++b) {
        auto [u, pos] = train_pairs[pair_dist(rng)];
        if (static_cast<int>(R.items_of_user[u].size()) >= R.num_items)
            throw DataError("user " + std::to_string(u) +
                            " interacted with every item; no negative exists");
        int neg = item_dist(rng);
        while (R.has(u, neg)) neg = item_dist(rng);
        batch.triples.push_back({u, pos, neg});
    }
    return batch;
}

struct EpochRecord {
    int epoch = 0;
    LossBreakdown loss;
    double valid_r20 = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_valid_r20 = 0.0;
    std::string stop_reason;
    std::size_t propagations_per_forward = 0;
};

inline nlohmann::json epoch_record_to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"loss", r.loss.total},
            {"bpr", r.loss.bpr},
            {"us", r.loss.us},
            {"is", r.loss.is},
            {"mm", r.loss.mm},
            {"valid_r20", r.valid_r20},
            {"seconds", r.seconds}};
}

struct FitOptions {
    std::uint64_t seed = 42;
    AblationFlags flags;
    std::ostream* log = nullptr;              // one JSON line per epoch
    std::string checkpoint_pattern;           // e.g. "out/ckpt_epoch{}.bin"; empty = none
    int max_epochs_override = 0;              // 0 = hp.max_epochs
};

struct FitResult {
    ModelParams best_params;
    TrainReport report;
};

// Epoch loop: full cache refresh, per-batch (refresh batch rows inside the
// forward, losses, backward, Adam), validation R@20, early stopping on the
// best validation epoch.
inline FitResult fit(const Split& split, const ModelInputs& inputs, const HyperParams& hp,
                     const FitOptions& opts) {
    hp.validate();
    const int M = split.num_users, N = split.num_items;
    const int d_v = inputs.F_v ? inputs.F_v->dim() : 1;
    const int d_t = inputs.F_t ? inputs.F_t->dim() : 1;

    Rng rng(opts.seed);
    ModelParams params = init_params(M, N, hp.d, hp.h, hp.L_max, d_v, d_t, rng);
    OptimizerState opt = OptimizerState::create(params);
    SequenceCache cache = SequenceCache::create(M, hp.d);

    const InteractionMatrix R = build_interaction_matrix(split.train);
    std::vector<std::pair<int, int>> train_pairs;
    for (int u = 0; u < M; ++u)
        for (int i : R.items_of_user[u]) train_pairs.push_back({u, i});
    if (train_pairs.empty()) throw DataError("empty train split");

    const int batches_per_epoch =
        static_cast<int>((train_pairs.size() + hp.train_batch - 1) / hp.train_batch);
    const int max_epochs = opts.max_epochs_override > 0 ? opts.max_epochs_override : hp.max_epochs;

    FitResult result;
    result.best_params = params;
    int no_improve_streak = 0;

    for (int epoch = 1; epoch <= max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        if (!opts.flags.no_si)
            refresh_cache_all(cache, *inputs.seqs, params, opts.flags.pool_mode(), epoch);

        LossBreakdown epoch_loss;
        PropagationCounter counter;
        bool diverged = false;
        for (int b = 0; b < batches_per_epoch; ++b) {
            TripleBatch batch = sample_batch(R, train_pairs, hp.train_batch, rng);
            Gradients grads = Gradients::zeros_like(params);
            PropagationCounter* cnt = (b == 0) ? &counter : nullptr;
            LossBreakdown lb = compute_loss_and_grads(params, inputs, hp, cache, batch,
                                                      opts.flags, &grads, nullptr, cnt);
            if (!std::isfinite(lb.total)) { diverged = true; break; }
            adam_step(params, grads, opt, hp);
            epoch_loss.bpr += lb.bpr;
            epoch_loss.us += lb.us;
            epoch_loss.is += lb.is;
            epoch_loss.mm += lb.mm;
            epoch_loss.reg += lb.reg;
            epoch_loss.total += lb.total;
        }
        epoch_loss.bpr /= batches_per_epoch;
        epoch_loss.us /= batches_per_epoch;
        epoch_loss.is /= batches_per_epoch;
        epoch_loss.mm /= batches_per_epoch;
        epoch_loss.reg /= batches_per_epoch;
        epoch_loss.total /= batches_per_epoch;
        if (epoch == 1) result.report.propagations_per_forward = counter.spmm_calls;

        if (diverged) {
            result.report.stop_reason = "divergence";
            break;
        }

        // validation under a fully refreshed cache
        if (!opts.flags.no_si)
            refresh_cache_all(cache, *inputs.seqs, params, opts.flags.pool_mode(), epoch);
        ForwardState st = forward(params, inputs, hp, cache, {}, opts.flags);
        EvalReport valid = evaluate(split, st, EvalMode::Valid, hp.alpha_mm, false);

        auto t1 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = epoch_loss;
        rec.valid_r20 = valid.at20.recall;
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.report.epochs.push_back(rec);
        if (opts.log) *opts.log << epoch_record_to_json(rec).dump() << "\n";

        if (valid.at20.recall > result.report.best_valid_r20 || result.report.best_epoch < 0) {
            result.report.best_valid_r20 = valid.at20.recall;
            result.report.best_epoch = epoch;
            result.best_params = params;
            no_improve_streak = 0;
            if (!opts.checkpoint_pattern.empty()) {
                std::string path = opts.checkpoint_pattern;
                auto pos = path.find("{}");
                if (pos != std::string::npos) path.replace(pos, 2, std::to_string(epoch));
                save_checkpoint(path, params);
            }
        } else {
            ++no_improve_streak;
            if (no_improve_streak > hp.patience) {
                result.report.stop_reason = "early_stop";
                break;
            }
        }
    }
    if (result.report.stop_reason.empty()) result.report.stop_reason = "max_epochs";
    return result;
}

}  // namespace musicrec
