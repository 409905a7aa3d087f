// Operator surface backing the CLI verbs: prepare, build-graphs, train,
// eval, sweep, bench. Each command is rerunnable and deterministic for a
// fixed seed and inputs.
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <sys/resource.h>

#include <nlohmann/json.hpp>

#include "musicrec/config.hpp"
#include "musicrec/pipeline.hpp"
#include "musicrec/train.hpp"

namespace musicrec {

namespace fs = std::filesystem;

// ----- prepared-directory layout -----
// filtered.csv            full 5-core log, numeric ids
// train.csv / valid.csv / test.csv
// users.txt / items.txt   raw labels, one per reindexed id
// stats.json
// visual.feat / text.feat aligned binaries (when features provided)

namespace detail {
inline void write_labels(const std::string& path, const std::vector<std::string>& labels) {
    std::ofstream out(path);
    for (const auto& l : labels) out << l << "\n";
}

inline std::vector<std::string> read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

inline void write_event_csv(const std::string& path, const std::vector<Interaction>& events) {
    std::ofstream out(path);
    out << "user,item,timestamp\n";
    for (const auto& e : events) out << e.user << "," << e.item << "," << e.timestamp << "\n";
}
}  // namespace detail

struct PreparedData {
    Split split;
    InteractionLog filtered;  // full 5-core log (train + held-out events)
    bool has_features = false;
    FeatureMatrix F_v, F_t;
};

inline DatasetStats cmd_prepare(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.interactions_path.empty()) throw ConfigError("prepare: interactions path required");
    fs::create_directories(cfg.data_dir);

    auto raw = read_interaction_csv(cfg.interactions_path);
    InteractionLog log = five_core_filter(reindex(raw));
    Split split = leave_two_out(log);
    DatasetStats stats = compute_stats(log);

    detail::write_event_csv(cfg.data_dir + "/filtered.csv", log.interactions);
    detail::write_event_csv(cfg.data_dir + "/train.csv", split.train.interactions);
    {
        std::ofstream v(cfg.data_dir + "/valid.csv"), t(cfg.data_dir + "/test.csv");
        v << "user,item\n";
        t << "user,item\n";
        for (int u = 0; u < split.num_users; ++u) {
            v << u << "," << split.valid_item[u] << "\n";
            t << u << "," << split.test_item[u] << "\n";
        }
    }
    detail::write_labels(cfg.data_dir + "/users.txt", log.user_labels);
    detail::write_labels(cfg.data_dir + "/items.txt", log.item_labels);

    {
        SequenceSet seqs = build_sequences(split, cfg.hp.L_max);
        std::ofstream s(cfg.data_dir + "/sequences.txt");
        for (std::size_t u = 0; u < seqs.items.size(); ++u) {
            s << u << ":";
            for (int i : seqs.items[u]) s << " " << i;
            s << "\n";
        }
    }

    nlohmann::json js = {{"users", stats.users},
                         {"items", stats.items},
                         {"interactions", stats.interactions},
                         {"sparsity_percent", stats.sparsity_percent}};
    std::ofstream(cfg.data_dir + "/stats.json") << js.dump(2) << "\n";

    if (!cfg.visual_path.empty()) {
        if (cfg.d_v <= 0 || cfg.d_t <= 0)
            throw ConfigError("prepare: d_v and d_t required when features are provided");
        FeatureMatrix fv, ft;
        if (cfg.raw_features_labeled) {
            fv = align_features(cfg.visual_path, log.item_labels, cfg.d_v);
            ft = align_features(cfg.text_path, log.item_labels, cfg.d_t);
        } else {
            fv = load_features(cfg.visual_path, log.num_items, cfg.d_v);
            ft = load_features(cfg.text_path, log.num_items, cfg.d_t);
        }
        save_features_binary(cfg.data_dir + "/visual.feat", fv.values);
        save_features_binary(cfg.data_dir + "/text.feat", ft.values);
    }
    return stats;
}

inline PreparedData load_prepared(const RunConfig& cfg) {
    PreparedData p;
    auto user_labels = detail::read_labels(cfg.data_dir + "/users.txt");
    auto item_labels = detail::read_labels(cfg.data_dir + "/items.txt");

    // filtered.csv already carries the dense numeric ids matching the label
    // files; parse it directly instead of re-running reindex.
    auto raw = read_interaction_csv(cfg.data_dir + "/filtered.csv");
    p.filtered.num_users = static_cast<int>(user_labels.size());
    p.filtered.num_items = static_cast<int>(item_labels.size());
    p.filtered.user_labels = user_labels;
    p.filtered.item_labels = item_labels;
    p.filtered.interactions.reserve(raw.size());
    for (const auto& r : raw) {
        int u = std::stoi(r.user), i = std::stoi(r.item);
        if (u < 0 || u >= p.filtered.num_users || i < 0 || i >= p.filtered.num_items)
            throw DataError("prepared data inconsistent with label files in " + cfg.data_dir);
        p.filtered.interactions.push_back({u, i, r.timestamp});
    }
    p.split = leave_two_out(p.filtered);

    if (fs::exists(cfg.data_dir + "/visual.feat")) {
        std::ifstream probe(cfg.data_dir + "/visual.feat", std::ios::binary);
        char magic[4];
        std::uint32_t rows, dim;
        probe.read(magic, 4);
        probe.read(reinterpret_cast<char*>(&rows), 4);
        probe.read(reinterpret_cast<char*>(&dim), 4);
        p.F_v = load_features_binary(cfg.data_dir + "/visual.feat", rows, dim);
        std::ifstream probe_t(cfg.data_dir + "/text.feat", std::ios::binary);
        probe_t.read(magic, 4);
        probe_t.read(reinterpret_cast<char*>(&rows), 4);
        probe_t.read(reinterpret_cast<char*>(&dim), 4);
        p.F_t = load_features_binary(cfg.data_dir + "/text.feat", rows, dim);
        p.has_features = true;
    }
    return p;
}

inline BuiltInputs build_or_load_inputs(const RunConfig& cfg, const PreparedData& p) {
    bool with_mm = !cfg.flags.no_mm;
    if (with_mm && !p.has_features)
        throw DataError("multimodal branch requires features; prepare with feature paths "
                        "or pass no_mm=1");
    BuiltInputs b;
    std::string mm_cache = cfg.data_dir + "/mm.grph";
    if (with_mm && fs::exists(mm_cache)) {
        const InteractionMatrix R = build_interaction_matrix(p.split.train);
        b.g_ui = build_ui_graph(R);
        b.seqs = build_sequences(p.split, cfg.hp.L_max);
        b.g_si = build_si_graph(b.seqs, cfg.hp.tau_jac);
        b.g_mm = load_graph(mm_cache, GraphKind::MM);
        b.F_v = p.F_v;
        b.F_t = p.F_t;
        b.has_mm = true;
        return b;
    }
    return build_inputs(p.split, cfg.hp, p.F_v, p.F_t, with_mm);
}

inline void cmd_build_graphs(const RunConfig& cfg) {
    cfg.validate();
    PreparedData p = load_prepared(cfg);
    BuiltInputs b = build_inputs(p.split, cfg.hp, p.F_v, p.F_t, p.has_features);
    save_graph(cfg.data_dir + "/ui.grph", b.g_ui);
    save_graph(cfg.data_dir + "/si.grph", b.g_si);
    if (p.has_features) save_graph(cfg.data_dir + "/mm.grph", b.g_mm);
}

inline FitResult cmd_train(const RunConfig& cfg, std::ostream* log = nullptr) {
    cfg.validate();
    PreparedData p = load_prepared(cfg);
    BuiltInputs b = build_or_load_inputs(cfg, p);
    fs::create_directories(cfg.out_dir);

    FitOptions opts;
    opts.seed = cfg.seed;
    opts.flags = cfg.flags;
    opts.log = log;
    opts.max_epochs_override = cfg.max_epochs_override;
    opts.checkpoint_pattern = cfg.out_dir + "/ckpt_epoch{}.bin";

    std::ofstream jsonl(cfg.out_dir + "/train_log.jsonl");
    if (!log) opts.log = &jsonl;

    FitResult res = fit(p.split, b.view(), cfg.hp, opts);
    save_checkpoint(cfg.out_dir + "/best.bin", res.best_params);

    nlohmann::json js = {{"best_epoch", res.report.best_epoch},
                         {"best_valid_r20", res.report.best_valid_r20},
                         {"stop_reason", res.report.stop_reason},
                         {"epochs_run", res.report.epochs.size()},
                         {"propagations_per_forward", res.report.propagations_per_forward}};
    std::ofstream(cfg.out_dir + "/train_report.json") << js.dump(2) << "\n";
    return res;
}

struct EvalOutputs {
    EvalReport valid;
    EvalReport test;
};

inline EvalOutputs cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                            std::ostream* out = nullptr) {
    cfg.validate();
    PreparedData p = load_prepared(cfg);
    BuiltInputs b = build_or_load_inputs(cfg, p);
    ModelParams params = load_checkpoint(checkpoint_path);

    SequenceCache cache = SequenceCache::create(p.split.num_users, cfg.hp.d);
    if (!cfg.flags.no_si)
        refresh_cache_all(cache, b.seqs, params, cfg.flags.pool_mode());
    ForwardState st = forward(params, b.view(), cfg.hp, cache, {}, cfg.flags);

    EvalOutputs res;
    res.valid = evaluate(p.split, st, EvalMode::Valid, cfg.hp.alpha_mm);
    res.test = evaluate(p.split, st, EvalMode::Test, cfg.hp.alpha_mm);

    fs::create_directories(cfg.out_dir);
    std::ofstream(cfg.out_dir + "/eval_valid.json")
        << eval_report_to_json(res.valid).dump(2) << "\n";
    std::ofstream(cfg.out_dir + "/eval_test.json")
        << eval_report_to_json(res.test).dump(2) << "\n";
    if (out) {
        *out << eval_report_to_table(res.valid);
        *out << eval_report_to_table(res.test);
    }
    return res;
}

struct SweepRow {
    double lambda_u = 0.0;
    double lambda_i = 0.0;
    double valid_r20 = 0.0;
    double test_r20 = 0.0;
    double test_n20 = 0.0;
};

inline std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, std::ostream* out = nullptr) {
    cfg.validate();
    if (cfg.sweep_lambda_u.empty() || cfg.sweep_lambda_i.empty())
        throw ConfigError("sweep: grids must be nonempty");
    PreparedData p = load_prepared(cfg);
    std::vector<SweepRow> rows;
    for (double lu : cfg.sweep_lambda_u)
        for (double li : cfg.sweep_lambda_i) {
            RunConfig point = cfg;
            point.hp.lambda_u = lu;
            point.hp.lambda_i = li;
            BuiltInputs b = build_or_load_inputs(point, p);
            FitOptions opts;
            opts.seed = point.seed;
            opts.flags = point.flags;
            opts.max_epochs_override = point.max_epochs_override;
            FitResult res = fit(p.split, b.view(), point.hp, opts);

            SequenceCache cache = SequenceCache::create(p.split.num_users, point.hp.d);
            if (!point.flags.no_si)
                refresh_cache_all(cache, b.seqs, res.best_params, point.flags.pool_mode());
            ForwardState st = forward(res.best_params, b.view(), point.hp, cache, {}, point.flags);
            EvalReport test = evaluate(p.split, st, EvalMode::Test, point.hp.alpha_mm, false);
            rows.push_back({lu, li, res.report.best_valid_r20, test.at20.recall, test.at20.ndcg});
            if (out)
                *out << "lambda_u=" << lu << " lambda_i=" << li
                     << " valid_r20=" << rows.back().valid_r20
                     << " test_r20=" << rows.back().test_r20 << "\n";
        }

    fs::create_directories(cfg.out_dir);
    nlohmann::json js = nlohmann::json::array();
    for (const auto& r : rows)
        js.push_back({{"lambda_u", r.lambda_u},
                      {"lambda_i", r.lambda_i},
                      {"valid_r20", r.valid_r20},
                      {"test_r20", r.test_r20},
                      {"test_n20", r.test_n20}});
    std::ofstream(cfg.out_dir + "/sweep.json") << js.dump(2) << "\n";
    return rows;
}

struct BenchReport {
    std::vector<double> epoch_seconds;
    std::size_t propagations_per_forward = 0;
    long peak_rss_kb = 0;
};

inline BenchReport cmd_bench(const RunConfig& cfg, std::ostream* out = nullptr) {
    cfg.validate();
    PreparedData p = load_prepared(cfg);
    BuiltInputs b = build_or_load_inputs(cfg, p);

    RunConfig point = cfg;
    point.hp.patience = point.hp.max_epochs;  // no early stop during timing
    FitOptions opts;
    opts.seed = point.seed;
    opts.flags = point.flags;
    opts.max_epochs_override = cfg.bench_epochs;
    FitResult res = fit(p.split, b.view(), point.hp, opts);

    BenchReport rep;
    for (const auto& e : res.report.epochs) rep.epoch_seconds.push_back(e.seconds);
    rep.propagations_per_forward = res.report.propagations_per_forward;
    struct rusage ru;
    getrusage(RUSAGE_SELF, &ru);
    rep.peak_rss_kb = ru.ru_maxrss;

    fs::create_directories(cfg.out_dir);
    nlohmann::json js = {{"epoch_seconds", rep.epoch_seconds},
                         {"propagations_per_forward", rep.propagations_per_forward},
                         {"peak_rss_kb", rep.peak_rss_kb}};
    std::ofstream(cfg.out_dir + "/bench.json") << js.dump(2) << "\n";
    if (out) *out << js.dump(2) << "\n";
    return rep;
}

}  // namespace musicrec
