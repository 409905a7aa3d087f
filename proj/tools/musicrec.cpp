// Command-line front end: prepare | build-graphs | train | eval | sweep | bench.
// Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "musicrec/commands.hpp"

namespace {

struct CliOverrides {
    std::vector<std::string> kv;  // key=value pairs from flags
};

void apply_overrides(musicrec::RunConfig& cfg, const CliOverrides& ov) {
    for (const auto& pair : ov.kv) {
        auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw musicrec::ConfigError("--set expects key=value, got: " + pair);
        musicrec::apply_config_kv(cfg, pair.substr(0, eq), pair.substr(eq + 1));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MuSICRec: three-graph contrastive multimodal recommender"};
    app.require_subcommand(1);

    std::string config_path;
    CliOverrides overrides;
    std::string checkpoint_path;
    musicrec::RunConfig cfg;

    app.add_option("-c,--config", config_path, "key=value config file");
    app.add_option("-s,--set", overrides.kv, "override a config key (key=value), repeatable");

    auto* prepare = app.add_subcommand("prepare", "filter, split and persist the dataset");
    auto* graphs = app.add_subcommand("build-graphs", "build and cache the three graphs");
    auto* train = app.add_subcommand("train", "train and checkpoint the best model");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (valid + test + buckets)");
    eval->add_option("checkpoint", checkpoint_path, "model checkpoint path")->required();
    auto* sweep = app.add_subcommand("sweep", "grid sweep over lambda_u / lambda_i");
    auto* bench = app.add_subcommand("bench", "epoch timing and memory report");
    for (auto* sub : {prepare, graphs, train, eval, sweep, bench})
        sub->fallthrough();  // allow -c / -s after the verb

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) musicrec::load_config_file(cfg, config_path);
        apply_overrides(cfg, overrides);
        cfg.validate();

        if (prepare->parsed()) {
            auto stats = musicrec::cmd_prepare(cfg);
            std::cout << "users=" << stats.users << " items=" << stats.items
                      << " interactions=" << stats.interactions
                      << " sparsity=" << stats.sparsity_percent << "%\n";
        } else if (graphs->parsed()) {
            musicrec::cmd_build_graphs(cfg);
            std::cout << "graphs written to " << cfg.data_dir << "\n";
        } else if (train->parsed()) {
            auto res = musicrec::cmd_train(cfg);
            std::cout << "best_epoch=" << res.report.best_epoch
                      << " best_valid_r20=" << res.report.best_valid_r20
                      << " stop=" << res.report.stop_reason << "\n";
            if (res.report.stop_reason == "divergence") return 4;
        } else if (eval->parsed()) {
            musicrec::cmd_eval(cfg, checkpoint_path, &std::cout);
        } else if (sweep->parsed()) {
            musicrec::cmd_sweep(cfg, &std::cout);
        } else if (bench->parsed()) {
            musicrec::cmd_bench(cfg, &std::cout);
        }
    } catch (const musicrec::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const musicrec::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const musicrec::TrainingDiverged& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
