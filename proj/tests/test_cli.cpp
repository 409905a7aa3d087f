#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "musicrec/commands.hpp"
#include "musicrec/synthetic.hpp"

using namespace musicrec;
namespace fsys = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes a synthetic corpus to disk the way an operator would hand it to
// `prepare`: an interaction CSV plus labeled feature CSVs.
struct CliFixture {
    fsys::path root;
    RunConfig cfg;

    explicit CliFixture(const std::string& name, unsigned seed) {
        root = fsys::path("cli_fixture_" + name);
        fsys::remove_all(root);
        fsys::create_directories(root);

        SyntheticSpec spec;
        spec.num_users = 40;
        spec.num_items = 25;
        spec.num_clusters = 3;
        spec.min_history = 6;
        spec.max_history = 9;
        spec.d_v = 6;
        spec.d_t = 4;
        Rng rng(seed);
        auto data = generate_synthetic(spec, rng);

        std::ofstream csv(root / "interactions.csv");
        csv << "user,item,timestamp\n";
        for (const auto& r : data.raw)
            csv << r.user << "," << r.item << "," << r.timestamp << "\n";
        csv.close();

        std::ofstream vf(root / "visual.csv"), tf(root / "text.csv");
        for (int i = 0; i < spec.num_items; ++i) {
            vf << "i" << i;
            for (int c = 0; c < spec.d_v; ++c) vf << "," << data.visual(i, c);
            vf << "\n";
            tf << "i" << i;
            for (int c = 0; c < spec.d_t; ++c) tf << "," << data.text(i, c);
            tf << "\n";
        }

        cfg.interactions_path = (root / "interactions.csv").string();
        cfg.visual_path = (root / "visual.csv").string();
        cfg.text_path = (root / "text.csv").string();
        cfg.raw_features_labeled = true;
        cfg.d_v = spec.d_v;
        cfg.d_t = spec.d_t;
        cfg.data_dir = (root / "prepared").string();
        cfg.out_dir = (root / "out").string();
        cfg.hp.d = 8;
        cfg.hp.h = 8;
        cfg.hp.L_max = 10;
        cfg.hp.k_nn = 3;
        cfg.hp.tau_jac = 0.2;
        cfg.hp.train_batch = 64;
    }

    ~CliFixture() { fsys::remove_all(root); }
};

}  // namespace

TEST_CASE("config file parsing with comments and overrides") {
    fsys::path p = "test_cli_config.cfg";
    std::ofstream(p) << "# a comment\n"
                     << "lambda_u = 0.5  # inline comment\n"
                     << "d = 16\n"
                     << "no_mm = true\n"
                     << "sweep_lambda_u = 0.1,0.2\n"
                     << "seed = 99\n";
    RunConfig c;
    load_config_file(c, p.string());
    REQUIRE(c.hp.lambda_u == 0.5);
    REQUIRE(c.hp.d == 16);
    REQUIRE(c.flags.no_mm);
    REQUIRE(c.sweep_lambda_u == std::vector<double>{0.1, 0.2});
    REQUIRE(c.seed == 99);

    // a later key=value override wins
    apply_config_kv(c, "lambda_u", "0.7");
    REQUIRE(c.hp.lambda_u == 0.7);
    fsys::remove(p);
}

TEST_CASE("config rejects unknown keys and bad values") {
    RunConfig c;
    REQUIRE_THROWS_AS(apply_config_kv(c, "no_such_key", "1"), ConfigError);
    REQUIRE_THROWS_AS(apply_config_kv(c, "d", "abc"), ConfigError);
    REQUIRE_THROWS_AS(apply_config_kv(c, "no_ui", "maybe"), ConfigError);
    REQUIRE_THROWS_AS(load_config_file(c, "missing_config_file.cfg"), ConfigError);
}

TEST_CASE("ablation flags do not compose") {
    RunConfig c;
    c.flags.no_ui = true;
    REQUIRE_NOTHROW(c.validate());
    c.flags.no_mm = true;
    REQUIRE_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("prepare writes a complete, rerunnable directory") {
    CliFixture fx("prepare", 601);
    auto stats = cmd_prepare(fx.cfg);

    REQUIRE(stats.users > 0);
    REQUIRE(stats.items > 0);
    REQUIRE(stats.interactions >= 5u * static_cast<std::size_t>(stats.users));
    REQUIRE(stats.sparsity_percent > 0.0);

    for (const char* f : {"filtered.csv", "train.csv", "valid.csv", "test.csv", "users.txt",
                          "items.txt", "sequences.txt", "stats.json", "visual.feat",
                          "text.feat"})
        REQUIRE(fsys::exists(fsys::path(fx.cfg.data_dir) / f));

    // stats.json agrees with the label files
    auto js = nlohmann::json::parse(slurp(fx.cfg.data_dir + "/stats.json"));
    REQUIRE(js["users"] == stats.users);
    REQUIRE(js["items"] == stats.items);
    auto users = detail::read_labels(fx.cfg.data_dir + "/users.txt");
    REQUIRE(static_cast<int>(users.size()) == stats.users);

    // a second run reproduces the artifacts byte for byte
    std::string filtered = slurp(fx.cfg.data_dir + "/filtered.csv");
    std::string feats = slurp(fx.cfg.data_dir + "/visual.feat");
    cmd_prepare(fx.cfg);
    REQUIRE(slurp(fx.cfg.data_dir + "/filtered.csv") == filtered);
    REQUIRE(slurp(fx.cfg.data_dir + "/visual.feat") == feats);
}

TEST_CASE("prepare enforces its preconditions") {
    RunConfig cfg;
    REQUIRE_THROWS_AS(cmd_prepare(cfg), ConfigError);  // no interactions path

    CliFixture fx("precond", 603);
    fx.cfg.d_v = 0;  // features given but dims missing
    REQUIRE_THROWS_AS(cmd_prepare(fx.cfg), ConfigError);
}

TEST_CASE("end-to-end prepare, build-graphs, train, eval") {
    CliFixture fx("e2e", 605);
    fx.cfg.max_epochs_override = 3;
    auto stats = cmd_prepare(fx.cfg);
    cmd_build_graphs(fx.cfg);
    for (const char* f : {"ui.grph", "si.grph", "mm.grph"})
        REQUIRE(fsys::exists(fsys::path(fx.cfg.data_dir) / f));

    auto res = cmd_train(fx.cfg);
    REQUIRE(res.report.epochs.size() == 3);
    REQUIRE(res.report.propagations_per_forward == 6);
    REQUIRE(fsys::exists(fx.cfg.out_dir + "/best.bin"));
    REQUIRE(fsys::exists(fx.cfg.out_dir + "/train_log.jsonl"));
    auto report = nlohmann::json::parse(slurp(fx.cfg.out_dir + "/train_report.json"));
    REQUIRE(report["propagations_per_forward"] == 6);
    REQUIRE(report["epochs_run"] == 3);

    std::ostringstream table;
    auto ev = cmd_eval(fx.cfg, fx.cfg.out_dir + "/best.bin", &table);
    REQUIRE(ev.valid.users_evaluated == stats.users);
    REQUIRE(ev.test.users_evaluated == stats.users);
    REQUIRE(table.str().find("R@20") != std::string::npos);
    auto ej = nlohmann::json::parse(slurp(fx.cfg.out_dir + "/eval_test.json"));
    REQUIRE(ej["mode"] == "test");
    REQUIRE(ej["users_evaluated"] == stats.users);

    // training twice with the same seed reproduces the checkpoint exactly
    std::string best = slurp(fx.cfg.out_dir + "/best.bin");
    cmd_train(fx.cfg);
    REQUIRE(slurp(fx.cfg.out_dir + "/best.bin") == best);
}

TEST_CASE("train without features requires the no_mm flag") {
    CliFixture fx("nomm", 607);
    fx.cfg.visual_path.clear();
    fx.cfg.text_path.clear();
    fx.cfg.max_epochs_override = 1;
    cmd_prepare(fx.cfg);
    REQUIRE_THROWS_AS(cmd_train(fx.cfg), DataError);

    fx.cfg.flags.no_mm = true;
    auto res = cmd_train(fx.cfg);
    REQUIRE(res.report.propagations_per_forward == 5);  // 3 UI + 2 SI
}

TEST_CASE("sweep writes one row per grid point") {
    CliFixture fx("sweep", 609);
    fx.cfg.max_epochs_override = 1;
    fx.cfg.sweep_lambda_u = {0.01, 0.1};
    fx.cfg.sweep_lambda_i = {0.01};
    cmd_prepare(fx.cfg);
    auto rows = cmd_sweep(fx.cfg);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].lambda_u == 0.01);
    REQUIRE(rows[1].lambda_u == 0.1);
    auto js = nlohmann::json::parse(slurp(fx.cfg.out_dir + "/sweep.json"));
    REQUIRE(js.size() == 2);
    REQUIRE(js[0].contains("valid_r20"));
    REQUIRE(js[0].contains("test_r20"));
}

TEST_CASE("bench reports timings, propagations and memory") {
    CliFixture fx("bench", 611);
    fx.cfg.bench_epochs = 2;
    cmd_prepare(fx.cfg);
    auto rep = cmd_bench(fx.cfg);
    REQUIRE(rep.epoch_seconds.size() == 2);
    for (double s : rep.epoch_seconds) REQUIRE(s > 0.0);
    REQUIRE(rep.propagations_per_forward == 6);
    REQUIRE(rep.peak_rss_kb > 0);
    REQUIRE(fsys::exists(fx.cfg.out_dir + "/bench.json"));
}
