// Run configuration: dataset paths, hyperparameters, ablation flags and
// sweep grids. Loadable from a key=value file; CLI flags override.
#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "musicrec/model.hpp"
#include "musicrec/types.hpp"

namespace musicrec {

struct RunConfig {
    std::string interactions_path;
    std::string visual_path;
    std::string text_path;
    std::string data_dir = "prepared";
    std::string out_dir = "out";
    int d_v = 0;
    int d_t = 0;
    bool raw_features_labeled = false;  // raw feature CSV rows carry an item-label column

    HyperParams hp;
    AblationFlags flags;
    std::vector<double> sweep_lambda_u = {0.001, 0.01, 0.1, 1.0};
    std::vector<double> sweep_lambda_i = {0.001, 0.01, 0.1, 1.0};
    std::uint64_t seed = 42;
    int bench_epochs = 3;
    int max_epochs_override = 0;

    void validate() const {
        hp.validate();
        if (flags.count() > 1)
            throw ConfigError("ablation flags do not compose; set at most one");
    }
};

namespace detail {
inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    if (out.empty()) throw ConfigError("empty list value");
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("bad boolean value: " + v);
}
}  // namespace detail

inline void apply_config_kv(RunConfig& c, const std::string& key, const std::string& value) {
    try {
        if (key == "interactions") c.interactions_path = value;
        else if (key == "visual_features") c.visual_path = value;
        else if (key == "text_features") c.text_path = value;
        else if (key == "data_dir") c.data_dir = value;
        else if (key == "out_dir") c.out_dir = value;
        else if (key == "d_v") c.d_v = std::stoi(value);
        else if (key == "d_t") c.d_t = std::stoi(value);
        else if (key == "raw_features_labeled") c.raw_features_labeled = detail::parse_bool(value);
        else if (key == "d") c.hp.d = std::stoi(value);
        else if (key == "h") c.hp.h = std::stoi(value);
        else if (key == "L_ui") c.hp.L_ui = std::stoi(value);
        else if (key == "L_si") c.hp.L_si = std::stoi(value);
        else if (key == "L_mm") c.hp.L_mm = std::stoi(value);
        else if (key == "L_max") c.hp.L_max = std::stoi(value);
        else if (key == "tau_jac") c.hp.tau_jac = std::stod(value);
        else if (key == "tau_cl") c.hp.tau_cl = std::stod(value);
        else if (key == "k_nn") c.hp.k_nn = std::stoi(value);
        else if (key == "alpha_v") c.hp.alpha_v = std::stod(value);
        else if (key == "alpha_seed") c.hp.alpha_seed = std::stod(value);
        else if (key == "alpha_mm") c.hp.alpha_mm = std::stod(value);
        else if (key == "lambda_u") c.hp.lambda_u = std::stod(value);
        else if (key == "lambda_i") c.hp.lambda_i = std::stod(value);
        else if (key == "lambda_sv") c.hp.lambda_sv = std::stod(value);
        else if (key == "lambda_mm") c.hp.lambda_mm = std::stod(value);
        else if (key == "l2_reg") c.hp.l2_reg = std::stod(value);
        else if (key == "learning_rate") c.hp.learning_rate = std::stod(value);
        else if (key == "train_batch") c.hp.train_batch = std::stoi(value);
        else if (key == "eval_batch") c.hp.eval_batch = std::stoi(value);
        else if (key == "max_epochs") c.hp.max_epochs = std::stoi(value);
        else if (key == "patience") c.hp.patience = std::stoi(value);
        else if (key == "no_ui") c.flags.no_ui = detail::parse_bool(value);
        else if (key == "no_si") c.flags.no_si = detail::parse_bool(value);
        else if (key == "no_mm") c.flags.no_mm = detail::parse_bool(value);
        else if (key == "no_mm_id_seed") c.flags.no_mm_id_seed = detail::parse_bool(value);
        else if (key == "sinusoidal_pool") c.flags.sinusoidal_pool = detail::parse_bool(value);
        else if (key == "sweep_lambda_u") c.sweep_lambda_u = detail::parse_double_list(value);
        else if (key == "sweep_lambda_i") c.sweep_lambda_i = detail::parse_double_list(value);
        else if (key == "seed") c.seed = std::stoull(value);
        else if (key == "bench_epochs") c.bench_epochs = std::stoi(value);
        else if (key == "max_epochs_override") c.max_epochs_override = std::stoi(value);
        else throw ConfigError("unknown config key: " + key);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad value for config key '" + key + "': " + value);
    }
}

inline void load_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) apply_config_kv(c, key, value);
    }
}

}  // namespace musicrec
