// Shared aliases, error types and hyperparameter configuration.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace musicrec {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Rng = std::mt19937_64;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

// All knobs of the model and the training loop. Defaults follow the
// reference configuration; validate() rejects out-of-range values.
struct HyperParams {
    int d = 64;             // embedding dim
    int h = 64;             // attention hidden dim (unstated upstream; defaults to d)
    int L_ui = 3;
    int L_si = 2;
    int L_mm = 1;
    int L_max = 50;         // max sequence length
    double tau_jac = 0.5;   // Jaccard threshold for SS edges
    double tau_cl = 0.2;    // contrastive temperature
    int k_nn = 10;          // kNN neighbors per modality graph
    double alpha_v = 0.1;   // visual weight in MM graph fusion
    double alpha_seed = 0.01;
    double alpha_mm = 0.1;  // MM branch weight in item fusion
    double lambda_u = 0.1;
    double lambda_i = 0.01;
    double lambda_sv = 0.0; // must stay 0; the corresponding loss has no definition
    double lambda_mm = 0.1;
    double l2_reg = 0.0;    // optional weight penalty on U, I
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int train_batch = 512;
    int eval_batch = 4096;
    int max_epochs = 1000;
    int patience = 20;
    bool full_set_us_contrast = false;  // denominator over all users instead of the batch

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("hyperparams: " + m); };
        if (d <= 0) fail("d must be positive");
        if (h <= 0) fail("h must be positive");
        if (L_ui < 0 || L_si < 0 || L_mm < 0) fail("propagation depths must be >= 0");
        if (L_max <= 0) fail("L_max must be positive");
        if (tau_jac < 0.0 || tau_jac > 1.0) fail("tau_jac must lie in [0,1]");
        if (tau_cl <= 0.0) fail("tau_cl must be > 0");
        if (k_nn < 1) fail("k_nn must be >= 1");
        if (alpha_v < 0.0 || alpha_v > 1.0) fail("alpha_v must lie in [0,1]");
        if (alpha_seed < 0.0) fail("alpha_seed must be >= 0");
        if (alpha_mm < 0.0 || alpha_mm > 1.0) fail("alpha_mm must lie in [0,1]");
        if (lambda_u < 0.0 || lambda_i < 0.0 || lambda_sv < 0.0 || lambda_mm < 0.0)
            fail("loss weights must be >= 0");
        if (lambda_sv != 0.0)
            fail("lambda_sv must be 0: the SV loss term has no published definition");
        if (l2_reg < 0.0) fail("l2_reg must be >= 0");
        if (learning_rate <= 0.0) fail("learning_rate must be > 0");
        if (train_batch <= 0 || eval_batch <= 0) fail("batch sizes must be positive");
        if (max_epochs <= 0) fail("max_epochs must be positive");
        if (patience < 0) fail("patience must be >= 0");
    }
};

}  // namespace musicrec
