#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace faultloc::nn {

enum class OutputActivation : int { identity, softmax };
enum class Loss : int { mse, cross_entropy };

/// Single-hidden-layer perceptron: tanh hidden units, identity or softmax
/// output.
struct MlpArchitecture {
    int input = 1;   // P
    int hidden = 10; // Q
    int output = 1;  // T
    OutputActivation out_act = OutputActivation::identity;

    int param_count() const { return hidden * input + hidden + output * hidden + output; }
    void validate() const;
};

struct MlpParams {
    Eigen::MatrixXd w_hidden;  // Q x P
    Eigen::VectorXd b_hidden;  // Q
    Eigen::MatrixXd w_out;     // T x Q
    Eigen::VectorXd b_out;     // T

    Eigen::VectorXd flatten() const;
    static MlpParams unflatten(const MlpArchitecture& arch, const Eigen::VectorXd& theta);
};

/// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; biases zero.
MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed);

Eigen::VectorXd forward(const MlpParams& params, const MlpArchitecture& arch,
                        const Eigen::VectorXd& input);

/// Rows are samples. Output rows hold network outputs (post-activation).
Eigen::MatrixXd forward_batch(const MlpParams& params, const MlpArchitecture& arch,
                              const Eigen::MatrixXd& inputs);

double batch_loss(const MlpParams& params, const MlpArchitecture& arch,
                  const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, Loss loss);

/// Exact backpropagation gradient of the mean batch loss, flattened in
/// parameter order. Deterministic for any worker count.
Eigen::VectorXd batch_gradient(const MlpParams& params, const MlpArchitecture& arch,
                               const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                               Loss loss, bool force_serial = false);

struct TrainOptions {
    int max_epochs = 1000;
    Loss loss = Loss::mse;
    int patience = 20;  // early stop on validation loss

    // Levenberg-Marquardt damping schedule
    double lm_lambda_init = 1e-3;
    double lm_lambda_up = 10.0;
    double lm_lambda_down = 10.0;
    double lm_lambda_max = 1e10;

    // scaled conjugate gradient (Moller)
    double scg_sigma = 1e-5;
    double scg_lambda_init = 1e-6;
    double grad_tol = 1e-6;

    std::uint64_t seed = 1;
};

struct TrainTrace {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    std::string stop_reason;

    std::uint64_t digest() const;
};

struct Dataset {
    Eigen::MatrixXd inputs;   // N x P
    Eigen::MatrixXd targets;  // N x T
    std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

struct TrainResult {
    MlpParams params;  // best validation parameters
    TrainTrace trace;
};

/// Gauss-Newton steps with adaptive damping on the squared-residual
/// objective; single-output regression only.
TrainResult train_lm(const MlpArchitecture& arch, const Dataset& train, const Dataset& val,
                     const TrainOptions& opts);

/// Moller's scaled conjugate gradient for the softmax/cross-entropy
/// classifiers; no line search.
TrainResult train_scg(const MlpArchitecture& arch, const Dataset& train, const Dataset& val,
                      const TrainOptions& opts);

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train_fraction = 0.70;  // remainder split evenly into val/test
    bool classifier = false;       // single-member strata are an error
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Stratified, disjoint, exhaustive, seed-reproducible split. Within each
/// stratum: floor(0.7 n) train, round-half-up(0.15 n) validation, rest test.
SplitIndices split_dataset(const std::vector<std::string>& strata, const SplitSpec& spec,
                           std::uint64_t seed);

}  // namespace faultloc::nn
