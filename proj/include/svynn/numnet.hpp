#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svynn/dataset.hpp"
#include "svynn/errors.hpp"

namespace svynn {

/// One dense layer: out x in weight matrix (row-major) plus a bias vector.
struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;
    std::vector<double> b;
};

/// Parameters of an L-layer ReLU feed-forward network. ReLU is applied after
/// every layer except the last; the last layer emits identity pre-activations
/// (logits). Callers apply softmax where probabilities are needed.
///
/// Flat parameter order (used by gradients and the optimizer): for each layer
/// in order, the weight matrix row-major, then the bias vector.
struct NetworkParams {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t param_count() const;
    bool all_finite() const;

    std::vector<double> to_flat() const;
    void from_flat(std::span<const double> flat);

    void validate() const;
};

enum class LossKind { weighted_cross_entropy, pinball, weighted_mse };

struct TrainConfig {
    std::vector<std::size_t> hidden_widths{16};
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t epochs = 100;
    std::size_t batch_size = 0;   // 0 means full batch
    std::uint64_t seed = 0;
    LossKind loss_kind = LossKind::weighted_cross_entropy;
    double pinball_alpha = 0.5;   // quantile level, only read for pinball loss
    std::size_t n_classes = 2;    // output classes, only read for cross-entropy
    double weight_decay = 0.0;    // optimizer-side L2; 0 keeps the pure loss

    void validate() const;
};

/// Scalar objective value plus its exact gradient, flattened in
/// NetworkParams parameter order.
struct LossValue {
    double value = 0.0;
    std::vector<double> gradient;
};

struct TrainResult {
    NetworkParams params;
    std::vector<double> loss_trace;  // full-dataset objective after each epoch
};

std::vector<double> relu(std::span<const double> z);

/// Max-shifted softmax; requires K >= 2 finite entries.
std::vector<double> softmax(std::span<const double> z);

/// Max-shifted log-softmax (never evaluates log(0)).
std::vector<double> log_softmax(std::span<const double> z);

/// Pinball (quantile) loss rho_alpha(t) = (1-alpha)*max(-t,0) + alpha*max(t,0).
double pinball_loss(double t, double alpha);

/// Final-layer logits for one input row.
std::vector<double> forward(const NetworkParams& params, std::span<const double> x);

/// Fresh network: hidden weights ~ N(0, 2/fan_in), biases zero, seeded.
NetworkParams init_network(std::size_t input_dim,
                           const std::vector<std::size_t>& hidden_widths,
                           std::size_t output_dim, std::uint64_t seed);

/// -sum_i sum_k 1{Y_i=k} w_i log f_k(X_i); labels must be integers in [0, K).
LossValue weighted_cross_entropy(const NetworkParams& params, const Dataset& ds);

/// sum_i w_i (Y_i - yhat_i)^2 for a scalar-output network.
LossValue weighted_mse(const NetworkParams& params, const Dataset& ds);

/// sum_i w_i rho_alpha(Y_i - yhat_i) for a scalar-output network.
LossValue pinball_objective(const NetworkParams& params, const Dataset& ds, double alpha);

/// Adam on the configured weighted loss. Deterministic given (seed, config,
/// dataset); throws training_diverged (naming the epoch) on non-finite loss
/// or parameters.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// Batch logits for every row, row-major n x K. OpenMP over rows; results are
/// bit-identical to predict_logits_serial for any thread count.
std::vector<double> predict_logits(const NetworkParams& params, const Dataset& ds);

/// Serial reference for predict_logits, kept for parity tests and benchmarks.
std::vector<double> predict_logits_serial(const NetworkParams& params, const Dataset& ds);

/// softmax(logits)[1] per row, for binary classifiers (K >= 2).
std::vector<double> predict_positive_prob(const NetworkParams& params, const Dataset& ds);

} // namespace svynn
