#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "svynn/errors.hpp"

namespace svynn {

/// Counting metrics at a fixed classification threshold. precision/recall/f1
/// are empty when their denominator is zero.
struct ConfusionMetrics {
    double accuracy = 0.0;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> f1;
    std::array<std::uint64_t, 4> confusion{};  // TN, FP, FN, TP
    std::size_t n = 0;
};

/// One evaluation run: weighted AUC and cross-entropy, count-based confusion
/// metrics at the configured threshold.
struct MetricsReport {
    double auc = 0.0;
    double accuracy = 0.0;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> f1;
    double cross_entropy = 0.0;      // weight-normalized
    double cross_entropy_raw = 0.0;  // plain weighted sum
    std::array<std::uint64_t, 4> confusion{};  // TN, FP, FN, TP
    std::size_t n_eval = 0;

    /// Fixed key names: auc, accuracy, recall, precision, f1, cross_entropy,
    /// confusion:[TN,FP,FN,TP]; undefined metrics serialize as null.
    std::string to_json() const;
};

/// Survey-weighted AUC:
///   sum_{i in D} sum_{j in ND} w_i w_j k(p_i, p_j) / (W_D * W_ND)
/// with k = 1 when p_i > p_j, 0.5 on ties, 0 otherwise. Pair enumeration with
/// per-positive row sums; OpenMP over positives, bit-identical to the serial
/// reference for any thread count.
double weighted_auc(std::span<const double> scores, std::span<const double> labels,
                    std::span<const double> weights);

/// Serial reference for weighted_auc, kept for parity tests and benchmarks.
double weighted_auc_serial(std::span<const double> scores, std::span<const double> labels,
                           std::span<const double> weights);

/// Count-based accuracy/recall/precision/f1 from 0/1 predictions.
ConfusionMetrics confusion_metrics(std::span<const double> pred,
                                   std::span<const double> labels);

/// Survey-weighted variant of the count metrics (weights replace counts).
/// Not one of the reference metrics; exposed behind its own name.
struct WeightedConfusionMetrics {
    double accuracy = 0.0;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> f1;
    std::array<double, 4> confusion{};  // weighted TN, FP, FN, TP
};
WeightedConfusionMetrics weighted_confusion_metrics(std::span<const double> pred,
                                                    std::span<const double> labels,
                                                    std::span<const double> weights);

/// Weighted log loss, normalized by the total weight. Probabilities are
/// clamped to [1e-12, 1-1e-12] before the logs.
double weighted_log_loss(std::span<const double> probs, std::span<const double> labels,
                         std::span<const double> weights);

/// Same, without the weight normalization (the raw weighted sum).
double weighted_log_loss_sum(std::span<const double> probs, std::span<const double> labels,
                             std::span<const double> weights);

/// Full report: weighted AUC + CE, count metrics at `threshold` (predicted
/// positive when p >= threshold).
MetricsReport evaluate_binary(std::span<const double> probs, std::span<const double> labels,
                              std::span<const double> weights, double threshold = 0.5);

} // namespace svynn
