#include "svynn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace svynn {

namespace {

void check_binary_labels(std::span<const double> labels) {
    for (double y : labels)
        if (y != 0.0 && y != 1.0)
            throw invalid_input("labels must be 0 or 1");
}

void check_weights(std::span<const double> weights) {
    for (double w : weights)
        if (!(w > 0.0)) throw invalid_input("weights must be strictly positive");
}

double pair_indicator(double pi, double pj) {
    if (pi > pj) return 1.0;
    if (pi == pj) return 0.5;
    return 0.0;
}

/// Row term for one positive i: w_i * sum_{j in ND} w_j k(p_i, p_j),
/// negatives visited in index order. Shared by the serial and OpenMP paths so
/// both produce identical arithmetic.
double auc_row_sum(double score_i, double weight_i, std::span<const double> scores,
                   std::span<const double> labels, std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t j = 0; j < scores.size(); ++j)
        if (labels[j] == 0.0) s += weights[j] * pair_indicator(score_i, scores[j]);
    return weight_i * s;
}

struct AucInputs {
    std::vector<std::size_t> positives;
    double weight_pos_total = 0.0;
    double weight_neg_total = 0.0;
};

AucInputs prepare_auc(std::span<const double> scores, std::span<const double> labels,
                      std::span<const double> weights) {
    if (scores.size() != labels.size() || scores.size() != weights.size())
        throw invalid_input("weighted_auc: input length mismatch");
    check_binary_labels(labels);
    check_weights(weights);
    AucInputs in;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1.0) {
            in.positives.push_back(i);
            in.weight_pos_total += weights[i];
        } else {
            in.weight_neg_total += weights[i];
        }
    }
    if (in.positives.empty() || in.positives.size() == labels.size())
        throw undefined_metric("weighted_auc: needs at least one positive and one negative");
    return in;
}

double clamp_prob(double p) {
    constexpr double lo = 1e-12;
    constexpr double hi = 1.0 - 1e-12;
    return p < lo ? lo : (p > hi ? hi : p);
}

nlohmann::json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

} // namespace

double weighted_auc(std::span<const double> scores, std::span<const double> labels,
                    std::span<const double> weights) {
    const AucInputs in = prepare_auc(scores, labels, weights);
    std::vector<double> rows(in.positives.size());
#pragma omp parallel for schedule(static)
    for (long k = 0; k < static_cast<long>(in.positives.size()); ++k) {
        const std::size_t i = in.positives[static_cast<std::size_t>(k)];
        rows[static_cast<std::size_t>(k)] =
            auc_row_sum(scores[i], weights[i], scores, labels, weights);
    }
    double num = 0.0;
    for (double r : rows) num += r;
    return num / (in.weight_pos_total * in.weight_neg_total);
}

double weighted_auc_serial(std::span<const double> scores, std::span<const double> labels,
                           std::span<const double> weights) {
    const AucInputs in = prepare_auc(scores, labels, weights);
    std::vector<double> rows(in.positives.size());
    for (std::size_t k = 0; k < in.positives.size(); ++k) {
        const std::size_t i = in.positives[k];
        rows[k] = auc_row_sum(scores[i], weights[i], scores, labels, weights);
    }
    double num = 0.0;
    for (double r : rows) num += r;
    return num / (in.weight_pos_total * in.weight_neg_total);
}

ConfusionMetrics confusion_metrics(std::span<const double> pred,
                                   std::span<const double> labels) {
    if (pred.size() != labels.size())
        throw invalid_input("confusion_metrics: input length mismatch");
    check_binary_labels(pred);
    check_binary_labels(labels);

    ConfusionMetrics m;
    m.n = pred.size();
    std::uint64_t tn = 0, fp = 0, fn = 0, tp = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (labels[i] == 1.0)
            (pred[i] == 1.0 ? tp : fn)++;
        else
            (pred[i] == 1.0 ? fp : tn)++;
    }
    m.confusion = {tn, fp, fn, tp};
    m.accuracy = m.n == 0 ? 0.0
                          : static_cast<double>(tp + tn) / static_cast<double>(m.n);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (m.recall && m.precision && (*m.recall + *m.precision) > 0.0)
        m.f1 = 2.0 * (*m.precision) * (*m.recall) / (*m.precision + *m.recall);
    return m;
}

WeightedConfusionMetrics weighted_confusion_metrics(std::span<const double> pred,
                                                    std::span<const double> labels,
                                                    std::span<const double> weights) {
    if (pred.size() != labels.size() || pred.size() != weights.size())
        throw invalid_input("weighted_confusion_metrics: input length mismatch");
    check_binary_labels(pred);
    check_binary_labels(labels);
    check_weights(weights);

    WeightedConfusionMetrics m;
    double tn = 0.0, fp = 0.0, fn = 0.0, tp = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double w = weights[i];
        if (labels[i] == 1.0)
            (pred[i] == 1.0 ? tp : fn) += w;
        else
            (pred[i] == 1.0 ? fp : tn) += w;
    }
    m.confusion = {tn, fp, fn, tp};
    const double total = tn + fp + fn + tp;
    m.accuracy = total > 0.0 ? (tp + tn) / total : 0.0;
    if (tp + fn > 0.0) m.recall = tp / (tp + fn);
    if (tp + fp > 0.0) m.precision = tp / (tp + fp);
    if (m.recall && m.precision && (*m.recall + *m.precision) > 0.0)
        m.f1 = 2.0 * (*m.precision) * (*m.recall) / (*m.precision + *m.recall);
    return m;
}

double weighted_log_loss_sum(std::span<const double> probs, std::span<const double> labels,
                             std::span<const double> weights) {
    if (probs.size() != labels.size() || probs.size() != weights.size())
        throw invalid_input("weighted_log_loss: input length mismatch");
    check_binary_labels(labels);
    check_weights(weights);
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = clamp_prob(probs[i]);
        s -= weights[i] * (labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return s;
}

double weighted_log_loss(std::span<const double> probs, std::span<const double> labels,
                         std::span<const double> weights) {
    const double raw = weighted_log_loss_sum(probs, labels, weights);
    double wt = 0.0;
    for (double w : weights) wt += w;
    return raw / wt;
}

MetricsReport evaluate_binary(std::span<const double> probs, std::span<const double> labels,
                              std::span<const double> weights, double threshold) {
    if (probs.size() != labels.size() || probs.size() != weights.size())
        throw invalid_input("evaluate_binary: input length mismatch");

    std::vector<double> pred(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
        pred[i] = probs[i] >= threshold ? 1.0 : 0.0;

    const ConfusionMetrics cm = confusion_metrics(pred, labels);
    MetricsReport rep;
    rep.auc = weighted_auc(probs, labels, weights);
    rep.accuracy = cm.accuracy;
    rep.recall = cm.recall;
    rep.precision = cm.precision;
    rep.f1 = cm.f1;
    rep.cross_entropy = weighted_log_loss(probs, labels, weights);
    rep.cross_entropy_raw = weighted_log_loss_sum(probs, labels, weights);
    rep.confusion = cm.confusion;
    rep.n_eval = probs.size();
    return rep;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["auc"] = auc;
    j["accuracy"] = accuracy;
    j["recall"] = opt_to_json(recall);
    j["precision"] = opt_to_json(precision);
    j["f1"] = opt_to_json(f1);
    j["cross_entropy"] = cross_entropy;
    j["cross_entropy_raw"] = cross_entropy_raw;
    j["confusion"] = confusion;
    j["n_eval"] = n_eval;
    return j.dump(2);
}

} // namespace svynn
