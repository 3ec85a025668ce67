#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svynn/dataset.hpp"
#include "svynn/numnet.hpp"
#include "svynn/survey.hpp"

namespace svynn {

/// How survey weights enter per-record classification scores.
///   literal: s_i = w_i * log f_{Y_i}(X_i)  (the calibration-side formula as
///            printed; new points always score with weight 1)
///   plain:   s_i = log f_{Y_i}(X_i)        (weight dropped on both sides)
enum class ScoreWeighting { literal, plain };

/// Label set (classification) or interval (regression) at miscoverage alpha.
struct PredictionSet {
    double alpha = 0.1;
    bool is_interval = false;
    std::vector<int> labels;  // classification: sorted class indices
    double lo = 0.0;          // regression interval bounds (may be +-inf)
    double hi = 0.0;

    std::size_t set_size() const { return labels.size(); }
    bool covers_label(int y) const;
    bool covers_value(double y) const { return lo <= y && y <= hi; }
};

/// Split survey conformalized quantile classification model: a fitted score
/// network, a fitted score-quantile network and, after calibration, the
/// threshold Q_{1-alpha}.
struct CqcModel {
    NetworkParams score_net;
    NetworkParams quantile_net;
    double threshold = 0.0;  // finite or +infinity
    bool calibrated = false;
    double alpha = 0.1;      // miscoverage level
    std::size_t n_classes = 2;
    ScoreWeighting weighting = ScoreWeighting::literal;

    /// Versioned JSON artifact (network parameters as nested arrays).
    std::string to_json() const;
    static CqcModel from_json(const std::string& text);
};

struct CoverageResult {
    double empirical_coverage = 0.0;
    double mean_set_size = 0.0;
    std::size_t n_eval = 0;
    double alpha = 0.1;
};

/// Absolute-residual nonconformity score |y - m(x)| for a scalar-output net.
double residual_score(const NetworkParams& model, std::span<const double> x, double y);

/// Split conformal interval around the point prediction: the quantile of the
/// calibration residuals (plus a point mass at +infinity) at level 1-alpha.
/// Atom masses follow the covariate-shift rule with the calibration rows'
/// survey weights; `test_weight <= 0` selects the mean calibration weight, so
/// uniform weights reduce to the classical split rule at any scale.
PredictionSet split_conformal_interval(const NetworkParams& model,
                                       const WeightedSample& calibration,
                                       std::span<const double> x_new, double alpha,
                                       double test_weight = 0.0);

/// Covariate-shift weighted conformal interval: w_fn supplies the likelihood
/// ratio dP~_X/dP_X at calibration points and at x_new.
using WeightFn = std::function<double(std::span<const double>)>;
PredictionSet weighted_conformal_interval(const NetworkParams& model,
                                          const WeightedSample& calibration,
                                          std::span<const double> x_new, const WeightFn& w_fn,
                                          double alpha);

/// Steps 1-2 of split survey CQC: train the score network on rows I1 with
/// weighted cross-entropy, compute per-record scores on I2, and fit the
/// score-quantile network on I2 with the weighted pinball loss at level alpha.
CqcModel cqc_fit(const WeightedSample& sample, std::span<const std::size_t> idx_score,
                 std::span<const std::size_t> idx_quantile, double alpha,
                 const TrainConfig& score_cfg, const TrainConfig& quantile_cfg,
                 ScoreWeighting weighting = ScoreWeighting::literal);

/// Step 3 calibration: nonconformity S_i = qhat(X_i) - s_i on rows I3; the
/// threshold is the survey-weighted empirical quantile of {S_i} at level
/// (1 + 1/n3)(1 - alpha), or +infinity when that level reaches 1.
CqcModel cqc_calibrate(CqcModel model, const WeightedSample& sample,
                       std::span<const std::size_t> idx_calibrate);

/// Prediction region {k : s(x,k) >= qhat(x) - Q}; new points score with
/// weight 1, so s(x,k) = log f_k(x). Q = +infinity yields the full label set.
PredictionSet cqc_predict_set(const CqcModel& model, std::span<const double> x);

/// Per-class scores log f_k(x) for one point (exported for diagnostics).
std::vector<double> cqc_scores(const CqcModel& model, std::span<const double> x);

/// Beyond-exchangeability bound: sum_i w_i d_i / (1 + sum_i w_i), all inputs
/// in [0,1].
double coverage_gap_bound(std::span<const double> weights,
                          std::span<const double> tv_distances);

/// Empirical coverage of truths by sets; weighted or plain fraction.
CoverageResult evaluate_coverage(std::span<const PredictionSet> sets,
                                 std::span<const double> truths,
                                 std::span<const double> weights, bool use_weights);

} // namespace svynn
