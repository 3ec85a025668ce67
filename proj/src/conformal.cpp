#include "svynn/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "json.hpp"

namespace svynn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Dataset rows_subset(const WeightedSample& sample, std::span<const std::size_t> idx) {
    for (std::size_t i : idx)
        if (i >= sample.rows.n_rows())
            throw invalid_input("index set refers to a row outside the sample");
    return sample.rows.subset(idx);
}

void check_disjoint(std::span<const std::size_t> a, std::span<const std::size_t> b,
                    const char* what) {
    std::set<std::size_t> sa(a.begin(), a.end());
    for (std::size_t i : b)
        if (sa.count(i)) throw invalid_input(std::string("index sets must be disjoint: ") + what);
}

/// Common core of the split and covariate-shift interval rules: quantile of
/// the residual distribution (plus the infinity atom) at level 1 - alpha.
PredictionSet interval_from_residuals(double y_hat, std::span<const double> residuals,
                                      std::span<const double> point_weights, double test_weight,
                                      double alpha) {
    const std::vector<double> masses = covariate_shift_weights(point_weights, test_weight);
    const WeightedEmpirical dist = WeightedEmpirical::make(
        residuals, {masses.data(), masses.size() - 1}, masses.back());
    const double q = weighted_quantile(dist, 1.0 - alpha);

    PredictionSet out;
    out.alpha = alpha;
    out.is_interval = true;
    out.lo = y_hat - q;  // q = +inf yields (-inf, +inf)
    out.hi = y_hat + q;
    return out;
}

double scalar_prediction(const NetworkParams& model, std::span<const double> x) {
    const std::vector<double> z = forward(model, x);
    if (z.size() != 1)
        throw invalid_input("conformal regression requires a scalar-output network");
    return z[0];
}

/// Per-record score s_i = [w_i] * log f_{Y_i}(X_i) under the chosen weighting.
std::vector<double> record_scores(const NetworkParams& score_net, const Dataset& rows,
                                  ScoreWeighting weighting) {
    if (!rows.has_labels()) throw invalid_input("record scores require labeled rows");
    const std::size_t K = score_net.output_dim();
    std::vector<double> scores(rows.n_rows());
    const std::vector<double> logits = predict_logits(score_net, rows);
    for (std::size_t i = 0; i < rows.n_rows(); ++i) {
        std::span<const double> z(logits.data() + i * K, K);
        const std::vector<double> logp = log_softmax(z);
        const double y = rows.labels[i];
        if (y != std::floor(y) || y < 0.0 || y >= static_cast<double>(K))
            throw invalid_input("record scores: labels must be integers in [0, K)");
        const double w = weighting == ScoreWeighting::literal ? rows.weights[i] : 1.0;
        scores[i] = w * logp[static_cast<std::size_t>(y)];
    }
    return scores;
}

nlohmann::json net_to_json(const NetworkParams& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t o = 0; o < l.out; ++o)
            rows.push_back(std::vector<double>(l.w.begin() + o * l.in,
                                               l.w.begin() + (o + 1) * l.in));
        layers.push_back({{"w", rows}, {"b", l.b}});
    }
    return {{"layers", layers}};
}

NetworkParams net_from_json(const nlohmann::json& j) {
    NetworkParams net;
    for (const auto& jl : j.at("layers")) {
        Layer l;
        const auto& rows = jl.at("w");
        l.out = rows.size();
        if (l.out == 0) throw invalid_input("network JSON: empty weight matrix");
        l.in = rows.front().size();
        for (const auto& row : rows) {
            if (row.size() != l.in) throw invalid_input("network JSON: ragged weight matrix");
            for (const auto& v : row) l.w.push_back(v.get<double>());
        }
        l.b = jl.at("b").get<std::vector<double>>();
        net.layers.push_back(std::move(l));
    }
    net.validate();
    return net;
}

} // namespace

bool PredictionSet::covers_label(int y) const {
    return std::find(labels.begin(), labels.end(), y) != labels.end();
}

double residual_score(const NetworkParams& model, std::span<const double> x, double y) {
    return std::abs(y - scalar_prediction(model, x));
}

PredictionSet split_conformal_interval(const NetworkParams& model,
                                       const WeightedSample& calibration,
                                       std::span<const double> x_new, double alpha,
                                       double test_weight) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must lie in (0,1)");
    const std::size_t n = calibration.rows.n_rows();
    if (n == 0) throw invalid_input("split_conformal_interval: empty calibration set");
    if (!calibration.rows.has_labels())
        throw invalid_input("split_conformal_interval: calibration rows need labels");

    std::vector<double> residuals(n);
    for (std::size_t i = 0; i < n; ++i)
        residuals[i] = residual_score(model, calibration.rows.row(i), calibration.rows.labels[i]);

    double w_test = test_weight;
    if (!(w_test > 0.0)) {
        double s = 0.0;
        for (double w : calibration.rows.weights) s += w;
        w_test = s / static_cast<double>(n);
    }
    return interval_from_residuals(scalar_prediction(model, x_new), residuals,
                                   calibration.rows.weights, w_test, alpha);
}

PredictionSet weighted_conformal_interval(const NetworkParams& model,
                                          const WeightedSample& calibration,
                                          std::span<const double> x_new, const WeightFn& w_fn,
                                          double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must lie in (0,1)");
    const std::size_t n = calibration.rows.n_rows();
    if (n == 0) throw invalid_input("weighted_conformal_interval: empty calibration set");
    if (!calibration.rows.has_labels())
        throw invalid_input("weighted_conformal_interval: calibration rows need labels");

    std::vector<double> residuals(n), ratio(n);
    for (std::size_t i = 0; i < n; ++i) {
        residuals[i] =
            residual_score(model, calibration.rows.row(i), calibration.rows.labels[i]);
        ratio[i] = w_fn(calibration.rows.row(i));
        if (!(ratio[i] > 0.0))
            throw invalid_input("weighted_conformal_interval: weights must be positive");
    }
    const double w_test = w_fn(x_new);
    if (!(w_test > 0.0))
        throw invalid_input("weighted_conformal_interval: test weight must be positive");
    return interval_from_residuals(scalar_prediction(model, x_new), residuals, ratio, w_test,
                                   alpha);
}

CqcModel cqc_fit(const WeightedSample& sample, std::span<const std::size_t> idx_score,
                 std::span<const std::size_t> idx_quantile, double alpha,
                 const TrainConfig& score_cfg, const TrainConfig& quantile_cfg,
                 ScoreWeighting weighting) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must lie in (0,1)");
    if (idx_score.empty() || idx_quantile.empty())
        throw invalid_input("cqc_fit: both index sets must be nonempty");
    check_disjoint(idx_score, idx_quantile, "score vs quantile");

    CqcModel model;
    model.alpha = alpha;
    model.weighting = weighting;
    model.n_classes = score_cfg.n_classes;

    // Step 1: classifier on I1, then per-record scores on I2.
    TrainConfig cfg1 = score_cfg;
    cfg1.loss_kind = LossKind::weighted_cross_entropy;
    model.score_net = train(rows_subset(sample, idx_score), cfg1).params;

    Dataset quantile_rows = rows_subset(sample, idx_quantile);
    const std::vector<double> scores = record_scores(model.score_net, quantile_rows, weighting);

    // Step 2: quantile regression of the scores at level alpha.
    Dataset quantile_train = quantile_rows;
    quantile_train.labels = scores;
    TrainConfig cfg2 = quantile_cfg;
    cfg2.loss_kind = LossKind::pinball;
    cfg2.pinball_alpha = alpha;
    model.quantile_net = train(quantile_train, cfg2).params;

    model.calibrated = false;
    model.threshold = 0.0;
    return model;
}

CqcModel cqc_calibrate(CqcModel model, const WeightedSample& sample,
                       std::span<const std::size_t> idx_calibrate) {
    if (idx_calibrate.empty()) throw invalid_input("cqc_calibrate: empty calibration set");
    const Dataset rows = rows_subset(sample, idx_calibrate);
    const std::vector<double> scores = record_scores(model.score_net, rows, model.weighting);

    const std::size_t n3 = rows.n_rows();
    std::vector<double> nonconformity(n3);
    for (std::size_t i = 0; i < n3; ++i) {
        const double q_hat = scalar_prediction(model.quantile_net, rows.row(i));
        nonconformity[i] = q_hat - scores[i];
    }

    const double level =
        (1.0 + 1.0 / static_cast<double>(n3)) * (1.0 - model.alpha);
    if (level >= 1.0) {
        // Finite-sample correction exceeds the total mass: degenerate
        // threshold, every prediction set is the full label set.
        model.threshold = kInf;
    } else {
        const WeightedEmpirical dist =
            WeightedEmpirical::make(nonconformity, rows.weights, 0.0);
        model.threshold = weighted_quantile(dist, level);
    }
    model.calibrated = true;
    return model;
}

std::vector<double> cqc_scores(const CqcModel& model, std::span<const double> x) {
    return log_softmax(forward(model.score_net, x));
}

PredictionSet cqc_predict_set(const CqcModel& model, std::span<const double> x) {
    if (!model.calibrated)
        throw invalid_state("cqc_predict_set: model has not been calibrated");

    PredictionSet out;
    out.alpha = model.alpha;
    out.is_interval = false;

    const std::size_t K = model.score_net.output_dim();
    if (std::isinf(model.threshold)) {
        for (std::size_t k = 0; k < K; ++k) out.labels.push_back(static_cast<int>(k));
        return out;
    }

    const std::vector<double> logp = cqc_scores(model, x);
    const double q_hat = scalar_prediction(model.quantile_net, x);
    const double cutoff = q_hat - model.threshold;
    for (std::size_t k = 0; k < K; ++k)
        if (logp[k] >= cutoff) out.labels.push_back(static_cast<int>(k));
    return out;
}

double coverage_gap_bound(std::span<const double> weights,
                          std::span<const double> tv_distances) {
    if (weights.size() != tv_distances.size())
        throw invalid_input("coverage_gap_bound: input length mismatch");
    double num = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0 && weights[i] <= 1.0))
            throw invalid_input("coverage_gap_bound: weights must lie in [0,1]");
        if (!(tv_distances[i] >= 0.0 && tv_distances[i] <= 1.0))
            throw invalid_input("coverage_gap_bound: distances must lie in [0,1]");
        num += weights[i] * tv_distances[i];
        wsum += weights[i];
    }
    return num / (1.0 + wsum);
}

CoverageResult evaluate_coverage(std::span<const PredictionSet> sets,
                                 std::span<const double> truths,
                                 std::span<const double> weights, bool use_weights) {
    if (sets.size() != truths.size() || sets.size() != weights.size())
        throw invalid_input("evaluate_coverage: input length mismatch");
    if (sets.empty()) throw invalid_input("evaluate_coverage: empty input");

    double covered = 0.0, size_sum = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        const double w = use_weights ? weights[i] : 1.0;
        if (!(w > 0.0)) throw invalid_input("evaluate_coverage: weights must be positive");
        const bool hit = sets[i].is_interval
                             ? sets[i].covers_value(truths[i])
                             : sets[i].covers_label(static_cast<int>(truths[i]));
        covered += hit ? w : 0.0;
        size_sum += w * (sets[i].is_interval ? sets[i].hi - sets[i].lo
                                             : static_cast<double>(sets[i].labels.size()));
        wsum += w;
    }

    CoverageResult res;
    res.empirical_coverage = covered / wsum;
    res.mean_set_size = size_sum / wsum;
    res.n_eval = sets.size();
    res.alpha = sets.front().alpha;
    return res;
}

std::string CqcModel::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["kind"] = "cqc";
    j["alpha"] = alpha;
    j["n_classes"] = n_classes;
    j["weighting"] = weighting == ScoreWeighting::literal ? "literal" : "plain";
    j["calibrated"] = calibrated;
    if (std::isinf(threshold))
        j["threshold"] = "inf";
    else
        j["threshold"] = threshold;
    j["score_net"] = net_to_json(score_net);
    j["quantile_net"] = net_to_json(quantile_net);
    return j.dump(2);
}

CqcModel CqcModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw invalid_input("CqcModel: unsupported format version");
    CqcModel m;
    m.alpha = j.at("alpha").get<double>();
    m.n_classes = j.at("n_classes").get<std::size_t>();
    const std::string wt = j.at("weighting").get<std::string>();
    if (wt == "literal")
        m.weighting = ScoreWeighting::literal;
    else if (wt == "plain")
        m.weighting = ScoreWeighting::plain;
    else
        throw invalid_input("CqcModel: unknown weighting flag");
    m.calibrated = j.at("calibrated").get<bool>();
    if (j.at("threshold").is_string())
        m.threshold = kInf;
    else
        m.threshold = j.at("threshold").get<double>();
    m.score_net = net_from_json(j.at("score_net"));
    m.quantile_net = net_from_json(j.at("quantile_net"));
    return m;
}

} // namespace svynn
