#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "svynn/conformal.hpp"
#include "svynn/rng.hpp"

using namespace svynn;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NetworkParams constant_net(double value, std::size_t inputs, std::size_t outputs) {
    Layer l;
    l.in = inputs;
    l.out = outputs;
    l.w.assign(inputs * outputs, 0.0);
    l.b.assign(outputs, value);
    NetworkParams net;
    net.layers.push_back(std::move(l));
    return net;
}

NetworkParams identity_net() {  // q(x) = x for scalar input
    Layer l;
    l.in = 1;
    l.out = 1;
    l.w = {1.0};
    l.b = {0.0};
    NetworkParams net;
    net.layers.push_back(std::move(l));
    return net;
}

/// Calibration sample whose residuals are exactly `residuals`: the model
/// predicts 0 everywhere, labels hold the residual values.
WeightedSample residual_sample(const std::vector<double>& residuals,
                               const std::vector<double>& weights) {
    WeightedSample s;
    s.rows.feature_names = {"x"};
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        s.rows.features.push_back(0.0);
        s.rows.labels.push_back(residuals[i]);
        s.rows.weights.push_back(weights[i]);
        s.rows.ids.push_back(static_cast<std::int64_t>(i));
        s.inclusion_prob.push_back(1.0 / weights[i]);
    }
    return s;
}

/// CQC model over 1-d inputs whose calibration scores come out as
/// S_i = x_i + log 2 (zero score net, identity quantile net, plain weighting).
CqcModel manual_cqc(double alpha) {
    CqcModel m;
    m.score_net = constant_net(0.0, 1, 2);  // log f_k = log(1/2)
    m.quantile_net = identity_net();
    m.alpha = alpha;
    m.n_classes = 2;
    m.weighting = ScoreWeighting::plain;
    return m;
}

WeightedSample cqc_sample(const std::vector<double>& nonconformity,
                          const std::vector<double>& weights) {
    // S_i = qhat(x_i) - log(1/2) = x_i + log 2, so x_i = S_i - log 2
    WeightedSample s;
    s.rows.feature_names = {"x"};
    for (std::size_t i = 0; i < nonconformity.size(); ++i) {
        s.rows.features.push_back(nonconformity[i] - std::log(2.0));
        s.rows.labels.push_back(0.0);
        s.rows.weights.push_back(weights[i]);
        s.rows.ids.push_back(static_cast<std::int64_t>(i));
        s.inclusion_prob.push_back(1.0 / weights[i]);
    }
    return s;
}

std::vector<std::size_t> iota_idx(std::size_t n, std::size_t from = 0) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), from);
    return idx;
}

Dataset regression_data(std::size_t n, std::uint64_t seed, double noise = 0.3) {
    Dataset ds;
    ds.feature_names = {"x1", "x2"};
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.normal(), b = rng.normal();
        ds.features.push_back(a);
        ds.features.push_back(b);
        ds.labels.push_back(a + 0.5 * b + noise * rng.normal());
        ds.weights.push_back(1.0);
        ds.ids.push_back(static_cast<std::int64_t>(i));
    }
    return ds;
}

} // namespace

TEST_SUITE("conformal") {

TEST_CASE("residual_score basics") {
    const NetworkParams net = constant_net(2.0, 1, 1);
    CHECK(residual_score(net, std::vector<double>{0.0}, 2.0) == 0.0);
    CHECK(residual_score(net, std::vector<double>{0.0}, 5.0) == 3.0);

    Rng rng(700);
    for (int t = 0; t < 10; ++t) {
        const NetworkParams r = init_network(2, {3}, 1, rng.next_u64());
        std::vector<double> x{rng.normal(), rng.normal()};
        const double y = rng.normal();
        CHECK(residual_score(r, x, y) == std::abs(y - forward(r, x)[0]));
    }
}

TEST_CASE("split interval: classical rank rule under uniform weights") {
    const std::vector<double> residuals{1, 2, 3, 4, 5, 6, 7, 8, 9};
    const WeightedSample cal = residual_sample(residuals, std::vector<double>(9, 1.0));
    const NetworkParams zero = constant_net(0.0, 1, 1);
    const PredictionSet set =
        split_conformal_interval(zero, cal, std::vector<double>{0.0}, 0.1);
    // ceil((n+1)(1-alpha)) = ceil(9.0) -> 9th order statistic
    CHECK(set.lo == -9.0);
    CHECK(set.hi == 9.0);

    // level beyond the finite mass hits the infinity atom
    const PredictionSet wide =
        split_conformal_interval(zero, cal, std::vector<double>{0.0}, 0.05);
    CHECK(wide.lo == -kInf);
    CHECK(wide.hi == kInf);
}

TEST_CASE("split interval: scale of uniform weights is irrelevant") {
    const std::vector<double> residuals{0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5};
    const PredictionSet a = split_conformal_interval(
        constant_net(0.0, 1, 1), residual_sample(residuals, std::vector<double>(7, 1.0)),
        std::vector<double>{0.0}, 0.2);
    const PredictionSet b = split_conformal_interval(
        constant_net(0.0, 1, 1), residual_sample(residuals, std::vector<double>(7, 250.0)),
        std::vector<double>{0.0}, 0.2);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
}

TEST_CASE("weighted interval: unit weight function reduces to split, bitwise") {
    Rng rng(701);
    const WeightFn unit = [](std::span<const double>) { return 1.0; };
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = 5 + rng.uniform_below(40);
        std::vector<double> residuals(n), ones(n, 1.0);
        for (auto& r : residuals) r = std::abs(rng.normal());
        const WeightedSample cal = residual_sample(residuals, ones);
        const NetworkParams model = constant_net(rng.normal(), 1, 1);
        const double alpha = 0.05 + 0.9 * rng.uniform01();
        const std::vector<double> x{rng.normal()};
        const PredictionSet a = split_conformal_interval(model, cal, x, alpha);
        const PredictionSet b = weighted_conformal_interval(model, cal, x, unit, alpha);
        const bool lo_eq = a.lo == b.lo || (std::isinf(a.lo) && std::isinf(b.lo));
        const bool hi_eq = a.hi == b.hi || (std::isinf(a.hi) && std::isinf(b.hi));
        CHECK(lo_eq);
        CHECK(hi_eq);
    }
}

TEST_CASE("weighted interval: heavy test weight forces the infinite interval") {
    const WeightedSample cal = residual_sample({1.0}, {1.0});
    const WeightFn shifted = [](std::span<const double> x) {
        return x[0] > 0.5 ? 3.0 : 1.0;  // test point gets weight 3
    };
    const PredictionSet set = weighted_conformal_interval(
        constant_net(0.0, 1, 1), cal, std::vector<double>{1.0}, shifted, 0.1);
    // infinity atom mass = 3/4 > 0.1 level margin -> infinite interval
    CHECK(set.lo == -kInf);
    CHECK(set.hi == kInf);
}

TEST_CASE("split interval: exchangeable coverage is conservative over B=200 replicates") {
    const double alpha = 0.1;
    const std::size_t B = 200;
    std::vector<double> rep_coverage(B);
    for (std::size_t rep = 0; rep < B; ++rep) {
        const Dataset train_set = regression_data(120, mix_seed(702, rep, 1));
        const Dataset cal_set = regression_data(200, mix_seed(702, rep, 2));
        const Dataset test_set = regression_data(50, mix_seed(702, rep, 3));
        TrainConfig cfg;
        cfg.hidden_widths = {8};
        cfg.epochs = 80;
        cfg.learning_rate = 0.02;
        cfg.loss_kind = LossKind::weighted_mse;
        cfg.seed = mix_seed(702, rep, 4);
        const NetworkParams net = train(train_set, cfg).params;
        WeightedSample cal;
        cal.rows = cal_set;
        cal.inclusion_prob.assign(cal_set.n_rows(), 1.0);
        double covered = 0.0;
        for (std::size_t i = 0; i < test_set.n_rows(); ++i) {
            const PredictionSet set =
                split_conformal_interval(net, cal, test_set.row(i), alpha);
            covered += set.covers_value(test_set.labels[i]) ? 1.0 : 0.0;
        }
        rep_coverage[rep] = covered / static_cast<double>(test_set.n_rows());
    }
    double mean = 0.0;
    for (double c : rep_coverage) mean += c;
    mean /= static_cast<double>(B);
    double var = 0.0;
    for (double c : rep_coverage) var += (c - mean) * (c - mean);
    var /= static_cast<double>(B - 1);
    const double se = std::sqrt(var / static_cast<double>(B));
    CHECK(mean >= 1.0 - alpha - 2.0 * se);
}

TEST_CASE("weighted interval: coverage under a known Gaussian covariate shift") {
    const double alpha = 0.1;
    // train P_X = N(0, I2), test P~_X = N(0.5*1, I2); likelihood ratio
    // exp(sum_j (0.5 x_j - 0.125))
    const WeightFn ratio = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += 0.5 * v - 0.125;
        return std::exp(s);
    };
    double covered = 0.0, total = 0.0;
    for (std::size_t rep = 0; rep < 50; ++rep) {
        const Dataset train_set = regression_data(150, mix_seed(703, rep, 1));
        const Dataset cal_set = regression_data(120, mix_seed(703, rep, 2));
        Dataset test_set = regression_data(60, mix_seed(703, rep, 3));
        // shift the test covariates and rebuild labels from the same Y|X
        Rng rng(mix_seed(703, rep, 4));
        for (std::size_t i = 0; i < test_set.n_rows(); ++i) {
            double* row = test_set.features.data() + i * 2;
            row[0] += 0.5;
            row[1] += 0.5;
            test_set.labels[i] = row[0] + 0.5 * row[1] + 0.3 * rng.normal();
        }
        TrainConfig cfg;
        cfg.hidden_widths = {8};
        cfg.epochs = 80;
        cfg.learning_rate = 0.02;
        cfg.loss_kind = LossKind::weighted_mse;
        cfg.seed = mix_seed(703, rep, 5);
        const NetworkParams net = train(train_set, cfg).params;
        WeightedSample cal;
        cal.rows = cal_set;
        cal.inclusion_prob.assign(cal_set.n_rows(), 1.0);
        for (std::size_t i = 0; i < test_set.n_rows(); ++i) {
            const PredictionSet set =
                weighted_conformal_interval(net, cal, test_set.row(i), ratio, alpha);
            covered += set.covers_value(test_set.labels[i]) ? 1.0 : 0.0;
            total += 1.0;
        }
    }
    CHECK(covered / total >= 1.0 - alpha - 0.02);
}

TEST_CASE("cqc scores: uniform classifier yields log(1/2) at prediction time") {
    const CqcModel m = manual_cqc(0.1);
    const std::vector<double> s = cqc_scores(m, std::vector<double>{0.3});
    CHECK(s.size() == 2);
    CHECK(s[0] == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(s[0] == doctest::Approx(-0.6931).epsilon(1e-4));
}

TEST_CASE("cqc_calibrate: finite-sample level beyond 1 degenerates to +inf") {
    // S = {1,2,3}, uniform weights, alpha = 0.1: level 1.2 * 0.9 = 1.08 > 1
    CqcModel m = manual_cqc(0.1);
    const WeightedSample s = cqc_sample({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0});
    m = cqc_calibrate(std::move(m), s, iota_idx(3));
    CHECK(std::isinf(m.threshold));
    const PredictionSet set = cqc_predict_set(m, std::vector<double>{0.0});
    CHECK(set.labels == std::vector<int>{0, 1});
}

TEST_CASE("cqc_calibrate: 100 uniform scores at alpha 0.2 picks the 81st") {
    CqcModel m = manual_cqc(0.2);
    std::vector<double> scores(100), ones(100, 1.0);
    for (std::size_t i = 0; i < 100; ++i) scores[i] = static_cast<double>(i + 1);
    const WeightedSample s = cqc_sample(scores, ones);
    m = cqc_calibrate(std::move(m), s, iota_idx(100));
    CHECK(m.threshold == doctest::Approx(81.0).epsilon(1e-12));
}

TEST_CASE("cqc_calibrate: survey weights shift the quantile") {
    // weights (9,1) on S=(1,10), alpha=0.5 -> level 0.75, first atom mass 0.9
    CqcModel m = manual_cqc(0.5);
    const WeightedSample s = cqc_sample({1.0, 10.0}, {9.0, 1.0});
    m = cqc_calibrate(std::move(m), s, iota_idx(2));
    CHECK(m.threshold == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cqc_calibrate: literal weighting multiplies scores by survey weights") {
    CqcModel m = manual_cqc(0.5);
    m.weighting = ScoreWeighting::literal;
    m.quantile_net = constant_net(0.0, 1, 1);  // qhat = 0
    WeightedSample s = cqc_sample({0.0, 0.0}, {2.0, 2.0});
    // literal scores: 2 * log(1/2); S_i = 0 - 2*log(1/2) = 2 log 2
    m = cqc_calibrate(std::move(m), s, iota_idx(2));
    CHECK(m.threshold == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cqc_predict_set: threshold below every score returns the full set") {
    CqcModel m = manual_cqc(0.2);
    m.quantile_net = constant_net(-100.0, 1, 1);  // qhat far below log(1/2)
    m.threshold = 0.0;
    m.calibrated = true;
    const PredictionSet set = cqc_predict_set(m, std::vector<double>{0.0});
    CHECK(set.labels == std::vector<int>{0, 1});

    CqcModel uncal = manual_cqc(0.2);
    CHECK_THROWS_AS(cqc_predict_set(uncal, std::vector<double>{0.0}), invalid_state);
}

TEST_CASE("cqc_fit: constant features reduce the quantile net to the pinball optimum") {
    // all-zero features: the trained quantile net can only move its output
    // bias, whose optimum is the weighted alpha-quantile of the scores
    const double alpha = 0.3;
    WeightedSample s;
    s.rows.feature_names = {"x"};
    Rng rng(704);
    for (std::size_t i = 0; i < 120; ++i) {
        s.rows.features.push_back(0.0);
        s.rows.labels.push_back(rng.bernoulli(0.3) ? 1.0 : 0.0);
        const double w = 0.5 + 2.0 * rng.uniform01();
        s.rows.weights.push_back(w);
        s.rows.ids.push_back(static_cast<std::int64_t>(i));
        s.inclusion_prob.push_back(1.0 / w);
    }
    TrainConfig cfg;
    cfg.hidden_widths = {4};
    cfg.epochs = 3000;
    cfg.learning_rate = 5e-3;
    cfg.seed = 9;
    const auto idx1 = iota_idx(60);
    const auto idx2 = iota_idx(60, 60);
    const CqcModel m =
        cqc_fit(s, idx1, idx2, alpha, cfg, cfg, ScoreWeighting::literal);

    // recompute the step-1 scores on I2 independently
    std::vector<double> scores, masses;
    for (std::size_t i : idx2) {
        const std::vector<double> logp = cqc_scores(m, s.rows.row(i));
        scores.push_back(s.rows.weights[i] *
                         logp[static_cast<std::size_t>(s.rows.labels[i])]);
        masses.push_back(s.rows.weights[i]);
    }
    const double optimum =
        weighted_quantile(WeightedEmpirical::make(scores, masses), alpha);
    const double fitted = forward(m.quantile_net, std::vector<double>{0.0})[0];

    // compare achieved pinball loss with the optimal one
    auto pinball_sum = [&](double q) {
        double total = 0.0;
        for (std::size_t k = 0; k < scores.size(); ++k)
            total += masses[k] * pinball_loss(scores[k] - q, alpha);
        return total;
    };
    CHECK(pinball_sum(fitted) <= pinball_sum(optimum) * 1.01 + 1e-9);
}

TEST_CASE("cqc_fit: bitwise deterministic given seeds") {
    WeightedSample s;
    s.rows.feature_names = {"a", "b"};
    Rng rng(705);
    for (std::size_t i = 0; i < 80; ++i) {
        s.rows.features.push_back(rng.normal());
        s.rows.features.push_back(rng.normal());
        s.rows.labels.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
        s.rows.weights.push_back(1.0 + rng.uniform01());
        s.rows.ids.push_back(static_cast<std::int64_t>(i));
        s.inclusion_prob.push_back(1.0 / s.rows.weights.back());
    }
    TrainConfig cfg;
    cfg.hidden_widths = {6};
    cfg.epochs = 40;
    cfg.seed = 11;
    const auto idx1 = iota_idx(40);
    const auto idx2 = iota_idx(40, 40);
    const CqcModel a = cqc_fit(s, idx1, idx2, 0.1, cfg, cfg);
    const CqcModel b = cqc_fit(s, idx1, idx2, 0.1, cfg, cfg);
    CHECK(a.score_net.to_flat() == b.score_net.to_flat());
    CHECK(a.quantile_net.to_flat() == b.quantile_net.to_flat());

    CHECK_THROWS_AS(cqc_fit(s, idx1, idx1, 0.1, cfg, cfg), invalid_input);
}

TEST_CASE("interval monotonicity in alpha") {
    Rng rng(706);
    const std::size_t n = 40;
    std::vector<double> residuals(n), ones(n, 1.0);
    for (auto& r : residuals) r = std::abs(rng.normal());
    const WeightedSample cal = residual_sample(residuals, ones);
    const NetworkParams model = constant_net(0.0, 1, 1);
    PredictionSet prev;
    bool first = true;
    for (double alpha : {0.05, 0.1, 0.2, 0.4, 0.6}) {
        const PredictionSet set =
            split_conformal_interval(model, cal, std::vector<double>{0.0}, alpha);
        if (!first) {
            CHECK(set.lo >= prev.lo);
            CHECK(set.hi <= prev.hi);
        }
        prev = set;
        first = false;
    }
}

TEST_CASE("cqc set monotonicity in alpha on constant features") {
    WeightedSample s;
    s.rows.feature_names = {"x"};
    Rng rng(707);
    for (std::size_t i = 0; i < 150; ++i) {
        s.rows.features.push_back(0.0);
        s.rows.labels.push_back(rng.bernoulli(0.4) ? 1.0 : 0.0);
        s.rows.weights.push_back(0.5 + rng.uniform01());
        s.rows.ids.push_back(static_cast<std::int64_t>(i));
        s.inclusion_prob.push_back(1.0 / s.rows.weights.back());
    }
    TrainConfig cfg;
    cfg.hidden_widths = {4};
    cfg.epochs = 400;
    cfg.learning_rate = 0.01;
    cfg.seed = 13;
    const auto idx1 = iota_idx(50);
    const auto idx2 = iota_idx(50, 50);
    const auto idx3 = iota_idx(50, 100);
    std::vector<int> prev_labels;
    bool first = true;
    for (double alpha : {0.05, 0.1, 0.25}) {
        CqcModel m = cqc_fit(s, idx1, idx2, alpha, cfg, cfg);
        m = cqc_calibrate(std::move(m), s, idx3);
        const PredictionSet set = cqc_predict_set(m, std::vector<double>{0.0});
        if (!first)
            for (int label : set.labels)
                CHECK(std::find(prev_labels.begin(), prev_labels.end(), label) !=
                      prev_labels.end());
        prev_labels = set.labels;
        first = false;
    }
}

TEST_CASE("coverage_gap_bound: closed forms and domain checks") {
    const std::vector<double> zeros(5, 0.0);
    const std::vector<double> ones(5, 1.0);
    CHECK(coverage_gap_bound(ones, zeros) == 0.0);

    std::vector<double> delta(5, 0.3);
    CHECK(coverage_gap_bound(ones, delta) ==
          doctest::Approx(5.0 * 0.3 / 6.0).epsilon(1e-15));

    Rng rng(708);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> w(8), d(8);
        for (std::size_t i = 0; i < 8; ++i) {
            w[i] = rng.uniform01();
            d[i] = rng.uniform01();
        }
        double num = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            num += w[i] * d[i];
            wsum += w[i];
        }
        CHECK(coverage_gap_bound(w, d) == doctest::Approx(num / (1.0 + wsum)).epsilon(1e-15));
    }

    CHECK_THROWS_AS(coverage_gap_bound(std::vector<double>{1.5}, std::vector<double>{0.1}),
                    invalid_input);
    CHECK_THROWS_AS(coverage_gap_bound(std::vector<double>{0.5}, std::vector<double>{1.1}),
                    invalid_input);
}

TEST_CASE("evaluate_coverage: ends of the spectrum and the direct oracle") {
    PredictionSet covered_set;
    covered_set.is_interval = true;
    covered_set.lo = -1.0;
    covered_set.hi = 1.0;
    covered_set.alpha = 0.1;
    std::vector<PredictionSet> sets(4, covered_set);
    const std::vector<double> truths{0.0, 0.5, -0.5, 0.9};
    const std::vector<double> weights{1.0, 2.0, 3.0, 4.0};
    CHECK(evaluate_coverage(sets, truths, weights, true).empirical_coverage == 1.0);

    const std::vector<double> outside{2.0, 2.0, 2.0, 2.0};
    CHECK(evaluate_coverage(sets, outside, weights, false).empirical_coverage == 0.0);

    Rng rng(709);
    std::vector<PredictionSet> rand_sets;
    std::vector<double> ys, ws;
    for (int i = 0; i < 30; ++i) {
        PredictionSet s;
        s.alpha = 0.2;
        s.is_interval = false;
        if (rng.bernoulli(0.5)) s.labels.push_back(0);
        if (rng.bernoulli(0.5)) s.labels.push_back(1);
        rand_sets.push_back(s);
        ys.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
        ws.push_back(0.5 + rng.uniform01());
    }
    const CoverageResult got = evaluate_coverage(rand_sets, ys, ws, true);
    double num = 0.0, den = 0.0, size = 0.0;
    for (std::size_t i = 0; i < rand_sets.size(); ++i) {
        const bool hit = rand_sets[i].covers_label(static_cast<int>(ys[i]));
        num += hit ? ws[i] : 0.0;
        size += ws[i] * static_cast<double>(rand_sets[i].labels.size());
        den += ws[i];
    }
    CHECK(got.empirical_coverage == num / den);
    CHECK(got.mean_set_size == size / den);
}

TEST_CASE("CqcModel: JSON artifact round trip") {
    CqcModel m = manual_cqc(0.15);
    m.threshold = 1.25;
    m.calibrated = true;
    const CqcModel back = CqcModel::from_json(m.to_json());
    CHECK(back.alpha == m.alpha);
    CHECK(back.threshold == m.threshold);
    CHECK(back.calibrated);
    CHECK(back.weighting == m.weighting);
    CHECK(back.score_net.to_flat() == m.score_net.to_flat());
    CHECK(back.quantile_net.to_flat() == m.quantile_net.to_flat());

    const std::vector<double> x{0.7};
    CHECK(cqc_predict_set(back, x).labels == cqc_predict_set(m, x).labels);

    m.threshold = kInf;
    const CqcModel inf_back = CqcModel::from_json(m.to_json());
    CHECK(std::isinf(inf_back.threshold));
}

} // TEST_SUITE
