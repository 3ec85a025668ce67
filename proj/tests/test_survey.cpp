#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "svynn/oracle.hpp"
#include "svynn/rng.hpp"
#include "svynn/survey.hpp"

using namespace svynn;

namespace {

// sup |HT-weighted ECDF - population ECDF| evaluated at every population value
double ht_cdf_sup_distance(const std::vector<double>& population,
                           const std::vector<double>& sample_values,
                           const std::vector<double>& sample_weights, std::size_t n_pop) {
    std::vector<double> pop = population;
    std::sort(pop.begin(), pop.end());
    std::vector<std::size_t> order(sample_values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sample_values[a] < sample_values[b];
    });

    double sup = 0.0, ht_cum = 0.0;
    std::size_t si = 0;
    for (std::size_t k = 0; k < pop.size(); ++k) {
        while (si < order.size() && sample_values[order[si]] <= pop[k]) {
            ht_cum += sample_weights[order[si]] / static_cast<double>(n_pop);
            ++si;
        }
        const double pop_cdf = static_cast<double>(k + 1) / static_cast<double>(pop.size());
        sup = std::max(sup, std::abs(ht_cum - pop_cdf));
    }
    return sup;
}

} // namespace

TEST_SUITE("survey") {

TEST_CASE("ht_mean: census and constant cases") {
    const std::vector<double> values{1.0, 2.0, 3.0, 4.0};
    const std::vector<double> ones(4, 1.0);
    CHECK(ht_mean(values, ones, 4) == doctest::Approx(2.5).epsilon(1e-15));

    const std::vector<double> constant(4, 7.25);
    CHECK(ht_mean(constant, ones, 4) == doctest::Approx(7.25).epsilon(1e-15));

    std::vector<double> bad{0.5, 0.0};
    CHECK_THROWS_AS(ht_mean(std::vector<double>{1.0, 2.0}, bad, 4), invalid_input);
}

TEST_CASE("ht_mean: exact design expectation over all Bernoulli subsets") {
    // population {0, 10}, Bernoulli(1/2): four equally likely subsets
    const double pi = 0.5;
    double expectation = 0.0;
    const std::vector<std::vector<double>> subsets{{}, {0.0}, {10.0}, {0.0, 10.0}};
    for (const auto& subset : subsets) {
        const std::vector<double> probs(subset.size(), pi);
        expectation += 0.25 * ht_mean(subset, probs, 2);
    }
    CHECK(expectation == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("ht_mean: empirically design-unbiased under Bernoulli(0.5)") {
    Rng pop_rng(300);
    std::vector<double> population(50);
    for (double& v : population) v = 10.0 * pop_rng.normal();
    double pop_mean = 0.0;
    for (double v : population) pop_mean += v;
    pop_mean /= 50.0;

    const std::size_t R = 2000;
    std::vector<double> estimates(R);
    for (std::size_t r = 0; r < R; ++r) {
        Rng rng(301, r);
        std::vector<double> values, probs;
        for (double v : population)
            if (rng.bernoulli(0.5)) {
                values.push_back(v);
                probs.push_back(0.5);
            }
        estimates[r] = ht_mean(values, probs, 50);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(R);
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= static_cast<double>(R - 1);
    const double se = std::sqrt(var / static_cast<double>(R));
    CHECK(std::abs(mean - pop_mean) < 3.0 * se);
}

TEST_CASE("weighted_quantile: small exact cases") {
    const std::vector<double> v1{1.0, 2.0, 3.0};
    const std::vector<double> m1{1.0, 1.0, 1.0};
    CHECK(weighted_quantile(WeightedEmpirical::make(v1, m1), 0.5) == 2.0);

    const std::vector<double> v2{1.0, 2.0};
    const std::vector<double> m2{0.9, 0.1};
    CHECK(weighted_quantile(WeightedEmpirical::make(v2, m2), 0.5) == 1.0);

    CHECK_THROWS_AS(WeightedEmpirical::make({}, {}), invalid_input);
}

TEST_CASE("weighted_quantile: equals the cumulative-scan oracle exactly") {
    Rng rng(400);
    for (int c = 0; c < 30; ++c) {
        std::vector<double> values(200), masses(200);
        for (auto& v : values) v = 5.0 * rng.normal();
        for (auto& m : masses) m = 0.01 + rng.uniform01();
        const double inf_mass = c % 3 == 0 ? 0.2 : 0.0;
        const auto dist = WeightedEmpirical::make(values, masses, inf_mass);
        for (int q = 0; q < 50; ++q) {
            const double level = 0.02 + 1.05 * rng.uniform01();
            const double fast = weighted_quantile(dist, level);
            const double slow = oracle::weighted_quantile_scan(dist, level);
            const bool equal = fast == slow || (std::isinf(fast) && std::isinf(slow));
            CHECK(equal);
        }
    }
}

TEST_CASE("weighted_quantile: monotone in level, scale invariant") {
    Rng rng(401);
    std::vector<double> values(60), masses(60), scaled(60);
    for (auto& v : values) v = rng.normal();
    for (std::size_t i = 0; i < 60; ++i) {
        masses[i] = 0.05 + rng.uniform01();
        scaled[i] = 17.0 * masses[i];
    }
    const auto d1 = WeightedEmpirical::make(values, masses);
    const auto d2 = WeightedEmpirical::make(values, scaled);
    double prev = -1e300;
    for (double level = 0.05; level < 1.0; level += 0.05) {
        const double q = weighted_quantile(d1, level);
        CHECK(q >= prev);
        prev = q;
        CHECK(weighted_quantile(d2, level) == q);
    }
}

TEST_CASE("weighted_quantile: uniform masses match order statistics") {
    Rng rng(402);
    for (int c = 0; c < 100; ++c) {
        const std::size_t n = 5 + rng.uniform_below(40);
        std::vector<double> values(n), ones(n, 1.0);
        for (auto& v : values) v = rng.normal();
        const auto dist = WeightedEmpirical::make(values, ones);
        const double level = 0.02 + 0.96 * rng.uniform01();
        CHECK(weighted_quantile(dist, level) ==
              oracle::order_statistic_quantile(values, level));
    }
}

TEST_CASE("covariate_shift_weights: closed forms and normalization") {
    const std::vector<double> equal(5, 2.0);
    const auto p = covariate_shift_weights(equal, 2.0);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

    const auto q = covariate_shift_weights(std::vector<double>{1.0}, 3.0);
    CHECK(q[0] == 0.25);
    CHECK(q[1] == 0.75);

    Rng rng(403);
    std::vector<double> w(30);
    for (auto& v : w) v = 0.1 + 5.0 * rng.uniform01();
    const auto r = covariate_shift_weights(w, 0.7);
    double sum = 0.0;
    for (double v : r) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    CHECK_THROWS_AS(covariate_shift_weights(std::vector<double>{0.0}, 1.0), invalid_input);
    CHECK_THROWS_AS(covariate_shift_weights(w, -1.0), invalid_input);
}

TEST_CASE("generate_population: scenario probabilities at the origin") {
    const std::vector<double> zero(10, 0.0);
    CHECK(scenario_prob(Scenario::a, zero) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-12));
    CHECK(scenario_prob(Scenario::b, zero) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(scenario_prob(Scenario::a, zero) == doctest::Approx(0.95257).epsilon(1e-4));
    CHECK(scenario_prob(Scenario::b, zero) == doctest::Approx(0.88080).epsilon(1e-4));
}

TEST_CASE("generate_population: mean success probability matches a Monte Carlo oracle") {
    const std::size_t n = 100000;
    const Dataset pop = generate_population(Scenario::a, n, 404);

    double m1 = 0.0, s1 = 0.0;
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) probs[i] = scenario_prob(Scenario::a, pop.row(i));
    for (double v : probs) m1 += v;
    m1 /= static_cast<double>(n);
    for (double v : probs) s1 += (v - m1) * (v - m1);
    s1 = std::sqrt(s1 / static_cast<double>(n - 1) / static_cast<double>(n));

    // independent straight-line draw of the same expectation
    Rng rng(405);
    double m2 = 0.0, s2 = 0.0;
    std::vector<double> mc(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 10; ++j) sum += rng.normal();
        mc[i] = 1.0 / (1.0 + std::exp(-3.0 + sum));
    }
    for (double v : mc) m2 += v;
    m2 /= static_cast<double>(n);
    for (double v : mc) s2 += (v - m2) * (v - m2);
    s2 = std::sqrt(s2 / static_cast<double>(n - 1) / static_cast<double>(n));

    CHECK(std::abs(m1 - m2) < 3.0 * std::sqrt(s1 * s1 + s2 * s2));

    // labels are Bernoulli draws of those probabilities
    double label_mean = 0.0;
    for (double y : pop.labels) label_mean += y;
    label_mean /= static_cast<double>(n);
    CHECK(std::abs(label_mean - m1) < 4.0 * std::sqrt(m1 * (1.0 - m1) / n));
}

TEST_CASE("generate_population: cluster tags have 3-8 balanced cities") {
    const Dataset pop = generate_population(Scenario::a, 2000, 406, 40);
    REQUIRE(pop.state.size() == 2000);
    std::map<int, std::set<int>> cities;
    std::map<std::pair<int, int>, int> city_size;
    for (std::size_t i = 0; i < 2000; ++i) {
        cities[pop.state[i]].insert(pop.city[i]);
        city_size[{pop.state[i], pop.city[i]}]++;
    }
    for (const auto& [state, set] : cities) {
        if (state + 1 < static_cast<int>(cities.size()))  // last state may be truncated
            CHECK(set.size() >= 3);
        CHECK(set.size() <= 8);
    }
    for (const auto& [key, size] : city_size) CHECK(size <= 40);
}

TEST_CASE("draw_two_stage_sample: inclusion probabilities and exact weights") {
    // one state, four cities: retained states yield pi = state_prob / 4
    Dataset pop;
    pop.feature_names = {"x"};
    for (int c = 0; c < 4; ++c)
        for (int u = 0; u < 3; ++u) {
            pop.features.push_back(static_cast<double>(c));
            pop.labels.push_back(0.0);
            pop.weights.push_back(1.0);
            pop.ids.push_back(c * 3 + u);
            pop.state.push_back(0);
            pop.city.push_back(c);
        }

    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    design.state_prob = 0.8;

    bool saw_nonempty = false;
    for (std::uint64_t seed = 0; seed < 32 && !saw_nonempty; ++seed) {
        const WeightedSample s = draw_two_stage_sample(design, pop, seed);
        if (s.rows.n_rows() == 0) continue;
        saw_nonempty = true;
        CHECK(s.rows.n_rows() == 3);  // exactly one city of three units
        for (std::size_t i = 0; i < s.rows.n_rows(); ++i) {
            CHECK(s.inclusion_prob[i] == doctest::Approx(0.2).epsilon(1e-15));
            CHECK(s.rows.weights[i] == doctest::Approx(5.0).epsilon(1e-15));
            // weights are defined as exactly 1/pi
            CHECK(s.rows.weights[i] == 1.0 / s.inclusion_prob[i]);
            CHECK(s.rows.weights[i] * s.inclusion_prob[i] == 1.0);
        }
    }
    CHECK(saw_nonempty);
}

TEST_CASE("draw_two_stage_sample: census when state_prob=1 and one city per state") {
    Dataset pop;
    pop.feature_names = {"x"};
    for (int s = 0; s < 5; ++s)
        for (int u = 0; u < 4; ++u) {
            pop.features.push_back(0.0);
            pop.labels.push_back(1.0);
            pop.weights.push_back(1.0);
            pop.ids.push_back(s * 4 + u);
            pop.state.push_back(s);
            pop.city.push_back(0);
        }
    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    design.state_prob = 1.0;
    const WeightedSample s = draw_two_stage_sample(design, pop, 3);
    CHECK(s.rows.n_rows() == 20);
    for (double pi : s.inclusion_prob) CHECK(pi == 1.0);
    for (double w : s.rows.weights) CHECK(w == 1.0);
}

TEST_CASE("draw_two_stage_sample: Monte Carlo inclusion frequency matches pi") {
    const Dataset pop = generate_population(Scenario::a, 600, 407, 30);
    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    design.state_prob = 0.8;

    const std::int64_t tracked = 17;
    double pi_tracked = -1.0;
    std::size_t hits = 0;
    const std::size_t R = 10000;
    for (std::size_t r = 0; r < R; ++r) {
        const WeightedSample s = draw_two_stage_sample(design, pop, mix_seed(408, r));
        for (std::size_t i = 0; i < s.rows.n_rows(); ++i)
            if (s.rows.ids[i] == tracked) {
                ++hits;
                pi_tracked = s.inclusion_prob[i];
            }
    }
    REQUIRE(pi_tracked > 0.0);
    const double freq = static_cast<double>(hits) / static_cast<double>(R);
    const double se = std::sqrt(pi_tracked * (1.0 - pi_tracked) / static_cast<double>(R));
    CHECK(std::abs(freq - pi_tracked) < 3.0 * se);
}

TEST_CASE("draw_two_stage_sample: requires cluster tags") {
    Dataset pop;
    pop.feature_names = {"x"};
    pop.features = {1.0};
    pop.weights = {1.0};
    pop.ids = {0};
    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    CHECK_THROWS_AS(draw_two_stage_sample(design, pop, 1), invalid_input);
}

TEST_CASE("draw_sample: iid census and Bernoulli designs") {
    const Dataset pop = generate_population(Scenario::a, 400, 410, 20);

    SurveyDesign iid;
    iid.kind = SurveyDesign::Kind::iid;
    const WeightedSample census = draw_sample(iid, pop, 1);
    CHECK(census.rows.n_rows() == 400);
    for (double pi : census.inclusion_prob) CHECK(pi == 1.0);
    for (double w : census.rows.weights) CHECK(w == 1.0);

    SurveyDesign bern;
    bern.kind = SurveyDesign::Kind::bernoulli;
    bern.bernoulli_pi = 0.25;
    std::size_t total = 0;
    const std::size_t R = 400;
    for (std::size_t r = 0; r < R; ++r) {
        const WeightedSample s = draw_sample(bern, pop, mix_seed(411, r));
        total += s.rows.n_rows();
        if (r == 0)
            for (std::size_t i = 0; i < s.rows.n_rows(); ++i) {
                CHECK(s.inclusion_prob[i] == 0.25);
                CHECK(s.rows.weights[i] == 4.0);
            }
    }
    const double mean_frac =
        static_cast<double>(total) / static_cast<double>(R) / 400.0;
    CHECK(std::abs(mean_frac - 0.25) < 0.01);

    bern.bernoulli_pi = 0.0;
    CHECK_THROWS_AS(draw_sample(bern, pop, 1), invalid_input);
}

TEST_CASE("Glivenko-Cantelli: HT empirical CDF converges over population size") {
    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    design.state_prob = 0.8;

    std::vector<double> medians;
    for (const std::size_t n : {500u, 5000u, 50000u}) {
        std::vector<double> sups;
        for (std::size_t rep = 0; rep < 50; ++rep) {
            const Dataset pop =
                generate_population(Scenario::a, n, mix_seed(500, n, rep), 50);
            const WeightedSample s =
                draw_two_stage_sample(design, pop, mix_seed(501, n, rep));
            if (s.rows.n_rows() == 0) {
                sups.push_back(1.0);
                continue;
            }
            std::vector<double> pop_x1(n), sample_x1(s.rows.n_rows());
            for (std::size_t i = 0; i < n; ++i) pop_x1[i] = pop.row(i)[0];
            for (std::size_t i = 0; i < s.rows.n_rows(); ++i) sample_x1[i] = s.rows.row(i)[0];
            sups.push_back(ht_cdf_sup_distance(pop_x1, sample_x1, s.rows.weights, n));
        }
        std::sort(sups.begin(), sups.end());
        medians.push_back(sups[sups.size() / 2]);
    }
    CHECK(medians[1] < medians[0]);
    CHECK(medians[2] < medians[1]);
}

} // TEST_SUITE
