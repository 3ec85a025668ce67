#include "svynn/survey.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "svynn/rng.hpp"

namespace svynn {

namespace {

constexpr std::uint64_t kLabelStream = 0x636c7573ULL;  // state/city tag synthesis
constexpr std::uint64_t kStateStream = 0x73746174ULL;  // per-state sampling decisions

void fill_population_row(Scenario s, std::uint64_t seed, std::size_t row, double* x,
                         double* y) {
    Rng rng(seed, row);
    for (std::size_t j = 0; j < 10; ++j) x[j] = rng.normal();
    const double p = scenario_prob(s, {x, 10});
    *y = rng.bernoulli(p) ? 1.0 : 0.0;
}

Dataset make_population_frame(std::size_t n, std::uint64_t seed, std::size_t city_size) {
    if (n == 0) throw invalid_input("generate_population: n must be >= 1");
    if (city_size == 0) throw invalid_input("generate_population: city_size must be >= 1");
    Dataset ds;
    ds.feature_names = {"x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10"};
    ds.features.resize(n * 10);
    ds.labels.resize(n);
    ds.weights.assign(n, 1.0);
    ds.ids.resize(n);
    ds.state.resize(n);
    ds.city.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.ids[i] = static_cast<std::int64_t>(i);

    // Cluster tags: consecutive blocks; each state holds 3-8 cities of
    // city_size units (the final city may be truncated by n).
    Rng tag_rng(seed, kLabelStream);
    std::size_t assigned = 0;
    std::int32_t state = 0;
    while (assigned < n) {
        const auto n_cities = static_cast<std::size_t>(3 + tag_rng.uniform_below(6));
        for (std::size_t c = 0; c < n_cities && assigned < n; ++c) {
            const std::size_t take = std::min(city_size, n - assigned);
            for (std::size_t k = 0; k < take; ++k) {
                ds.state[assigned] = state;
                ds.city[assigned] = static_cast<std::int32_t>(c);
                ++assigned;
            }
        }
        ++state;
    }
    return ds;
}

} // namespace

void SurveyDesign::validate() const {
    switch (kind) {
        case Kind::iid:
            break;
        case Kind::bernoulli:
            if (!(bernoulli_pi > 0.0 && bernoulli_pi <= 1.0))
                throw invalid_input("bernoulli design: pi must lie in (0,1]");
            break;
        case Kind::two_stage_cluster:
            if (!(state_prob > 0.0 && state_prob <= 1.0))
                throw invalid_input("two-stage design: state_prob must lie in (0,1]");
            break;
    }
}

WeightedEmpirical WeightedEmpirical::make(std::span<const double> values,
                                          std::span<const double> masses,
                                          double infinity_mass) {
    if (values.size() != masses.size())
        throw invalid_input("WeightedEmpirical: values/masses length mismatch");
    if (values.empty() && infinity_mass <= 0.0)
        throw invalid_input("WeightedEmpirical: empty distribution");
    if (infinity_mass < 0.0)
        throw invalid_input("WeightedEmpirical: negative mass at infinity");

    WeightedEmpirical d;
    d.atoms.reserve(values.size());
    double total = infinity_mass;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw invalid_input("WeightedEmpirical: atom values must be finite");
        if (masses[i] < 0.0) throw invalid_input("WeightedEmpirical: negative mass");
        total += masses[i];
        d.atoms.push_back({values[i], masses[i]});
    }
    if (!(total > 0.0)) throw invalid_input("WeightedEmpirical: total mass must be positive");
    std::stable_sort(d.atoms.begin(), d.atoms.end(),
                     [](const Atom& a, const Atom& b) { return a.value < b.value; });
    for (Atom& a : d.atoms) a.mass /= total;
    d.mass_at_infinity = infinity_mass / total;
    return d;
}

double WeightedEmpirical::total_finite_mass() const {
    double t = 0.0;
    for (const Atom& a : atoms) t += a.mass;
    return t;
}

double ht_mean(std::span<const double> values, std::span<const double> inclusion_probs,
               std::size_t population_size) {
    if (values.size() != inclusion_probs.size())
        throw invalid_input("ht_mean: values/probs length mismatch");
    if (population_size == 0 || values.size() > population_size)
        throw invalid_input("ht_mean: need 0 < n <= N");
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(inclusion_probs[i] > 0.0 && inclusion_probs[i] <= 1.0))
            throw invalid_input("ht_mean: inclusion probabilities must lie in (0,1]");
        if (!std::isfinite(values[i])) throw invalid_input("ht_mean: non-finite value");
        sum += values[i] / inclusion_probs[i];
    }
    return sum / static_cast<double>(population_size);
}

double weighted_quantile(const WeightedEmpirical& d, double level) {
    if (!(level > 0.0)) throw invalid_input("weighted_quantile: level must be > 0");
    if (d.atoms.empty() && d.mass_at_infinity <= 0.0)
        throw invalid_input("weighted_quantile: empty distribution");

    double cum = 0.0;
    for (const auto& atom : d.atoms) {
        cum += atom.mass;
        if (cum >= level) return atom.value;
    }
    // Level not attained by the finite atoms. Attribute it to the infinity
    // atom when one exists or when the level is unattainable outright;
    // otherwise it exceeded total mass only through rounding, so the last
    // atom is the correct answer.
    if (d.mass_at_infinity > 0.0 || level >= 1.0 || d.atoms.empty())
        return std::numeric_limits<double>::infinity();
    return d.atoms.back().value;
}

std::vector<double> covariate_shift_weights(std::span<const double> train_w, double test_w) {
    if (!(test_w > 0.0)) throw invalid_input("covariate_shift_weights: test weight must be > 0");
    double denom = 0.0;
    for (double w : train_w) {
        if (!(w > 0.0)) throw invalid_input("covariate_shift_weights: weights must be > 0");
        denom += w;
    }
    denom += test_w;
    std::vector<double> p(train_w.size() + 1);
    for (std::size_t i = 0; i < train_w.size(); ++i) p[i] = train_w[i] / denom;
    p.back() = test_w / denom;
    return p;
}

double scenario_prob(Scenario s, std::span<const double> x) {
    if (x.size() != 10) throw invalid_input("scenario_prob: expected 10 covariates");
    double lin = 0.0;
    if (s == Scenario::a) {
        for (double v : x) lin += v;
        return 1.0 / (1.0 + std::exp(-3.0 + lin));
    }
    for (std::size_t j = 0; j < 3; ++j) lin += x[j];
    double prod = 1.0;
    for (std::size_t j = 6; j < 10; ++j) prod *= x[j];
    return 1.0 / (1.0 + std::exp(-2.0 + lin + prod));
}

Dataset generate_population(Scenario s, std::size_t n, std::uint64_t seed,
                            std::size_t city_size) {
    Dataset ds = make_population_frame(n, seed, city_size);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        const auto row = static_cast<std::size_t>(i);
        fill_population_row(s, seed, row, ds.features.data() + row * 10, &ds.labels[row]);
    }
    return ds;
}

Dataset generate_population_serial(Scenario s, std::size_t n, std::uint64_t seed,
                                   std::size_t city_size) {
    Dataset ds = make_population_frame(n, seed, city_size);
    for (std::size_t row = 0; row < n; ++row)
        fill_population_row(s, seed, row, ds.features.data() + row * 10, &ds.labels[row]);
    return ds;
}

WeightedSample draw_two_stage_sample(const SurveyDesign& design, const Dataset& population,
                                     std::uint64_t seed) {
    design.validate();
    if (design.kind != SurveyDesign::Kind::two_stage_cluster)
        throw invalid_input("draw_two_stage_sample: design kind is not two-stage-cluster");
    population.validate();
    if (population.state.empty() || population.city.empty())
        throw invalid_input("draw_two_stage_sample: population lacks state/city tags");
    if (population.n_rows() == 0)
        throw invalid_input("draw_two_stage_sample: empty population");

    // Count distinct cities per state (ordered map keeps state order stable).
    std::map<std::int32_t, std::vector<std::int32_t>> cities;
    for (std::size_t i = 0; i < population.n_rows(); ++i) {
        auto& list = cities[population.state[i]];
        if (std::find(list.begin(), list.end(), population.city[i]) == list.end())
            list.push_back(population.city[i]);
    }
    for (auto& [state, list] : cities) {
        if (list.empty()) throw invalid_input("draw_two_stage_sample: state with no cities");
        std::sort(list.begin(), list.end());
    }
    if (!design.cities_per_state.empty() && design.cities_per_state.size() != cities.size())
        throw invalid_input("draw_two_stage_sample: cities_per_state does not match population");

    // Stage 1: retain each state with probability state_prob.
    // Stage 2: choose exactly one city uniformly within each retained state.
    std::map<std::int32_t, std::int32_t> chosen;  // state -> city (retained states only)
    std::map<std::int32_t, double> pi_by_state;
    {
        std::size_t k = 0;
        for (const auto& [state, list] : cities) {
            if (!design.cities_per_state.empty() && design.cities_per_state[k] != list.size())
                throw invalid_input("draw_two_stage_sample: cities_per_state mismatch for a state");
            ++k;
            Rng rng(mix_seed(seed, kStateStream, static_cast<std::uint64_t>(state)));
            const bool retained = rng.bernoulli(design.state_prob);
            const auto city_idx = static_cast<std::size_t>(rng.uniform_below(list.size()));
            if (retained) chosen[state] = list[city_idx];
            pi_by_state[state] = design.state_prob / static_cast<double>(list.size());
        }
    }

    WeightedSample sample;
    sample.rows.feature_names = population.feature_names;
    for (std::size_t i = 0; i < population.n_rows(); ++i) {
        const auto it = chosen.find(population.state[i]);
        if (it == chosen.end() || it->second != population.city[i]) continue;
        const double pi = pi_by_state[population.state[i]];
        auto r = population.row(i);
        sample.rows.features.insert(sample.rows.features.end(), r.begin(), r.end());
        if (population.has_labels()) sample.rows.labels.push_back(population.labels[i]);
        sample.rows.weights.push_back(1.0 / pi);
        sample.rows.ids.push_back(population.ids[i]);
        sample.rows.state.push_back(population.state[i]);
        sample.rows.city.push_back(population.city[i]);
        sample.inclusion_prob.push_back(pi);
    }
    return sample;
}

WeightedSample draw_sample(const SurveyDesign& design, const Dataset& population,
                           std::uint64_t seed) {
    design.validate();
    population.validate();
    if (population.n_rows() == 0) throw invalid_input("draw_sample: empty population");

    switch (design.kind) {
        case SurveyDesign::Kind::two_stage_cluster:
            return draw_two_stage_sample(design, population, seed);
        case SurveyDesign::Kind::iid: {
            WeightedSample s;
            s.rows = population;
            s.rows.weights.assign(population.n_rows(), 1.0);
            s.inclusion_prob.assign(population.n_rows(), 1.0);
            return s;
        }
        case SurveyDesign::Kind::bernoulli: {
            WeightedSample s;
            s.rows.feature_names = population.feature_names;
            const double pi = design.bernoulli_pi;
            for (std::size_t i = 0; i < population.n_rows(); ++i) {
                Rng rng(seed, i);
                if (!rng.bernoulli(pi)) continue;
                auto r = population.row(i);
                s.rows.features.insert(s.rows.features.end(), r.begin(), r.end());
                if (population.has_labels()) s.rows.labels.push_back(population.labels[i]);
                s.rows.weights.push_back(1.0 / pi);
                s.rows.ids.push_back(population.ids[i]);
                if (!population.state.empty()) s.rows.state.push_back(population.state[i]);
                if (!population.city.empty()) s.rows.city.push_back(population.city[i]);
                s.inclusion_prob.push_back(pi);
            }
            return s;
        }
    }
    throw invalid_input("draw_sample: unknown design kind");
}

} // namespace svynn
