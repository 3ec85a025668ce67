#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svynn/dataset.hpp"
#include "svynn/errors.hpp"

namespace svynn {

/// A sampling mechanism with enough structure to compute first-order
/// inclusion probabilities for every drawn unit.
struct SurveyDesign {
    enum class Kind { iid, bernoulli, two_stage_cluster };

    Kind kind = Kind::iid;
    double bernoulli_pi = 0.5;  // per-unit inclusion probability (bernoulli)
    double state_prob = 0.8;    // P(state retained) in the first stage
    std::vector<std::size_t> cities_per_state;  // optional; checked against the population tags
    std::size_t units_per_city = 0;             // optional bookkeeping
    std::size_t n_population = 0;

    void validate() const;
};

/// Sampled rows together with their inclusion probabilities. Row weights are
/// defined as exactly 1/pi_i.
struct WeightedSample {
    Dataset rows;
    std::vector<double> inclusion_prob;
};

/// Discrete distribution over real atoms, optionally with a point mass at
/// +infinity. Construction sorts atoms by value and normalizes total mass
/// (finite atoms + infinity) to 1.
struct WeightedEmpirical {
    struct Atom {
        double value;
        double mass;
    };
    std::vector<Atom> atoms;
    double mass_at_infinity = 0.0;

    static WeightedEmpirical make(std::span<const double> values,
                                  std::span<const double> masses,
                                  double infinity_mass = 0.0);

    double total_finite_mass() const;
};

/// Horvitz-Thompson estimate (1/N) * sum values_i / pi_i over observed units.
double ht_mean(std::span<const double> values, std::span<const double> inclusion_probs,
               std::size_t population_size);

/// Left-continuous inverse CDF: the smallest atom value whose cumulative mass
/// (running left-to-right over the sorted atoms) reaches `level`. Returns
/// +infinity when the level is only attained by the infinity atom, or when
/// level >= 1 and no finite atom attains it.
double weighted_quantile(const WeightedEmpirical& d, double level);

/// Covariate-shift probability masses: p_i = w_i / (sum_j w_j + w_test) for
/// the n calibration weights, followed by p_{n+1} for the test point.
std::vector<double> covariate_shift_weights(std::span<const double> train_w, double test_w);

/// Generative models for the simulation study: 10 standard-normal covariates,
/// Bernoulli label with logistic success probability.
enum class Scenario { a, b };

/// P(Y=1 | X=x) for the chosen scenario.
double scenario_prob(Scenario s, std::span<const double> x);

/// Simulated finite population of n units: X ~ N(0, I_10),
/// Y | X ~ Bernoulli(scenario_prob), plus synthetic state/city tags for the
/// two-stage sampler (states of 3-8 cities, balanced city sizes). Each row is
/// generated from its own RNG stream, so the OpenMP and serial versions
/// produce bit-identical output.
Dataset generate_population(Scenario s, std::size_t n, std::uint64_t seed,
                            std::size_t city_size = 50);

/// Serial reference for generate_population, kept for parity tests.
Dataset generate_population_serial(Scenario s, std::size_t n, std::uint64_t seed,
                                   std::size_t city_size = 50);

/// Two-stage cluster draw: each state retained independently with probability
/// state_prob, one city per retained state chosen uniformly, all units of the
/// chosen city included. pi_i = state_prob / n_cities(state).
WeightedSample draw_two_stage_sample(const SurveyDesign& design, const Dataset& population,
                                     std::uint64_t seed);

/// Draw under any supported design (iid = census with pi = 1; bernoulli;
/// two-stage cluster).
WeightedSample draw_sample(const SurveyDesign& design, const Dataset& population,
                           std::uint64_t seed);

} // namespace svynn
