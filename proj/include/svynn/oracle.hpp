#pragma once

// Brute-force reference implementations used by the test suites and the
// `quantile-oracle` CLI subcommand. Deliberately straight-line re-statements
// of the definitions, independent of the production code paths they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "svynn/survey.hpp"

namespace svynn::oracle {

/// O(n^2)-style weighted quantile: re-sorts the atoms and sweeps a fresh
/// running mass for every query.
inline double weighted_quantile_scan(const WeightedEmpirical& d, double level) {
    std::vector<WeightedEmpirical::Atom> atoms(d.atoms.begin(), d.atoms.end());
    std::stable_sort(atoms.begin(), atoms.end(),
                     [](const auto& a, const auto& b) { return a.value < b.value; });
    double cum = 0.0;
    for (const auto& atom : atoms) {
        cum += atom.mass;
        if (cum >= level) return atom.value;
    }
    if (d.mass_at_infinity > 0.0 || level >= 1.0 || atoms.empty())
        return std::numeric_limits<double>::infinity();
    return atoms.back().value;
}

/// Pair-enumeration weighted AUC straight from the formula:
/// numerator rows w_i * sum_j w_j k(p_i,p_j) over positives in index order,
/// denominator W_D * W_ND.
inline double weighted_auc_pairs(std::span<const double> scores,
                                 std::span<const double> labels,
                                 std::span<const double> weights) {
    double num = 0.0, w_pos = 0.0, w_neg = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 1.0)
            w_pos += weights[i];
        else
            w_neg += weights[i];
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0.0) continue;
            double k = 0.0;
            if (scores[i] > scores[j])
                k = 1.0;
            else if (scores[i] == scores[j])
                k = 0.5;
            row += weights[j] * k;
        }
        num += weights[i] * row;
    }
    return num / (w_pos * w_neg);
}

/// Classical unweighted empirical quantile by order statistics: the smallest
/// value v with #(x <= v)/n >= level.
inline double order_statistic_quantile(std::vector<double> values, double level) {
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    for (std::size_t k = 0; k < values.size(); ++k)
        if ((static_cast<double>(k) + 1.0) / n >= level) return values[k];
    return values.back();
}

} // namespace svynn::oracle
