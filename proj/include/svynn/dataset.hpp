#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svynn/errors.hpp"

namespace svynn {

/// Rows of real-valued features with an optional label column, a survey
/// weight per row, record ids and optional state/city cluster tags.
/// The common currency between the sampler, the trainer and the evaluators.
struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<double> features;      // row-major, n_rows() * n_features()
    std::vector<double> labels;        // empty, or one entry per row
    std::vector<double> weights;       // one entry per row, all > 0
    std::vector<std::int64_t> ids;     // one entry per row
    std::vector<std::int32_t> state;   // empty, or one entry per row
    std::vector<std::int32_t> city;    // empty, or one entry per row

    std::size_t n_rows() const { return weights.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    bool has_labels() const { return !labels.empty(); }

    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * n_features(), n_features()};
    }

    void validate() const {
        const std::size_t n = n_rows();
        const std::size_t p = n_features();
        if (features.size() != n * p)
            throw invalid_input("Dataset: feature matrix size does not match rows x columns");
        if (!labels.empty() && labels.size() != n)
            throw invalid_input("Dataset: label column length mismatch");
        if (ids.size() != n)
            throw invalid_input("Dataset: id column length mismatch");
        if (!state.empty() && state.size() != n)
            throw invalid_input("Dataset: state column length mismatch");
        if (!city.empty() && city.size() != n)
            throw invalid_input("Dataset: city column length mismatch");
        for (double w : weights)
            if (!(w > 0.0))
                throw invalid_input("Dataset: survey weights must be strictly positive");
    }

    /// New dataset holding the given rows, in the given order.
    Dataset subset(std::span<const std::size_t> rows_idx) const {
        Dataset out;
        out.feature_names = feature_names;
        const std::size_t p = n_features();
        out.features.reserve(rows_idx.size() * p);
        out.weights.reserve(rows_idx.size());
        out.ids.reserve(rows_idx.size());
        for (std::size_t i : rows_idx) {
            auto r = row(i);
            out.features.insert(out.features.end(), r.begin(), r.end());
            if (!labels.empty()) out.labels.push_back(labels[i]);
            out.weights.push_back(weights[i]);
            out.ids.push_back(ids[i]);
            if (!state.empty()) out.state.push_back(state[i]);
            if (!city.empty()) out.city.push_back(city[i]);
        }
        return out;
    }
};

} // namespace svynn
