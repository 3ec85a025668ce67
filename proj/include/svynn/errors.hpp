#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace svynn {

/// Precondition violation: bad dimensions, out-of-range arguments, empty inputs.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input file does not match the declared schema (missing column, wrong header).
struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Metric requested on data where it has no definition (e.g. AUC on one class).
struct undefined_metric : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operation called on an object in the wrong state (e.g. predict before calibrate).
struct invalid_state : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Optimizer produced a non-finite loss or non-finite parameters.
struct training_diverged : std::runtime_error {
    training_diverged(std::size_t epoch_, const std::string& msg)
        : std::runtime_error(msg), epoch(epoch_) {}
    std::size_t epoch;
};

} // namespace svynn
