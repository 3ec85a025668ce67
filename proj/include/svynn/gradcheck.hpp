#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace svynn {

/// One row of the finite-difference battery: worst relative gradient error
/// over all checked networks for a single loss configuration.
struct GradCheckResult {
    std::string loss;
    double max_rel_error = 0.0;
    std::size_t nets_checked = 0;
    bool pass = false;
};

/// Backprop vs central finite differences (step 1e-6) on random networks of
/// at most `max_params` parameters, for weighted cross-entropy, pinball at
/// alpha in {0.1, 0.5, 0.9} and weighted MSE. Relative error is measured as
/// ||g_bp - g_fd|| / max(||g_bp||, ||g_fd||).
std::vector<GradCheckResult> run_gradient_battery(std::size_t n_nets, std::uint64_t seed,
                                                  double tolerance = 1e-5,
                                                  std::size_t max_params = 200);

} // namespace svynn
