#pragma once

#include <cstdint>
#include <string>

namespace svynn {

/// Writes a synthetic diabetes-cohort extract in the pipeline's input CSV
/// schema (id, weight, age, ..., glucose, hba1c, prior_dx). Class-conditional
/// Gaussian draws follow the reference cohort summary statistics; labels are
/// coherent with the ADA rule (non-diabetic rows are truncated below both
/// biomarker thresholds, diabetic rows without a biomarker hit carry a prior
/// diagnosis). Intended as a stand-in when no real extract is available.
void write_synthetic_extract(const std::string& path, std::size_t n, std::uint64_t seed);

} // namespace svynn
