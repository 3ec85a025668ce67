#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svynn/conformal.hpp"
#include "svynn/csv.hpp"
#include "svynn/dataset.hpp"
#include "svynn/metrics.hpp"
#include "svynn/numnet.hpp"
#include "svynn/survey.hpp"

namespace svynn {

/// One of the seven reference diabetes model configurations: the variable
/// list (as input CSV column names) and the cost figure.
struct ModelSpec {
    int id = 0;
    std::vector<std::string> variables;
    double cost = 0.0;
};

/// Reference variable set and cost for model ids 1..7.
ModelSpec model_spec(int id);

/// ADA diagnostic label: 1 iff FPG >= 126 mg/dL, or HbA1c >= 6.5%, or a prior
/// diagnosis. Missing inputs count as not met; all three missing is an error
/// (the row has no label).
int ada_label(std::optional<double> fpg_mg_dl, std::optional<double> hba1c_percent,
              std::optional<bool> prior_dx);

/// Disjoint exhaustive random partition with exact largest-remainder sizes.
std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<double, 3> fractions,
                                     std::uint64_t seed);

/// Z-score standardization fitted with weighted means/sds on a training split
/// and applied to every split.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> sd;

    static Standardizer fit(const Dataset& ds);
    void apply(Dataset& ds) const;
    std::vector<double> apply_row(std::span<const double> x) const;
};

struct ArchSelection {
    TrainConfig config;       // base config with the winning hidden widths
    NetworkParams net;        // network already trained on the training split
    double selection_loss = 0.0;  // weighted cross-entropy on the selection split
};

/// Trains every candidate width list on `train`, evaluates weighted
/// cross-entropy on `selection`, and returns the winner. Exact loss ties go
/// to the smaller parameter count.
ArchSelection select_architecture(const Dataset& train, const Dataset& selection,
                                  const std::vector<std::vector<std::size_t>>& candidates,
                                  const TrainConfig& base);

/// Shared experiment settings; mirrors the JSON config file. CLI flags
/// override individual fields.
struct ExperimentConfig {
    std::string scenario = "a";                  // generative model: a or b
    std::size_t n = 5000;                        // population size per replicate
    std::size_t reps = 20;                       // replicates B
    std::vector<double> alpha{0.8, 0.9, 0.95};   // target coverage levels
    std::array<double, 3> split{0.5, 0.3, 0.2};
    std::size_t repeats = 10;                    // NHANES re-split count
    std::uint64_t seed = 42;
    double state_prob = 0.8;
    std::size_t city_size = 50;
    std::string method = "cqc";                  // coverage method: cqc or split
    std::string score_weighting = "literal";     // literal or plain
    std::vector<std::vector<std::size_t>> hidden_grid{{16}, {32, 16}, {64, 32}};
    std::size_t epochs = 400;
    double learning_rate = 5e-3;
    std::size_t batch_size = 0;                  // 0 = full batch
    double weight_decay = 100.0;
    int threads = 0;                             // 0 = library default

    static ExperimentConfig from_json_file(const std::string& path);
    std::string to_json() const;
    /// FNV-1a over the canonical JSON; stamped on every output row.
    std::string config_hash() const;
    void validate() const;
};

struct SimulationResult {
    std::vector<MetricsReport> replicates;
    // aggregate rows in fixed order: auc, accuracy, recall, precision, f1,
    // cross_entropy; each as (mean, sd)
    std::vector<std::string> metric_names;
    std::vector<double> mean;
    std::vector<double> sd;
};

/// Per replicate: generate a population, draw the two-stage sample, split
/// 50/30/20, pick the architecture, train, evaluate on the test part.
/// Writes simulation_summary.csv and simulation_replicates.csv to out_dir
/// when non-empty.
SimulationResult run_simulation(const ExperimentConfig& cfg, const std::string& out_dir);

struct CoverageRow {
    double alpha = 0.9;  // target coverage level
    std::size_t n = 0;
    std::size_t replicate = 0;
    double coverage = 0.0;
    double mean_set_size = 0.0;
};

struct CoverageRunResult {
    std::vector<CoverageRow> rows;  // reps x alpha rows
};

/// Per replicate and target level: fit CQC (or a split regression conformal
/// band per cfg.method) on a survey draw, then evaluate survey-weighted
/// coverage on an independent draw from a fresh population of 5000 units.
/// Writes coverage_boxplot.csv and coverage_summary.csv when out_dir is
/// non-empty.
CoverageRunResult run_coverage(const ExperimentConfig& cfg, const std::string& out_dir);

struct NhanesModelResult {
    int model_id = 0;
    double cost = 0.0;
    std::size_t n_rows = 0;
    MetricsReport mean_metrics;                // averaged over repeats
    std::vector<MetricsReport> per_repeat;
    CoverageResult coverage;                   // CQC on the held-out half-test
    double auc_sd = 0.0;
};

struct NhanesResult {
    std::vector<NhanesModelResult> models;
};

/// NHANES-style model suite over an ingested extract: per model id, repeated
/// 50/30/20 re-splits with architecture selection, survey-weighted metrics on
/// the test part, CQC calibration, and a per-record score export
/// (id, score for class 1, set size, glucose/pulse/age).
NhanesResult run_nhanes(const std::string& csv_path, const std::vector<int>& model_ids,
                        double alpha_level, const ExperimentConfig& cfg,
                        const std::string& out_dir);

} // namespace svynn
