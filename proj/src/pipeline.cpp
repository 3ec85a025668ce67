#include "svynn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"
#include "svynn/rng.hpp"

namespace svynn {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c69ULL;

// per-replicate sub-seed channels
enum : std::uint64_t {
    kChPopulation = 1,
    kChSample = 2,
    kChSplit = 3,
    kChTrain = 4,
    kChTestPop = 5,
    kChTestSample = 6
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path);
    if (!out) throw schema_error("cannot open output file: " + path);
    return out;
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                      std::array<double, 3> fractions,
                                                      std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw invalid_input("split fractions must be positive");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw invalid_input("split fractions must sum to 1");
    if (n < 10) throw invalid_input("split_dataset: need at least 10 rows");

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed, kSplitStream);
    rng.shuffle(perm);

    // exact sizes by largest remainder
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = fractions[k] * static_cast<double>(n);
        sizes[k] = static_cast<std::size_t>(std::floor(exact));
        frac[k] = exact - std::floor(exact);
        assigned += sizes[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < n; ++assigned, ++k) sizes[order[k % 3]]++;

    std::array<std::vector<std::size_t>, 3> parts;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        parts[k].assign(perm.begin() + offset, perm.begin() + offset + sizes[k]);
        std::sort(parts[k].begin(), parts[k].end());
        offset += sizes[k];
    }
    return parts;
}

struct Aggregate {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double sd = std::numeric_limits<double>::quiet_NaN();
};

Aggregate aggregate(const std::vector<double>& values) {
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    if (v.empty()) return {};
    Aggregate a;
    double s = 0.0;
    for (double x : v) s += x;
    a.mean = s / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - a.mean) * (x - a.mean);
        a.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    } else {
        a.sd = 0.0;
    }
    return a;
}

double order_quantile(std::vector<double> v, double level) {
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        if ((static_cast<double>(k) + 1.0) / n >= level) return v[k];
    return v.back();
}

Scenario parse_scenario(const std::string& s) {
    if (s == "a") return Scenario::a;
    if (s == "b") return Scenario::b;
    throw invalid_input("scenario must be 'a' or 'b'");
}

ScoreWeighting parse_weighting(const std::string& s) {
    if (s == "literal") return ScoreWeighting::literal;
    if (s == "plain") return ScoreWeighting::plain;
    throw invalid_input("score weighting must be 'literal' or 'plain'");
}

void apply_thread_config(const ExperimentConfig& cfg) {
#ifdef _OPENMP
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#else
    (void)cfg;
#endif
}

WeightedSample sample_rows_subset(const WeightedSample& s, const Dataset& std_rows,
                                  std::span<const std::size_t> idx) {
    WeightedSample out;
    out.rows = std_rows.subset(idx);
    out.inclusion_prob.reserve(idx.size());
    for (std::size_t i : idx) out.inclusion_prob.push_back(s.inclusion_prob[i]);
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// model specs / labels / splits / standardization / architecture selection
// ---------------------------------------------------------------------------

ModelSpec model_spec(int id) {
    const std::vector<std::string> anthro{"height", "weight_kg", "bmi",  "waist",
                                          "dbp",    "sbp",       "pulse"};
    ModelSpec spec;
    spec.id = id;
    switch (id) {
        case 1:
            spec.variables = {"age", "gender"};
            spec.cost = 0.0;
            break;
        case 2:
            spec.variables = anthro;
            spec.cost = 0.0;
            break;
        case 3:
            spec.variables = {"age"};
            spec.variables.insert(spec.variables.end(), anthro.begin(), anthro.end());
            spec.variables.push_back("gender");
            spec.cost = 0.0;
            break;
        case 4:
        case 5:
        case 6:
        case 7:
            spec.variables = {"age"};
            spec.variables.insert(spec.variables.end(), anthro.begin(), anthro.end());
            spec.variables.push_back("cholesterol");
            spec.variables.push_back("triglycerides");
            spec.variables.push_back("gender");
            if (id == 4) spec.cost = 0.5;
            if (id == 5) {
                spec.variables.push_back("hba1c");
                spec.cost = 4.5;
            }
            if (id == 6) {
                spec.variables.push_back("glucose");
                spec.cost = 2.1;
            }
            if (id == 7) {
                spec.variables.push_back("glucose");
                spec.variables.push_back("hba1c");
                spec.cost = 6.1;
            }
            break;
        default:
            throw invalid_input("model_spec: id must be in 1..7");
    }
    return spec;
}

int ada_label(std::optional<double> fpg_mg_dl, std::optional<double> hba1c_percent,
              std::optional<bool> prior_dx) {
    if (!fpg_mg_dl && !hba1c_percent && !prior_dx)
        throw invalid_input("ada_label: all three diagnostic inputs are missing");
    if (fpg_mg_dl && *fpg_mg_dl < 0.0)
        throw invalid_input("ada_label: FPG must be nonnegative");
    if (hba1c_percent && *hba1c_percent < 0.0)
        throw invalid_input("ada_label: HbA1c must be nonnegative");
    const bool positive = (fpg_mg_dl && *fpg_mg_dl >= 126.0) ||
                          (hba1c_percent && *hba1c_percent >= 6.5) ||
                          (prior_dx && *prior_dx);
    return positive ? 1 : 0;
}

std::array<Dataset, 3> split_dataset(const Dataset& ds, std::array<double, 3> fractions,
                                     std::uint64_t seed) {
    ds.validate();
    const auto parts = split_indices(ds.n_rows(), fractions, seed);
    return {ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
}

Standardizer Standardizer::fit(const Dataset& ds) {
    const std::size_t p = ds.n_features();
    Standardizer s;
    s.mean.assign(p, 0.0);
    s.sd.assign(p, 1.0);
    double wsum = 0.0;
    for (double w : ds.weights) wsum += w;
    if (!(wsum > 0.0)) throw invalid_input("Standardizer: no rows");
    for (std::size_t j = 0; j < p; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < ds.n_rows(); ++i) m += ds.weights[i] * ds.row(i)[j];
        m /= wsum;
        double var = 0.0;
        for (std::size_t i = 0; i < ds.n_rows(); ++i) {
            const double d = ds.row(i)[j] - m;
            var += ds.weights[i] * d * d;
        }
        var /= wsum;
        s.mean[j] = m;
        s.sd[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
}

void Standardizer::apply(Dataset& ds) const {
    const std::size_t p = ds.n_features();
    if (mean.size() != p) throw invalid_input("Standardizer: feature count mismatch");
    for (std::size_t i = 0; i < ds.n_rows(); ++i)
        for (std::size_t j = 0; j < p; ++j) {
            double& v = ds.features[i * p + j];
            v = (v - mean[j]) / sd[j];
        }
}

std::vector<double> Standardizer::apply_row(std::span<const double> x) const {
    if (x.size() != mean.size()) throw invalid_input("Standardizer: feature count mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / sd[j];
    return out;
}

ArchSelection select_architecture(const Dataset& train_set, const Dataset& selection,
                                  const std::vector<std::vector<std::size_t>>& candidates,
                                  const TrainConfig& base) {
    if (candidates.empty()) throw invalid_input("select_architecture: no candidates");

    bool have_best = false;
    ArchSelection best;
    std::size_t diverged = 0;
    for (const auto& widths : candidates) {
        TrainConfig cfg = base;
        cfg.hidden_widths = widths;
        cfg.loss_kind = LossKind::weighted_cross_entropy;
        NetworkParams net;
        try {
            net = train(train_set, cfg).params;
        } catch (const training_diverged&) {
            ++diverged;
            continue;
        }
        const double loss = weighted_cross_entropy(net, selection).value;
        const bool wins =
            !have_best || loss < best.selection_loss ||
            (loss == best.selection_loss && net.param_count() < best.net.param_count());
        if (wins) {
            best.config = cfg;
            best.net = std::move(net);
            best.selection_loss = loss;
            have_best = true;
        }
    }
    if (!have_best)
        throw training_diverged(0, "select_architecture: all " +
                                       std::to_string(diverged) + " candidates diverged");
    return best;
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    parse_scenario(scenario);
    parse_weighting(score_weighting);
    if (method != "cqc" && method != "split")
        throw invalid_input("method must be 'cqc' or 'split'");
    if (n == 0 || reps == 0 || repeats == 0 || epochs == 0)
        throw invalid_input("n, reps, repeats and epochs must be positive");
    for (double a : alpha)
        if (!(a > 0.0 && a < 1.0)) throw invalid_input("alpha levels must lie in (0,1)");
    if (alpha.empty()) throw invalid_input("at least one alpha level is required");
    double total = 0.0;
    for (double f : split) {
        if (!(f > 0.0)) throw invalid_input("split fractions must be positive");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw invalid_input("split fractions must sum to 1");
    if (!(learning_rate > 0.0)) throw invalid_input("learning_rate must be positive");
    if (weight_decay < 0.0) throw invalid_input("weight_decay must be nonnegative");
    if (!(state_prob > 0.0 && state_prob <= 1.0))
        throw invalid_input("state_prob must lie in (0,1]");
    if (city_size == 0) throw invalid_input("city_size must be positive");
    if (hidden_grid.empty()) throw invalid_input("hidden_grid must be nonempty");
}

std::string ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["scenario"] = scenario;
    j["n"] = n;
    j["reps"] = reps;
    j["alpha"] = alpha;
    j["split"] = split;
    j["repeats"] = repeats;
    j["seed"] = seed;
    j["state_prob"] = state_prob;
    j["city_size"] = city_size;
    j["method"] = method;
    j["score_weighting"] = score_weighting;
    j["hidden_grid"] = hidden_grid;
    j["epochs"] = epochs;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["weight_decay"] = weight_decay;
    j["threads"] = threads;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw schema_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("config parse error in " + path + ": " + e.what());
    }
    ExperimentConfig cfg;
    cfg.scenario = j.value("scenario", cfg.scenario);
    cfg.n = j.value("n", cfg.n);
    cfg.reps = j.value("reps", cfg.reps);
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.split = j.value("split", cfg.split);
    cfg.repeats = j.value("repeats", cfg.repeats);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.state_prob = j.value("state_prob", cfg.state_prob);
    cfg.city_size = j.value("city_size", cfg.city_size);
    cfg.method = j.value("method", cfg.method);
    cfg.score_weighting = j.value("score_weighting", cfg.score_weighting);
    cfg.hidden_grid = j.value("hidden_grid", cfg.hidden_grid);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.threads = j.value("threads", cfg.threads);
    return cfg;
}

std::string ExperimentConfig::config_hash() const { return hex64(fnv1a64(to_json())); }

// ---------------------------------------------------------------------------
// simulation experiment
// ---------------------------------------------------------------------------

namespace {

struct ReplicateArtifacts {
    Standardizer standardizer;
    ArchSelection selection;
    WeightedSample sample;   // standardized features
    Dataset test;            // standardized features
};

/// Front half of a simulation replicate: population, survey draw, 50/30/20
/// split, standardization, architecture selection.
ReplicateArtifacts fit_replicate(const ExperimentConfig& cfg, std::size_t rep) {
    const Scenario sc = parse_scenario(cfg.scenario);
    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    design.state_prob = cfg.state_prob;

    const Dataset population =
        generate_population(sc, cfg.n, mix_seed(cfg.seed, rep, kChPopulation), cfg.city_size);
    WeightedSample sample =
        draw_two_stage_sample(design, population, mix_seed(cfg.seed, rep, kChSample));

    const auto parts =
        split_indices(sample.rows.n_rows(), cfg.split, mix_seed(cfg.seed, rep, kChSplit));

    ReplicateArtifacts art;
    Dataset train_rows = sample.rows.subset(parts[0]);
    art.standardizer = Standardizer::fit(train_rows);

    Dataset std_rows = sample.rows;
    art.standardizer.apply(std_rows);

    TrainConfig base;
    base.learning_rate = cfg.learning_rate;
    base.epochs = cfg.epochs;
    base.batch_size = cfg.batch_size;
    base.seed = mix_seed(cfg.seed, rep, kChTrain);
    base.loss_kind = LossKind::weighted_cross_entropy;
    base.n_classes = 2;
    base.weight_decay = cfg.weight_decay;

    art.selection = select_architecture(std_rows.subset(parts[0]), std_rows.subset(parts[1]),
                                        cfg.hidden_grid, base);
    art.test = std_rows.subset(parts[2]);
    art.sample.rows = std::move(std_rows);
    art.sample.inclusion_prob = sample.inclusion_prob;
    return art;
}

} // namespace

SimulationResult run_simulation(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    apply_thread_config(cfg);

    std::vector<MetricsReport> reports(cfg.reps);
    std::vector<std::string> failures(cfg.reps);
#pragma omp parallel for schedule(dynamic, 1)
    for (long b = 0; b < static_cast<long>(cfg.reps); ++b) {
        const auto rep = static_cast<std::size_t>(b);
        try {
            ReplicateArtifacts art = fit_replicate(cfg, rep);
            const std::vector<double> probs =
                predict_positive_prob(art.selection.net, art.test);
            reports[rep] =
                evaluate_binary(probs, art.test.labels, art.test.weights);
        } catch (const std::exception& e) {
            failures[rep] = e.what();
        }
    }
    for (std::size_t rep = 0; rep < cfg.reps; ++rep)
        if (!failures[rep].empty())
            throw training_diverged(rep, "replicate " + std::to_string(rep) +
                                             " failed: " + failures[rep]);

    SimulationResult result;
    result.replicates = reports;
    result.metric_names = {"auc", "accuracy", "recall", "precision", "f1", "cross_entropy"};
    auto column = [&](auto getter) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(getter(r));
        return v;
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::vector<std::vector<double>> columns = {
        column([](const MetricsReport& r) { return r.auc; }),
        column([](const MetricsReport& r) { return r.accuracy; }),
        column([nan](const MetricsReport& r) { return r.recall.value_or(nan); }),
        column([nan](const MetricsReport& r) { return r.precision.value_or(nan); }),
        column([nan](const MetricsReport& r) { return r.f1.value_or(nan); }),
        column([](const MetricsReport& r) { return r.cross_entropy; })};
    for (const auto& col : columns) {
        const Aggregate a = aggregate(col);
        result.mean.push_back(a.mean);
        result.sd.push_back(a.sd);
    }

    if (!out_dir.empty()) {
        const std::string hash = cfg.config_hash();
        auto summary = open_out(out_dir, "simulation_summary.csv");
        summary << "metric,mean,sd,scenario,n,reps,seed,config_hash\n";
        for (std::size_t k = 0; k < result.metric_names.size(); ++k)
            summary << result.metric_names[k] << ',' << fmt(result.mean[k]) << ','
                    << fmt(result.sd[k]) << ',' << cfg.scenario << ',' << cfg.n << ','
                    << cfg.reps << ',' << cfg.seed << ',' << hash << '\n';

        auto reps_out = open_out(out_dir, "simulation_replicates.csv");
        reps_out << "replicate,auc,accuracy,recall,precision,f1,cross_entropy,config_hash\n";
        for (std::size_t rep = 0; rep < reports.size(); ++rep) {
            const MetricsReport& r = reports[rep];
            reps_out << rep << ',' << fmt(r.auc) << ',' << fmt(r.accuracy) << ','
                     << fmt_opt(r.recall) << ',' << fmt_opt(r.precision) << ','
                     << fmt_opt(r.f1) << ',' << fmt(r.cross_entropy) << ',' << hash << '\n';
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// coverage experiment
// ---------------------------------------------------------------------------

namespace {

/// Split-conformal regression fallback for the coverage study: a weighted-MSE
/// network on I1+I2 with residual calibration on I3.
std::vector<PredictionSet> split_method_sets(const ExperimentConfig& cfg,
                                             const WeightedSample& std_sample,
                                             const std::array<std::vector<std::size_t>, 3>& parts,
                                             const Dataset& test_std, double alpha_mis,
                                             std::uint64_t seed) {
    std::vector<std::size_t> fit_idx(parts[0]);
    fit_idx.insert(fit_idx.end(), parts[1].begin(), parts[1].end());
    std::sort(fit_idx.begin(), fit_idx.end());

    TrainConfig cfg_reg;
    cfg_reg.hidden_widths = cfg.hidden_grid.front();
    cfg_reg.learning_rate = cfg.learning_rate;
    cfg_reg.epochs = cfg.epochs;
    cfg_reg.batch_size = cfg.batch_size;
    cfg_reg.seed = seed;
    cfg_reg.loss_kind = LossKind::weighted_mse;
    cfg_reg.weight_decay = cfg.weight_decay;
    const NetworkParams reg =
        train(std_sample.rows.subset(fit_idx), cfg_reg).params;

    const WeightedSample calibration =
        sample_rows_subset(std_sample, std_sample.rows, parts[2]);
    std::vector<PredictionSet> sets(test_std.n_rows());
    for (std::size_t i = 0; i < test_std.n_rows(); ++i)
        sets[i] = split_conformal_interval(reg, calibration, test_std.row(i), alpha_mis);
    return sets;
}

} // namespace

CoverageRunResult run_coverage(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    apply_thread_config(cfg);
    const Scenario sc = parse_scenario(cfg.scenario);
    const ScoreWeighting weighting = parse_weighting(cfg.score_weighting);

    SurveyDesign design;
    design.kind = SurveyDesign::Kind::two_stage_cluster;
    design.state_prob = cfg.state_prob;

    const std::size_t n_alpha = cfg.alpha.size();
    std::vector<CoverageRow> rows(cfg.reps * n_alpha);
    std::vector<std::string> failures(cfg.reps);

#pragma omp parallel for schedule(dynamic, 1)
    for (long b = 0; b < static_cast<long>(cfg.reps); ++b) {
        const auto rep = static_cast<std::size_t>(b);
        try {
            const Dataset population = generate_population(
                sc, cfg.n, mix_seed(cfg.seed, rep, kChPopulation), cfg.city_size);
            WeightedSample sample = draw_two_stage_sample(
                design, population, mix_seed(cfg.seed, rep, kChSample));
            const auto parts = split_indices(sample.rows.n_rows(), cfg.split,
                                             mix_seed(cfg.seed, rep, kChSplit));

            const Standardizer standardizer =
                Standardizer::fit(sample.rows.subset(parts[0]));
            Dataset std_rows = sample.rows;
            standardizer.apply(std_rows);
            WeightedSample std_sample{std_rows, sample.inclusion_prob};

            // independent test draw from a fresh population of 5000 units
            const Dataset test_pop = generate_population(
                sc, 5000, mix_seed(cfg.seed, rep, kChTestPop), cfg.city_size);
            const WeightedSample test_sample = draw_two_stage_sample(
                design, test_pop, mix_seed(cfg.seed, rep, kChTestSample));
            Dataset test_std = test_sample.rows;
            standardizer.apply(test_std);

            for (std::size_t ai = 0; ai < n_alpha; ++ai) {
                const double level = cfg.alpha[ai];
                const double alpha_mis = 1.0 - level;
                std::vector<PredictionSet> sets;
                if (cfg.method == "cqc") {
                    TrainConfig cfg_net;
                    cfg_net.hidden_widths = cfg.hidden_grid.front();
                    cfg_net.learning_rate = cfg.learning_rate;
                    cfg_net.epochs = cfg.epochs;
                    cfg_net.batch_size = cfg.batch_size;
                    cfg_net.seed = mix_seed(cfg.seed, rep, kChTrain);
                    cfg_net.n_classes = 2;
                    cfg_net.weight_decay = cfg.weight_decay;
                    CqcModel model = cqc_fit(std_sample, parts[0], parts[1], alpha_mis,
                                             cfg_net, cfg_net, weighting);
                    model = cqc_calibrate(std::move(model), std_sample, parts[2]);
                    sets.resize(test_std.n_rows());
                    for (std::size_t i = 0; i < test_std.n_rows(); ++i)
                        sets[i] = cqc_predict_set(model, test_std.row(i));
                } else {
                    sets = split_method_sets(cfg, std_sample, parts, test_std, alpha_mis,
                                             mix_seed(cfg.seed, rep, kChTrain));
                }
                const CoverageResult cov = evaluate_coverage(
                    sets, test_sample.rows.labels, test_sample.rows.weights, true);
                rows[rep * n_alpha + ai] = {level, cfg.n, rep, cov.empirical_coverage,
                                            cov.mean_set_size};
            }
        } catch (const std::exception& e) {
            failures[rep] = e.what();
        }
    }
    for (std::size_t rep = 0; rep < cfg.reps; ++rep)
        if (!failures[rep].empty())
            throw training_diverged(rep, "replicate " + std::to_string(rep) +
                                             " failed: " + failures[rep]);

    CoverageRunResult result;
    result.rows = rows;

    if (!out_dir.empty()) {
        const std::string hash = cfg.config_hash();
        auto box = open_out(out_dir, "coverage_boxplot.csv");
        box << "alpha,n,replicate,coverage,mean_set_size,config_hash\n";
        // group rows per alpha for readable boxplot columns
        for (std::size_t ai = 0; ai < n_alpha; ++ai)
            for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
                const CoverageRow& r = rows[rep * n_alpha + ai];
                box << fmt(r.alpha) << ',' << r.n << ',' << r.replicate << ','
                    << fmt(r.coverage) << ',' << fmt(r.mean_set_size) << ',' << hash << '\n';
            }

        auto summary = open_out(out_dir, "coverage_summary.csv");
        summary << "alpha,n,reps,mean_coverage,sd_coverage,iqr_coverage,mean_set_size,"
                   "config_hash\n";
        for (std::size_t ai = 0; ai < n_alpha; ++ai) {
            std::vector<double> cov, size;
            for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
                cov.push_back(rows[rep * n_alpha + ai].coverage);
                size.push_back(rows[rep * n_alpha + ai].mean_set_size);
            }
            const Aggregate ac = aggregate(cov);
            const Aggregate as = aggregate(size);
            const double iqr = order_quantile(cov, 0.75) - order_quantile(cov, 0.25);
            summary << fmt(cfg.alpha[ai]) << ',' << cfg.n << ',' << cfg.reps << ','
                    << fmt(ac.mean) << ',' << fmt(ac.sd) << ',' << fmt(iqr) << ','
                    << fmt(as.mean) << ',' << hash << '\n';
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// NHANES-style suite
// ---------------------------------------------------------------------------

namespace {

std::optional<double> cell(const CsvTable& t, std::size_t col, std::size_t row) {
    return t.cells[col][row];
}

struct NhanesFrame {
    Dataset data;  // unstandardized features for one model spec
    std::vector<std::optional<double>> glucose, pulse, age;  // aligned covariate export
};

NhanesFrame assemble_model_frame(const CsvTable& table, const ModelSpec& spec,
                                 std::vector<std::string>* warnings) {
    const std::size_t id_col = table.column_index("id");
    const std::size_t weight_col = table.column_index("weight");
    const std::size_t glucose_col = table.column_index("glucose");
    const std::size_t hba1c_col = table.column_index("hba1c");
    const std::size_t prior_col = table.column_index("prior_dx");
    const std::size_t pulse_col = table.column_index("pulse");
    const std::size_t age_col = table.column_index("age");
    std::vector<std::size_t> feature_cols;
    for (const std::string& v : spec.variables) feature_cols.push_back(table.column_index(v));

    NhanesFrame frame;
    frame.data.feature_names = spec.variables;
    std::size_t unlabeled = 0, incomplete = 0;
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        const auto fpg = cell(table, glucose_col, r);
        const auto hba1c = cell(table, hba1c_col, r);
        const auto prior_raw = cell(table, prior_col, r);
        std::optional<bool> prior;
        if (prior_raw) prior = *prior_raw > 0.5;
        int label = 0;
        try {
            label = ada_label(fpg, hba1c, prior);
        } catch (const invalid_input&) {
            ++unlabeled;
            continue;
        }
        bool complete = cell(table, id_col, r).has_value() &&
                        cell(table, weight_col, r).has_value();
        for (std::size_t c : feature_cols) complete = complete && cell(table, c, r).has_value();
        if (!complete || !(*cell(table, weight_col, r) > 0.0)) {
            ++incomplete;
            continue;
        }
        for (std::size_t c : feature_cols) frame.data.features.push_back(*cell(table, c, r));
        frame.data.labels.push_back(static_cast<double>(label));
        frame.data.weights.push_back(*cell(table, weight_col, r));
        frame.data.ids.push_back(static_cast<std::int64_t>(*cell(table, id_col, r)));
        frame.glucose.push_back(fpg);
        frame.pulse.push_back(cell(table, pulse_col, r));
        frame.age.push_back(cell(table, age_col, r));
    }
    if (warnings && (unlabeled > 0 || incomplete > 0))
        warnings->push_back("model " + std::to_string(spec.id) + ": excluded " +
                            std::to_string(unlabeled) + " unlabeled and " +
                            std::to_string(incomplete) + " incomplete rows");
    return frame;
}

} // namespace

NhanesResult run_nhanes(const std::string& csv_path, const std::vector<int>& model_ids,
                        double alpha_level, const ExperimentConfig& cfg,
                        const std::string& out_dir) {
    cfg.validate();
    apply_thread_config(cfg);
    if (!(alpha_level > 0.0 && alpha_level < 1.0))
        throw invalid_input("alpha level must lie in (0,1)");
    if (model_ids.empty()) throw invalid_input("run_nhanes: no model ids");
    const double alpha_mis = 1.0 - alpha_level;
    const ScoreWeighting weighting = parse_weighting(cfg.score_weighting);

    const CsvTable table = load_csv_table(csv_path);
    for (const std::string& w : table.warnings) std::cerr << "[csv] " << w << "\n";

    // check every needed column before any training
    std::vector<ModelSpec> specs;
    for (int id : model_ids) {
        specs.push_back(model_spec(id));
        for (const std::string& v : specs.back().variables) table.column_index(v);
    }
    for (const char* c : {"id", "weight", "glucose", "hba1c", "prior_dx", "pulse", "age"})
        table.column_index(c);

    // cohort age range is logged rather than filtered
    {
        const std::size_t age_col = table.column_index("age");
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t r = 0; r < table.n_rows(); ++r)
            if (table.cells[age_col][r]) {
                lo = std::min(lo, *table.cells[age_col][r]);
                hi = std::max(hi, *table.cells[age_col][r]);
            }
        if (std::isfinite(lo))
            std::cerr << "[nhanes] age range in extract: " << lo << " to " << hi << "\n";
    }

    NhanesResult result;
    const std::string hash = cfg.config_hash();
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (std::size_t mi = 0; mi < specs.size(); ++mi) {
        const ModelSpec& spec = specs[mi];
        std::vector<std::string> warnings;
        const NhanesFrame frame = assemble_model_frame(table, spec, &warnings);
        for (const std::string& w : warnings) std::cerr << "[nhanes] " << w << "\n";
        if (frame.data.n_rows() < 10)
            throw invalid_input("model " + std::to_string(spec.id) +
                                ": too few usable rows after filtering");

        NhanesModelResult mres;
        mres.model_id = spec.id;
        mres.cost = spec.cost;
        mres.n_rows = frame.data.n_rows();
        mres.per_repeat.resize(cfg.repeats);

        std::vector<CoverageResult> covs(cfg.repeats);
        CqcModel last_model;
        Standardizer last_std;
        std::vector<std::string> failures(cfg.repeats);

#pragma omp parallel for schedule(dynamic, 1)
        for (long rr = 0; rr < static_cast<long>(cfg.repeats); ++rr) {
            const auto rep = static_cast<std::size_t>(rr);
            try {
                const std::uint64_t rep_seed =
                    mix_seed(cfg.seed, static_cast<std::uint64_t>(spec.id), rep);
                const auto parts =
                    split_indices(frame.data.n_rows(), cfg.split, mix_seed(rep_seed, kChSplit));
                const Standardizer standardizer =
                    Standardizer::fit(frame.data.subset(parts[0]));
                Dataset std_rows = frame.data;
                standardizer.apply(std_rows);

                TrainConfig base;
                base.learning_rate = cfg.learning_rate;
                base.epochs = cfg.epochs;
                base.batch_size = cfg.batch_size;
                base.seed = mix_seed(rep_seed, kChTrain);
                base.n_classes = 2;
                base.weight_decay = cfg.weight_decay;
                const ArchSelection sel = select_architecture(
                    std_rows.subset(parts[0]), std_rows.subset(parts[1]), cfg.hidden_grid, base);

                const Dataset test = std_rows.subset(parts[2]);
                const std::vector<double> probs = predict_positive_prob(sel.net, test);
                mres.per_repeat[rep] = evaluate_binary(probs, test.labels, test.weights);

                // CQC: quantile fit on the selection split, calibration on the
                // first half of the test split, coverage on the second half
                WeightedSample sample;
                sample.rows = std_rows;
                sample.inclusion_prob.resize(std_rows.n_rows());
                for (std::size_t i = 0; i < std_rows.n_rows(); ++i)
                    sample.inclusion_prob[i] = 1.0 / std_rows.weights[i];

                std::vector<std::size_t> cal_idx(parts[2].begin(),
                                                 parts[2].begin() + parts[2].size() / 2);
                std::vector<std::size_t> eval_idx(parts[2].begin() + parts[2].size() / 2,
                                                  parts[2].end());
                TrainConfig qcfg = sel.config;
                CqcModel model = cqc_fit(sample, parts[0], parts[1], alpha_mis, sel.config,
                                         qcfg, weighting);
                model = cqc_calibrate(std::move(model), sample, cal_idx);

                std::vector<PredictionSet> sets(eval_idx.size());
                std::vector<double> truths(eval_idx.size()), wts(eval_idx.size());
                for (std::size_t k = 0; k < eval_idx.size(); ++k) {
                    sets[k] = cqc_predict_set(model, std_rows.row(eval_idx[k]));
                    truths[k] = std_rows.labels[eval_idx[k]];
                    wts[k] = std_rows.weights[eval_idx[k]];
                }
                covs[rep] = evaluate_coverage(sets, truths, wts, true);
                if (rep + 1 == cfg.repeats) {
                    last_model = model;
                    last_std = standardizer;
                }
            } catch (const std::exception& e) {
                failures[rep] = e.what();
            }
        }
        for (std::size_t rep = 0; rep < cfg.repeats; ++rep)
            if (!failures[rep].empty())
                throw training_diverged(rep, "model " + std::to_string(spec.id) + " repeat " +
                                                 std::to_string(rep) +
                                                 " failed: " + failures[rep]);

        // aggregate metrics over repeats
        auto mean_of = [&](auto getter) {
            std::vector<double> v;
            for (const auto& r : mres.per_repeat) v.push_back(getter(r));
            return aggregate(v);
        };
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const Aggregate auc_agg = mean_of([](const MetricsReport& r) { return r.auc; });
        mres.mean_metrics.auc = auc_agg.mean;
        mres.auc_sd = auc_agg.sd;
        mres.mean_metrics.accuracy =
            mean_of([](const MetricsReport& r) { return r.accuracy; }).mean;
        const Aggregate rec =
            mean_of([nan](const MetricsReport& r) { return r.recall.value_or(nan); });
        if (std::isfinite(rec.mean)) mres.mean_metrics.recall = rec.mean;
        const Aggregate prec =
            mean_of([nan](const MetricsReport& r) { return r.precision.value_or(nan); });
        if (std::isfinite(prec.mean)) mres.mean_metrics.precision = prec.mean;
        const Aggregate f1 =
            mean_of([nan](const MetricsReport& r) { return r.f1.value_or(nan); });
        if (std::isfinite(f1.mean)) mres.mean_metrics.f1 = f1.mean;
        mres.mean_metrics.cross_entropy =
            mean_of([](const MetricsReport& r) { return r.cross_entropy; }).mean;
        mres.mean_metrics.cross_entropy_raw =
            mean_of([](const MetricsReport& r) { return r.cross_entropy_raw; }).mean;
        mres.mean_metrics.n_eval = mres.per_repeat.back().n_eval;
        mres.mean_metrics.confusion = mres.per_repeat.back().confusion;

        {
            std::vector<double> c;
            for (const auto& cv : covs) c.push_back(cv.empirical_coverage);
            mres.coverage.empirical_coverage = aggregate(c).mean;
            std::vector<double> s;
            for (const auto& cv : covs) s.push_back(cv.mean_set_size);
            mres.coverage.mean_set_size = aggregate(s).mean;
            mres.coverage.n_eval = covs.back().n_eval;
            mres.coverage.alpha = alpha_mis;
        }

        if (!out_dir.empty()) {
            // per-record score/set-size export with the final repeat's model
            auto scores_out = open_out(
                out_dir, "nhanes_scores_model" + std::to_string(spec.id) + ".csv");
            scores_out << "id,score1,set_size,glucose,pulse,age,config_hash\n";
            for (std::size_t i = 0; i < frame.data.n_rows(); ++i) {
                const std::vector<double> x = last_std.apply_row(frame.data.row(i));
                const std::vector<double> sc = cqc_scores(last_model, x);
                const PredictionSet set = cqc_predict_set(last_model, x);
                scores_out << frame.data.ids[i] << ',' << fmt(sc[1]) << ',' << set.set_size()
                           << ',' << fmt_opt(frame.glucose[i]) << ','
                           << fmt_opt(frame.pulse[i]) << ',' << fmt_opt(frame.age[i]) << ','
                           << hash << '\n';
            }
            auto model_out = open_out(
                out_dir, "nhanes_cqc_model" + std::to_string(spec.id) + ".json");
            model_out << last_model.to_json() << '\n';
        }

        result.models.push_back(std::move(mres));
    }

    if (!out_dir.empty()) {
        auto summary = open_out(out_dir, "nhanes_summary.csv");
        summary << "model,cost,n,auc,auc_sd,accuracy,recall,precision,f1,cross_entropy,"
                   "coverage,mean_set_size,config_hash\n";
        for (const NhanesModelResult& m : result.models) {
            summary << m.model_id << ',' << fmt(m.cost) << ',' << m.n_rows << ','
                    << fmt(m.mean_metrics.auc) << ',' << fmt(m.auc_sd) << ','
                    << fmt(m.mean_metrics.accuracy) << ',' << fmt_opt(m.mean_metrics.recall)
                    << ',' << fmt_opt(m.mean_metrics.precision) << ','
                    << fmt_opt(m.mean_metrics.f1) << ',' << fmt(m.mean_metrics.cross_entropy)
                    << ',' << fmt(m.coverage.empirical_coverage) << ','
                    << fmt(m.coverage.mean_set_size) << ',' << hash << '\n';
        }
        for (const NhanesModelResult& m : result.models) {
            auto rep_out = open_out(out_dir,
                                    "nhanes_metrics_model" + std::to_string(m.model_id) + ".json");
            rep_out << m.mean_metrics.to_json() << '\n';
        }
    }
    return result;
}

} // namespace svynn
