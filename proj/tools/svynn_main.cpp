// svynn: survey-weighted neural networks with conformal prediction sets.
//
// Subcommands: simulate, coverage, nhanes, gradcheck, quantile-oracle,
// synth-nhanes. Exit codes: 0 ok, 1 usage/config error, 2 data/schema error,
// 3 numerical failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "svynn/gradcheck.hpp"
#include "svynn/oracle.hpp"
#include "svynn/pipeline.hpp"
#include "svynn/rng.hpp"
#include "svynn/synth.hpp"

namespace {

using svynn::ExperimentConfig;

struct CommonFlags {
    std::string config_path;
    std::string scenario;
    std::size_t n = 0;
    std::size_t reps = 0;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    double learning_rate = 0.0;
    long batch = -1;
    int threads = -1;
    double state_prob = 0.0;
    std::size_t city_size = 0;

    CLI::Option* o_scenario = nullptr;
    CLI::Option* o_n = nullptr;
    CLI::Option* o_reps = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_epochs = nullptr;
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_batch = nullptr;
    CLI::Option* o_threads = nullptr;
    CLI::Option* o_state_prob = nullptr;
    CLI::Option* o_city = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool with_design) {
    cmd->add_option("--config", f.config_path, "JSON config file (flags override)");
    f.o_seed = cmd->add_option("--seed", f.seed, "master RNG seed");
    f.o_epochs = cmd->add_option("--epochs", f.epochs, "training epochs");
    f.o_lr = cmd->add_option("--lr", f.learning_rate, "Adam learning rate");
    f.o_batch = cmd->add_option("--batch", f.batch, "minibatch size (0 = full batch)");
    f.o_threads = cmd->add_option("--threads", f.threads, "worker threads (0 = default)");
    if (with_design) {
        f.o_scenario = cmd->add_option("--scenario", f.scenario, "generative model: a or b");
        f.o_n = cmd->add_option("--n", f.n, "population size per replicate");
        f.o_reps = cmd->add_option("--reps", f.reps, "number of replicates");
        f.o_state_prob = cmd->add_option("--state-prob", f.state_prob,
                                         "first-stage state selection probability");
        f.o_city = cmd->add_option("--city-size", f.city_size, "units per simulated city");
    }
}

ExperimentConfig build_config(const CommonFlags& f) {
    ExperimentConfig cfg;
    if (!f.config_path.empty()) cfg = ExperimentConfig::from_json_file(f.config_path);
    auto given = [](const CLI::Option* o) { return o != nullptr && o->count() > 0; };
    if (given(f.o_scenario)) cfg.scenario = f.scenario;
    if (given(f.o_n)) cfg.n = f.n;
    if (given(f.o_reps)) cfg.reps = f.reps;
    if (given(f.o_seed)) cfg.seed = f.seed;
    if (given(f.o_epochs)) cfg.epochs = f.epochs;
    if (given(f.o_lr)) cfg.learning_rate = f.learning_rate;
    if (given(f.o_batch)) cfg.batch_size = static_cast<std::size_t>(f.batch);
    if (given(f.o_threads)) cfg.threads = f.threads;
    if (given(f.o_state_prob)) cfg.state_prob = f.state_prob;
    if (given(f.o_city)) cfg.city_size = f.city_size;
    return cfg;
}

int cmd_gradcheck(std::size_t nets, std::uint64_t seed, double tol) {
    const auto results = svynn::run_gradient_battery(nets, seed, tol);
    bool ok = true;
    std::printf("%-24s %-12s %-8s\n", "loss", "max_rel_err", "status");
    for (const auto& r : results) {
        std::printf("%-24s %-12.3e %-8s\n", r.loss.c_str(), r.max_rel_error,
                    r.pass ? "ok" : "FAIL");
        ok = ok && r.pass;
    }
    std::printf("checked %zu networks per loss, tolerance %.1e\n", nets, tol);
    return ok ? 0 : 3;
}

int cmd_quantile_oracle(std::size_t cases, std::size_t atoms, std::uint64_t seed) {
    std::size_t mismatches = 0;
    for (std::size_t c = 0; c < cases; ++c) {
        svynn::Rng rng(seed, c);
        std::vector<double> values(atoms), masses(atoms);
        for (auto& v : values) v = 10.0 * rng.normal();
        for (auto& m : masses) m = 0.01 + rng.uniform01();
        const double inf_mass = rng.bernoulli(0.25) ? 0.05 + rng.uniform01() : 0.0;
        const auto dist = svynn::WeightedEmpirical::make(values, masses, inf_mass);
        for (int q = 0; q < 50; ++q) {
            const double level = 0.02 + 1.1 * rng.uniform01();
            const double fast = svynn::weighted_quantile(dist, level);
            const double slow = svynn::oracle::weighted_quantile_scan(dist, level);
            const bool equal = (fast == slow) || (std::isinf(fast) && std::isinf(slow));
            if (!equal) {
                ++mismatches;
                std::fprintf(stderr, "mismatch: case %zu level %.17g: %.17g vs %.17g\n", c,
                             level, fast, slow);
            }
        }
    }
    std::printf("quantile-oracle: %zu cases x 50 levels, %zu mismatches\n", cases, mismatches);
    return mismatches == 0 ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"survey-weighted neural networks with conformal prediction sets"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "run the two-stage simulation study");
    CommonFlags sim_flags;
    std::string sim_out;
    add_common_flags(sim, sim_flags, true);
    sim->add_option("--out", sim_out, "output directory")->required();

    // coverage
    auto* cov = app.add_subcommand("coverage", "conformal coverage experiment");
    CommonFlags cov_flags;
    std::string cov_out, cov_method, cov_weighting;
    std::vector<double> cov_alpha;
    add_common_flags(cov, cov_flags, true);
    auto* o_alpha = cov->add_option("--alpha", cov_alpha, "target coverage levels");
    auto* o_method = cov->add_option("--method", cov_method, "cqc or split");
    auto* o_weighting =
        cov->add_option("--score-weighting", cov_weighting, "literal or plain");
    cov->add_option("--out", cov_out, "output directory")->required();

    // nhanes
    auto* nh = app.add_subcommand("nhanes", "diabetes model suite on a CSV extract");
    CommonFlags nh_flags;
    std::string nh_data, nh_out, nh_weighting;
    std::vector<int> nh_models{1, 2, 3, 4, 5, 6, 7};
    double nh_alpha = 0.9;
    std::size_t nh_repeats = 0;
    add_common_flags(nh, nh_flags, false);
    nh->add_option("--data", nh_data, "input CSV extract")->required();
    nh->add_option("--models", nh_models, "model ids (1..7)");
    auto* o_nh_alpha = nh->add_option("--alpha", nh_alpha, "target coverage level");
    auto* o_nh_weighting =
        nh->add_option("--score-weighting", nh_weighting, "literal or plain");
    auto* o_nh_repeats = nh->add_option("--repeats", nh_repeats, "re-split repetitions");
    nh->add_option("--out", nh_out, "output directory")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient battery");
    std::size_t gc_nets = 20;
    std::uint64_t gc_seed = 7;
    double gc_tol = 1e-5;
    gc->add_option("--nets", gc_nets, "networks per loss");
    gc->add_option("--seed", gc_seed, "RNG seed");
    gc->add_option("--tol", gc_tol, "relative error tolerance");

    // quantile-oracle
    auto* qo = app.add_subcommand("quantile-oracle",
                                  "brute-force weighted-quantile cross-check");
    std::size_t qo_cases = 100, qo_atoms = 200;
    std::uint64_t qo_seed = 11;
    qo->add_option("--cases", qo_cases, "random distributions to check");
    qo->add_option("--atoms", qo_atoms, "atoms per distribution");
    qo->add_option("--seed", qo_seed, "RNG seed");

    // synth-nhanes
    auto* sy = app.add_subcommand("synth-nhanes",
                                  "write a synthetic diabetes-cohort extract");
    std::string sy_out;
    std::size_t sy_n = 5011;
    std::uint64_t sy_seed = 2014;
    sy->add_option("--out", sy_out, "output CSV path")->required();
    sy->add_option("--n", sy_n, "number of rows");
    sy->add_option("--seed", sy_seed, "RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed()) {
            ExperimentConfig cfg = build_config(sim_flags);
            const auto result = svynn::run_simulation(cfg, sim_out);
            for (std::size_t k = 0; k < result.metric_names.size(); ++k)
                std::printf("%-14s %.4f +- %.4f\n", result.metric_names[k].c_str(),
                            result.mean[k], result.sd[k]);
            std::printf("wrote %s/simulation_summary.csv (config %s)\n", sim_out.c_str(),
                        cfg.config_hash().c_str());
        } else if (cov->parsed()) {
            ExperimentConfig cfg = build_config(cov_flags);
            if (o_alpha->count() > 0) cfg.alpha = cov_alpha;
            if (o_method->count() > 0) cfg.method = cov_method;
            if (o_weighting->count() > 0) cfg.score_weighting = cov_weighting;
            const auto result = svynn::run_coverage(cfg, cov_out);
            for (double a : cfg.alpha) {
                double mean = 0.0;
                std::size_t count = 0;
                for (const auto& row : result.rows)
                    if (row.alpha == a) {
                        mean += row.coverage;
                        ++count;
                    }
                std::printf("alpha %.2f: mean coverage %.4f over %zu replicates\n", a,
                            mean / static_cast<double>(count), count);
            }
            std::printf("wrote %s/coverage_boxplot.csv (config %s)\n", cov_out.c_str(),
                        cfg.config_hash().c_str());
        } else if (nh->parsed()) {
            ExperimentConfig cfg = build_config(nh_flags);
            if (o_nh_weighting->count() > 0) cfg.score_weighting = nh_weighting;
            if (o_nh_repeats->count() > 0) cfg.repeats = nh_repeats;
            double alpha = nh_alpha;
            if (o_nh_alpha->count() == 0) alpha = 0.9;
            const auto result = svynn::run_nhanes(nh_data, nh_models, alpha, cfg, nh_out);
            std::printf("%-6s %-6s %-8s %-8s %-10s\n", "model", "cost", "auc", "acc",
                        "coverage");
            for (const auto& m : result.models)
                std::printf("%-6d %-6.1f %-8.4f %-8.4f %-10.4f\n", m.model_id, m.cost,
                            m.mean_metrics.auc, m.mean_metrics.accuracy,
                            m.coverage.empirical_coverage);
            std::printf("wrote %s/nhanes_summary.csv (config %s)\n", nh_out.c_str(),
                        cfg.config_hash().c_str());
        } else if (gc->parsed()) {
            return cmd_gradcheck(gc_nets, gc_seed, gc_tol);
        } else if (qo->parsed()) {
            return cmd_quantile_oracle(qo_cases, qo_atoms, qo_seed);
        } else if (sy->parsed()) {
            svynn::write_synthetic_extract(sy_out, sy_n, sy_seed);
            std::printf("wrote %s (%zu rows)\n", sy_out.c_str(), sy_n);
        }
    } catch (const svynn::schema_error& e) {
        std::cerr << "data/schema error: " << e.what() << "\n";
        return 2;
    } catch (const svynn::invalid_input& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
