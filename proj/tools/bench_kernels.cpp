// Timing comparison of the OpenMP kernels against their serial reference
// implementations. All kernels are exact: the parallel path must produce
// bit-identical output, which is verified here alongside the timings.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "svynn/metrics.hpp"
#include "svynn/numnet.hpp"
#include "svynn/pipeline.hpp"
#include "svynn/rng.hpp"
#include "svynn/survey.hpp"

namespace {

double time_ms(const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void report(const std::string& name, double serial_ms, double omp_ms, bool equal) {
    std::printf("%-28s serial %9.1f ms   omp %9.1f ms   speedup %.2fx   %s\n", name.c_str(),
                serial_ms, omp_ms, serial_ms / omp_ms, equal ? "bit-identical" : "MISMATCH");
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP with %d threads\n\n", omp_get_max_threads());
#else
    std::printf("compiled without OpenMP\n\n");
#endif

    using namespace svynn;

    {
        const std::size_t n = 400000;
        Dataset a, b;
        const double t_omp = time_ms([&] { a = generate_population(Scenario::a, n, 9, 50); });
        const double t_ser =
            time_ms([&] { b = generate_population_serial(Scenario::a, n, 9, 50); });
        report("generate_population", t_ser, t_omp,
               a.features == b.features && a.labels == b.labels && a.state == b.state);
    }

    {
        const std::size_t n = 200000;
        Dataset ds = generate_population(Scenario::a, n, 17, 50);
        const NetworkParams net = init_network(10, {64, 32}, 2, 3);
        std::vector<double> a, b;
        const double t_omp = time_ms([&] { a = predict_logits(net, ds); });
        const double t_ser = time_ms([&] { b = predict_logits_serial(net, ds); });
        report("predict_logits", t_ser, t_omp, a == b);
    }

    {
        const std::size_t n = 8000;
        Rng rng(5);
        std::vector<double> scores(n), labels(n), weights(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = rng.uniform01();
            labels[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
            weights[i] = 0.5 + rng.uniform01();
        }
        double a = 0.0, b = 0.0;
        const double t_omp = time_ms([&] { a = weighted_auc(scores, labels, weights); });
        const double t_ser =
            time_ms([&] { b = weighted_auc_serial(scores, labels, weights); });
        report("weighted_auc", t_ser, t_omp, a == b);
    }

    {
        ExperimentConfig cfg;
        cfg.scenario = "a";
        cfg.n = 3000;
        cfg.reps = 4;
        cfg.epochs = 60;
        cfg.hidden_grid = {{16}};
        cfg.seed = 21;

        ExperimentConfig serial_cfg = cfg;
        serial_cfg.threads = 1;
        SimulationResult rs, rp;
        const double t_ser = time_ms([&] { rs = run_simulation(serial_cfg, ""); });
        ExperimentConfig par_cfg = cfg;
        par_cfg.threads = 0;
#ifdef _OPENMP
        omp_set_num_threads(omp_get_num_procs());
#endif
        const double t_omp = time_ms([&] { rp = run_simulation(par_cfg, ""); });
        report("simulation replicate loop", t_ser, t_omp, rs.mean == rp.mean && rs.sd == rp.sd);
    }

    return 0;
}
