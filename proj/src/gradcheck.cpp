#include "svynn/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "svynn/dataset.hpp"
#include "svynn/numnet.hpp"
#include "svynn/rng.hpp"

namespace svynn {

namespace {

struct Problem {
    NetworkParams net;
    Dataset data;
};

Problem random_problem(Rng& rng, std::size_t out_dim, bool classification,
                       std::size_t max_params, bool keep_residuals_off_kink) {
    // draw dimensions until the parameter count fits
    std::size_t p = 0;
    std::vector<std::size_t> hidden;
    for (;;) {
        p = 2 + rng.uniform_below(5);
        hidden.clear();
        const std::size_t depth = 1 + rng.uniform_below(2);
        for (std::size_t l = 0; l < depth; ++l) hidden.push_back(2 + rng.uniform_below(7));
        std::size_t count = 0, in = p;
        for (std::size_t h : hidden) {
            count += in * h + h;
            in = h;
        }
        count += in * out_dim + out_dim;
        if (count <= max_params) break;
    }

    Problem prob;
    prob.net = init_network(p, hidden, out_dim, rng.next_u64());
    // nonzero biases so the gradient check also exercises the bias path
    for (Layer& l : prob.net.layers)
        for (double& b : l.b) b = 0.3 * rng.normal();

    const std::size_t n = 12;
    prob.data.feature_names.assign(p, "x");
    prob.data.features.resize(n * p);
    for (double& v : prob.data.features) v = rng.normal();
    prob.data.weights.resize(n);
    for (double& w : prob.data.weights) w = 0.5 + 2.0 * rng.uniform01();
    prob.data.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) prob.data.ids[i] = static_cast<std::int64_t>(i);

    prob.data.labels.resize(n);
    if (classification) {
        for (double& y : prob.data.labels)
            y = static_cast<double>(rng.uniform_below(out_dim));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double target = rng.normal();
            if (keep_residuals_off_kink) {
                // keep |y - yhat| bounded away from the pinball kink so the
                // finite-difference step cannot cross it
                const double yhat = forward(prob.net, prob.data.row(i))[0];
                const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
                target = yhat + sign * (0.2 + std::abs(target));
            }
            prob.data.labels[i] = target;
        }
    }
    return prob;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / denom;
}

double check_one(const Problem& prob,
                 const std::function<LossValue(const NetworkParams&)>& loss) {
    const LossValue lv = loss(prob.net);
    std::vector<double> flat = prob.net.to_flat();
    std::vector<double> fd(flat.size());
    const double h = 1e-6;
    NetworkParams net = prob.net;
    for (std::size_t j = 0; j < flat.size(); ++j) {
        const double keep = flat[j];
        flat[j] = keep + h;
        net.from_flat(flat);
        const double up = loss(net).value;
        flat[j] = keep - h;
        net.from_flat(flat);
        const double down = loss(net).value;
        flat[j] = keep;
        fd[j] = (up - down) / (2.0 * h);
    }
    return relative_error(lv.gradient, fd);
}

} // namespace

std::vector<GradCheckResult> run_gradient_battery(std::size_t n_nets, std::uint64_t seed,
                                                  double tolerance, std::size_t max_params) {
    struct Config {
        std::string name;
        bool classification;
        double alpha;  // pinball only, 0 otherwise
    };
    const std::vector<Config> configs = {
        {"weighted_cross_entropy", true, 0.0}, {"pinball(0.1)", false, 0.1},
        {"pinball(0.5)", false, 0.5},          {"pinball(0.9)", false, 0.9},
        {"weighted_mse", false, 0.0},
    };

    std::vector<GradCheckResult> results;
    for (std::size_t ci = 0; ci < configs.size(); ++ci) {
        const Config& c = configs[ci];
        GradCheckResult res;
        res.loss = c.name;
        res.nets_checked = n_nets;
        for (std::size_t t = 0; t < n_nets; ++t) {
            Rng rng(mix_seed(seed, ci, t));
            const bool pinball = !c.classification && c.alpha > 0.0;
            const std::size_t out_dim =
                c.classification ? 2 + rng.uniform_below(2) : 1;
            const Problem prob =
                random_problem(rng, out_dim, c.classification, max_params, pinball);
            const double err = check_one(prob, [&](const NetworkParams& net) {
                if (c.classification) return weighted_cross_entropy(net, prob.data);
                if (pinball) return pinball_objective(net, prob.data, c.alpha);
                return weighted_mse(net, prob.data);
            });
            res.max_rel_error = std::max(res.max_rel_error, err);
        }
        res.pass = res.max_rel_error < tolerance;
        results.push_back(std::move(res));
    }
    return results;
}

} // namespace svynn
