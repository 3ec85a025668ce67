#include "svynn/numnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "svynn/rng.hpp"

namespace svynn {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;     // network init
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;  // minibatch shuffle

bool is_integer_label(double y) {
    return std::isfinite(y) && y == std::floor(y);
}

/// Scratch buffers reused across rows of one training/evaluation pass.
struct Workspace {
    std::vector<std::vector<double>> act;    // act[l] = input to layer l; act[L] = logits
    std::vector<std::vector<double>> delta;  // per-layer back-propagated error
    std::vector<double> probs;

    explicit Workspace(const NetworkParams& net) {
        act.resize(net.layers.size() + 1);
        delta.resize(net.layers.size());
        act[0].resize(net.input_dim());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            act[l + 1].resize(net.layers[l].out);
            delta[l].resize(net.layers[l].out);
        }
        probs.resize(net.output_dim());
    }
};

/// Forward pass through `net` for input x, filling ws.act. act.back() holds
/// the identity-output logits.
void forward_into(const NetworkParams& net, std::span<const double> x, Workspace& ws) {
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    const std::size_t L = net.layers.size();
    for (std::size_t l = 0; l < L; ++l) {
        const Layer& layer = net.layers[l];
        const std::vector<double>& in = ws.act[l];
        std::vector<double>& out = ws.act[l + 1];
        const bool is_last = (l + 1 == L);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* wrow = layer.w.data() + o * layer.in;
            double z = layer.b[o];
            for (std::size_t i = 0; i < layer.in; ++i) z += wrow[i] * in[i];
            out[o] = is_last ? z : (z > 0.0 ? z : 0.0);
        }
    }
}

void log_softmax_into(std::span<const double> z, std::vector<double>& out) {
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    out.resize(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] - lse;
}

struct LossSpec {
    LossKind kind;
    double alpha = 0.5;       // pinball level
    std::size_t classes = 2;  // cross-entropy output width
};

/// Per-sample loss value and output-layer delta (d loss / d logits), already
/// multiplied by the sample's survey weight.
double sample_loss_and_delta(const LossSpec& spec, std::span<const double> logits,
                             double y, double w, Workspace& ws,
                             std::vector<double>& out_delta) {
    switch (spec.kind) {
        case LossKind::weighted_cross_entropy: {
            const auto K = logits.size();
            log_softmax_into(logits, ws.probs);  // ws.probs = log f_k
            const auto cls = static_cast<std::size_t>(y);
            const double value = -w * ws.probs[cls];
            for (std::size_t k = 0; k < K; ++k)
                out_delta[k] = w * (std::exp(ws.probs[k]) - (k == cls ? 1.0 : 0.0));
            return value;
        }
        case LossKind::weighted_mse: {
            const double yhat = logits[0];
            const double r = yhat - y;
            out_delta[0] = 2.0 * w * r;
            return w * r * r;
        }
        case LossKind::pinball: {
            const double yhat = logits[0];
            const double t = y - yhat;  // d t / d yhat = -1
            const double a = spec.alpha;
            out_delta[0] = t > 0.0 ? -w * a : (t < 0.0 ? w * (1.0 - a) : 0.0);
            return w * pinball_loss(t, a);
        }
    }
    throw invalid_input("unknown loss kind");
}

/// Weighted loss over the given rows; gradient (flat layout) accumulated in
/// row order when grad != nullptr. Both value and gradient are multiplied by
/// `scale` at the end.
double accumulate_loss(const NetworkParams& net, const Dataset& ds, const LossSpec& spec,
                       std::span<const std::size_t> rows, double scale, Workspace& ws,
                       std::vector<double>* grad) {
    const std::size_t L = net.layers.size();
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);

    // flat offsets per layer: weights then bias
    std::vector<std::size_t> off(L);
    {
        std::size_t o = 0;
        for (std::size_t l = 0; l < L; ++l) {
            off[l] = o;
            o += net.layers[l].w.size() + net.layers[l].b.size();
        }
    }

    double total = 0.0;
    for (std::size_t r : rows) {
        const double w = ds.weights[r];
        if (!(w > 0.0)) throw invalid_input("loss: survey weights must be strictly positive");
        const double y = ds.labels[r];
        if (spec.kind == LossKind::weighted_cross_entropy) {
            if (!is_integer_label(y) || y < 0.0 || y >= static_cast<double>(net.output_dim()))
                throw invalid_input("cross-entropy: labels must be integers in [0, K)");
        }
        forward_into(net, ds.row(r), ws);
        total += sample_loss_and_delta(spec, ws.act[L], y, w, ws, ws.delta[L - 1]);
        if (!grad) continue;

        for (std::size_t l = L; l-- > 0;) {
            const Layer& layer = net.layers[l];
            const std::vector<double>& in = ws.act[l];
            const std::vector<double>& d = ws.delta[l];
            double* gw = grad->data() + off[l];
            double* gb = gw + layer.w.size();
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double dv = d[o];
                double* gwrow = gw + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) gwrow[i] += dv * in[i];
                gb[o] += dv;
            }
            if (l == 0) continue;
            // back-propagate through ReLU: act[l] = relu(pre-activation)
            std::vector<double>& dprev = ws.delta[l - 1];
            for (std::size_t i = 0; i < layer.in; ++i) {
                double s = 0.0;
                if (in[i] > 0.0)
                    for (std::size_t o = 0; o < layer.out; ++o)
                        s += layer.w[o * layer.in + i] * d[o];
                dprev[i] = s;
            }
        }
    }

    if (scale != 1.0) {
        total *= scale;
        if (grad)
            for (double& g : *grad) g *= scale;
    }
    return total;
}

LossValue full_loss(const NetworkParams& net, const Dataset& ds, const LossSpec& spec) {
    net.validate();
    ds.validate();
    if (ds.n_rows() == 0) throw invalid_input("loss: dataset is empty");
    if (!ds.has_labels()) throw invalid_input("loss: dataset has no labels");
    if (ds.n_features() != net.input_dim())
        throw invalid_input("loss: dataset feature count does not match network input");
    if (spec.kind != LossKind::weighted_cross_entropy && net.output_dim() != 1)
        throw invalid_input("loss: scalar losses require a single-output network");

    std::vector<std::size_t> rows(ds.n_rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Workspace ws(net);
    LossValue lv;
    lv.gradient.assign(net.param_count(), 0.0);
    lv.value = accumulate_loss(net, ds, spec, rows, 1.0, ws, &lv.gradient);
    return lv;
}

} // namespace

std::size_t NetworkParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

bool NetworkParams::all_finite() const {
    for (const auto& l : layers) {
        for (double v : l.w)
            if (!std::isfinite(v)) return false;
        for (double v : l.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

std::vector<double> NetworkParams::to_flat() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.w.begin(), l.w.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void NetworkParams::from_flat(std::span<const double> flat) {
    if (flat.size() != param_count())
        throw invalid_input("from_flat: length does not match parameter count");
    std::size_t o = 0;
    for (auto& l : layers) {
        std::copy_n(flat.begin() + o, l.w.size(), l.w.begin());
        o += l.w.size();
        std::copy_n(flat.begin() + o, l.b.size(), l.b.begin());
        o += l.b.size();
    }
}

void NetworkParams::validate() const {
    if (layers.empty()) throw invalid_input("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        if (layer.in == 0 || layer.out == 0)
            throw invalid_input("network layer has zero dimension");
        if (layer.w.size() != layer.in * layer.out || layer.b.size() != layer.out)
            throw invalid_input("network layer storage size mismatch");
        if (l > 0 && layers[l - 1].out != layer.in)
            throw invalid_input("adjacent layer dimensions do not chain");
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw invalid_input("learning_rate must be > 0");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
        throw invalid_input("adam betas must lie in (0,1)");
    if (!(adam_epsilon > 0.0)) throw invalid_input("adam_epsilon must be > 0");
    if (epochs == 0) throw invalid_input("epochs must be positive");
    if (hidden_widths.empty()) throw invalid_input("at least one hidden layer is required");
    for (std::size_t h : hidden_widths)
        if (h == 0) throw invalid_input("hidden widths must be positive");
    if (loss_kind == LossKind::pinball && !(pinball_alpha > 0.0 && pinball_alpha < 1.0))
        throw invalid_input("pinball alpha must lie in (0,1)");
    if (loss_kind == LossKind::weighted_cross_entropy && n_classes < 2)
        throw invalid_input("cross-entropy requires at least 2 classes");
    if (weight_decay < 0.0) throw invalid_input("weight_decay must be nonnegative");
}

std::vector<double> relu(std::span<const double> z) {
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
    return out;
}

std::vector<double> softmax(std::span<const double> z) {
    if (z.size() < 2) throw invalid_input("softmax requires K >= 2 entries");
    for (double v : z)
        if (!std::isfinite(v)) throw invalid_input("softmax: non-finite input");
    const double m = *std::max_element(z.begin(), z.end());
    std::vector<double> out(z.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        out[k] = std::exp(z[k] - m);
        sum += out[k];
    }
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> log_softmax(std::span<const double> z) {
    if (z.size() < 2) throw invalid_input("log_softmax requires K >= 2 entries");
    for (double v : z)
        if (!std::isfinite(v)) throw invalid_input("log_softmax: non-finite input");
    std::vector<double> out;
    log_softmax_into(z, out);
    return out;
}

double pinball_loss(double t, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("pinball alpha must lie in (0,1)");
    const double pos = t > 0.0 ? t : 0.0;
    const double neg = t < 0.0 ? -t : 0.0;
    return (1.0 - alpha) * neg + alpha * pos;
}

std::vector<double> forward(const NetworkParams& params, std::span<const double> x) {
    params.validate();
    if (x.size() != params.input_dim())
        throw invalid_input("forward: input length does not match network input dimension");
    Workspace ws(params);
    forward_into(params, x, ws);
    return ws.act.back();
}

NetworkParams init_network(std::size_t input_dim, const std::vector<std::size_t>& hidden_widths,
                           std::size_t output_dim, std::uint64_t seed) {
    if (input_dim == 0 || output_dim == 0)
        throw invalid_input("init_network: zero input or output dimension");
    NetworkParams net;
    Rng rng(seed, kInitStream);
    std::size_t in = input_dim;
    std::vector<std::size_t> widths = hidden_widths;
    widths.push_back(output_dim);
    for (std::size_t out : widths) {
        Layer layer;
        layer.in = in;
        layer.out = out;
        layer.w.resize(in * out);
        layer.b.assign(out, 0.0);
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        for (double& w : layer.w) w = sd * rng.normal();
        net.layers.push_back(std::move(layer));
        in = out;
    }
    return net;
}

LossValue weighted_cross_entropy(const NetworkParams& params, const Dataset& ds) {
    return full_loss(params, ds, {LossKind::weighted_cross_entropy, 0.5, params.output_dim()});
}

LossValue weighted_mse(const NetworkParams& params, const Dataset& ds) {
    return full_loss(params, ds, {LossKind::weighted_mse});
}

LossValue pinball_objective(const NetworkParams& params, const Dataset& ds, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("pinball alpha must lie in (0,1)");
    return full_loss(params, ds, {LossKind::pinball, alpha});
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (ds.n_rows() == 0) throw invalid_input("train: dataset is empty");
    if (!ds.has_labels()) throw invalid_input("train: dataset has no labels");

    const std::size_t n = ds.n_rows();
    const std::size_t out_dim =
        cfg.loss_kind == LossKind::weighted_cross_entropy ? cfg.n_classes : 1;
    LossSpec spec{cfg.loss_kind, cfg.pinball_alpha, out_dim};

    NetworkParams net = init_network(ds.n_features(), cfg.hidden_widths, out_dim, cfg.seed);
    Workspace ws(net);

    const std::size_t np = net.param_count();
    std::vector<double> flat = net.to_flat();
    std::vector<double> grad(np, 0.0), m(np, 0.0), v(np, 0.0);

    double weight_total = 0.0;
    for (double w : ds.weights) weight_total += w;

    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    const bool full_batch = cfg.batch_size == 0 || cfg.batch_size >= n;

    std::vector<std::size_t> order = all_rows;
    std::vector<double> trace;
    trace.reserve(cfg.epochs);

    double b1t = 1.0, b2t = 1.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!full_batch) {
            Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream, epoch));
            order = all_rows;
            shuffle_rng.shuffle(order);
        }
        const std::size_t bs = full_batch ? n : cfg.batch_size;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t len = std::min(bs, n - start);
            std::span<const std::size_t> batch(order.data() + start, len);
            double batch_weight = 0.0;
            for (std::size_t r : batch) batch_weight += ds.weights[r];
            // scale so the minibatch gradient is unbiased for the full
            // weighted objective regardless of which rows landed in the batch
            const double scale = full_batch ? 1.0 : weight_total / batch_weight;
            accumulate_loss(net, ds, spec, batch, scale, ws, &grad);

            b1t *= cfg.adam_beta1;
            b2t *= cfg.adam_beta2;
            for (std::size_t j = 0; j < np; ++j) {
                const double g = grad[j] + cfg.weight_decay * flat[j];
                m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g;
                v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g * g;
                const double mhat = m[j] / (1.0 - b1t);
                const double vhat = v[j] / (1.0 - b2t);
                flat[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
            }
            net.from_flat(flat);
            if (!net.all_finite())
                throw training_diverged(epoch, "training diverged at epoch " +
                                                   std::to_string(epoch) +
                                                   ": non-finite parameters");
        }

        const double epoch_loss = accumulate_loss(net, ds, spec, all_rows, 1.0, ws, nullptr);
        if (!std::isfinite(epoch_loss))
            throw training_diverged(epoch, "training diverged at epoch " +
                                               std::to_string(epoch) + ": non-finite loss");
        trace.push_back(epoch_loss);
    }

    return {std::move(net), std::move(trace)};
}

namespace {

void predict_rows(const NetworkParams& params, const Dataset& ds, std::size_t row_begin,
                  std::size_t row_end, Workspace& ws, double* out) {
    const std::size_t K = params.output_dim();
    for (std::size_t r = row_begin; r < row_end; ++r) {
        forward_into(params, ds.row(r), ws);
        std::copy(ws.act.back().begin(), ws.act.back().end(), out + r * K);
    }
}

} // namespace

std::vector<double> predict_logits(const NetworkParams& params, const Dataset& ds) {
    params.validate();
    if (ds.n_features() != params.input_dim())
        throw invalid_input("predict: dataset feature count does not match network input");
    const std::size_t n = ds.n_rows();
    std::vector<double> out(n * params.output_dim());
#pragma omp parallel
    {
        Workspace ws(params);
#pragma omp for schedule(static)
        for (long r = 0; r < static_cast<long>(n); ++r)
            predict_rows(params, ds, static_cast<std::size_t>(r),
                         static_cast<std::size_t>(r) + 1, ws, out.data());
    }
    return out;
}

std::vector<double> predict_logits_serial(const NetworkParams& params, const Dataset& ds) {
    params.validate();
    if (ds.n_features() != params.input_dim())
        throw invalid_input("predict: dataset feature count does not match network input");
    const std::size_t n = ds.n_rows();
    std::vector<double> out(n * params.output_dim());
    Workspace ws(params);
    predict_rows(params, ds, 0, n, ws, out.data());
    return out;
}

std::vector<double> predict_positive_prob(const NetworkParams& params, const Dataset& ds) {
    const std::size_t K = params.output_dim();
    if (K < 2) throw invalid_input("predict_positive_prob requires K >= 2 outputs");
    const std::vector<double> logits = predict_logits(params, ds);
    const std::size_t n = ds.n_rows();
    std::vector<double> probs(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::span<const double> z(logits.data() + r * K, K);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double zv : z) sum += std::exp(zv - mx);
        probs[r] = std::exp(z[1] - mx) / sum;
    }
    return probs;
}

} // namespace svynn
