#include "saldis/readout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "saldis/errors.hpp"

namespace saldis {

Layer::Layer(int out, int in)
    : out_ch(out), in_ch(in),
      weights(static_cast<std::size_t>(out) * in, 0.0), bias(out, 0.0) {
    if (out < 1 || in < 1) throw std::invalid_argument("Layer dimensions must be >= 1");
}

void ReadoutModel::validate() const {
    if (layers.empty()) throw std::invalid_argument("ReadoutModel: no layers");
    for (std::size_t i = 1; i < layers.size(); ++i)
        if (layers[i].in_ch != layers[i - 1].out_ch)
            throw std::invalid_argument("ReadoutModel: layer widths do not chain");
    if (layers.back().out_ch != 1)
        throw std::invalid_argument("ReadoutModel: final layer must output one channel");
    if (cb && (cb->sigma_x <= 0 || cb->sigma_y <= 0))
        throw std::invalid_argument("ReadoutModel: center-bias sigmas must be > 0");
    if (smooth_sigma < 0)
        throw std::invalid_argument("ReadoutModel: smooth_sigma must be >= 0");
}

ReadoutModel make_readout_model(int in_ch, std::uint64_t seed,
                                const std::vector<int>& widths) {
    std::mt19937_64 rng(seed);
    ReadoutModel model;
    int prev = in_ch;
    for (int w : widths) {
        Layer layer(w, prev);
        const double limit = std::sqrt(6.0 / prev);
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& v : layer.weights) v = dist(rng);
        model.layers.push_back(std::move(layer));
        prev = w;
    }
    model.validate();
    return model;
}

namespace {

// Unnormalized log Gaussian; the dropped constant is absorbed by softmax.
double log_prior(const CenterBias& cb, int y, int x) {
    const double dx = (x - cb.mu_x) / cb.sigma_x;
    const double dy = (y - cb.mu_y) / cb.sigma_y;
    return -0.5 * (dx * dx + dy * dy);
}

struct Tape {
    // Per layer: pre-activation values, h * w * out_ch.
    std::vector<std::vector<double>> pre;
    Grid raw_logits;   // before center bias and smoothing
    Grid logits;       // after
    SaliencyMap prediction;
};

Tape run_forward(const ReadoutModel& model, const FeatureMap& fused) {
    model.validate();
    if (fused.channels != model.input_channels())
        throw std::invalid_argument(
            "forward: fused channel count " + std::to_string(fused.channels) +
            " does not match readout input width " +
            std::to_string(model.input_channels()));

    const int hw = fused.height * fused.width;
    Tape tape;
    tape.pre.resize(model.layers.size());

    std::vector<double> cur(fused.data);
    int cur_ch = fused.channels;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        std::vector<double>& z = tape.pre[l];
        z.assign(static_cast<std::size_t>(hw) * layer.out_ch, 0.0);
        for (int p = 0; p < hw; ++p) {
            const double* in = cur.data() + static_cast<std::size_t>(p) * cur_ch;
            double* out = z.data() + static_cast<std::size_t>(p) * layer.out_ch;
            for (int o = 0; o < layer.out_ch; ++o) {
                double acc = layer.bias[o];
                for (int i = 0; i < layer.in_ch; ++i) acc += layer.w(o, i) * in[i];
                out[o] = acc;
            }
        }
        if (l + 1 < model.layers.size()) {
            cur.resize(z.size());
            for (std::size_t i = 0; i < z.size(); ++i) cur[i] = std::max(z[i], 0.0);
        } else {
            cur = z;
        }
        cur_ch = layer.out_ch;
    }

    tape.raw_logits = Grid(fused.height, fused.width);
    tape.raw_logits.data = cur;
    tape.logits = tape.raw_logits;
    if (model.cb)
        for (int y = 0; y < fused.height; ++y)
            for (int x = 0; x < fused.width; ++x)
                tape.logits.at(y, x) += model.cb->weight * log_prior(*model.cb, y, x);
    tape.logits = gaussian_blur(tape.logits, model.smooth_sigma);
    tape.prediction = softmax_2d(tape.logits);
    return tape;
}

void check_distribution(const SaliencyMap& m, const char* who) {
    double total = 0;
    for (double v : m.data) {
        if (!(v >= 0.0))
            throw std::invalid_argument(std::string(who) + ": negative value");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument(std::string(who) + ": map does not sum to 1");
}

double fixation_count(const FixationMap& f) {
    double n = 0;
    for (double v : f.data) n += (v != 0.0) ? 1.0 : 0.0;
    return n;
}

}  // namespace

ForwardResult forward(const ReadoutModel& model, const FeatureMap& fused) {
    Tape tape = run_forward(model, fused);
    return ForwardResult{std::move(tape.logits), std::move(tape.prediction)};
}

double kld_loss(const SaliencyMap& p, const SaliencyMap& q, double eps) {
    if (p.height != q.height || p.width != q.width)
        throw std::invalid_argument("kld_loss: dimension mismatch");
    if (!(eps > 0)) throw std::invalid_argument("kld_loss: eps must be > 0");
    check_distribution(p, "kld_loss P");
    check_distribution(q, "kld_loss Q");
    double loss = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i)
        loss += q.data[i] * std::log(eps + q.data[i] / (eps + p.data[i]));
    return loss;
}

double cc_prime(const SaliencyMap& p, const SaliencyMap& q) {
    if (p.height != q.height || p.width != q.width)
        throw std::invalid_argument("cc_prime: dimension mismatch");
    const double sp = grid_stddev(p), sq = grid_stddev(q);
    if (sp <= 0 || sq <= 0)
        throw NumericError("cc_prime: degenerate constant map (zero variance)");
    return 1.0 - grid_covariance(p, q) / (sp * sq);
}

double nss_prime(const SaliencyMap& p, const FixationMap& f) {
    if (p.height != f.height || p.width != f.width)
        throw std::invalid_argument("nss_prime: dimension mismatch");
    const double n = fixation_count(f);
    if (n < 1) throw std::invalid_argument("nss_prime: empty fixation map");
    const double sp = grid_stddev(p);
    const double sf = grid_stddev(f);
    const auto [p_lo, p_hi] = std::minmax_element(p.data.begin(), p.data.end());
    if (sp <= 0 ||
        *p_hi - *p_lo <= 1e-12 * std::max(std::abs(*p_hi), std::abs(*p_lo)))
        throw NumericError("nss_prime: degenerate constant prediction");
    const double mp = grid_mean(p), mf = grid_mean(f);
    double acc = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        if (f.data[i] == 0.0) continue;
        const double rbar = sf > 0 ? (f.data[i] - mf) / sf : 0.0;
        acc += rbar - (p.data[i] - mp) / sp;
    }
    return acc / n;
}

double eml_loss(const SaliencyMap& p, const SaliencyMap& q,
                const FixationMap& f, double eps) {
    return nss_prime(p, f) + cc_prime(p, q) + kld_loss(p, q, eps);
}

namespace {

// dLoss/dP for the supported loss kinds.
Grid loss_gradient(const SaliencyMap& p, const SaliencyMap& q,
                   const FixationMap& f, LossKind kind, double eps,
                   double* loss_out) {
    const std::size_t n = p.data.size();
    Grid g(p.height, p.width);

    double loss = kld_loss(p, q, eps);
    for (std::size_t i = 0; i < n; ++i) {
        const double denom = eps + p.data[i];
        const double ratio = q.data[i] / denom;
        g.data[i] = -q.data[i] * ratio / (denom * (eps + ratio));
    }

    if (kind == LossKind::eml) {
        const double sp = grid_stddev(p), sq = grid_stddev(q);
        if (sp <= 0 || sq <= 0)
            throw NumericError("eml gradient: degenerate constant map");
        const double mp = grid_mean(p), mq = grid_mean(q);
        const double cov = grid_covariance(p, q);
        const double nn = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            g.data[i] += -(q.data[i] - mq) / (nn * sp * sq) +
                         cov * (p.data[i] - mp) / (nn * sp * sp * sp * sq);
        loss += cc_prime(p, q);

        const double nf = fixation_count(f);
        if (nf < 1) throw std::invalid_argument("eml gradient: empty fixation map");
        double t = 0;  // sum over fixations of (P_i - mean)
        for (std::size_t i = 0; i < n; ++i)
            if (f.data[i] != 0.0) t += p.data[i] - mp;
        for (std::size_t i = 0; i < n; ++i) {
            const double fi = f.data[i] != 0.0 ? 1.0 : 0.0;
            g.data[i] += -((fi - nf / nn) / sp -
                           t * (p.data[i] - mp) / (nn * sp * sp * sp)) / nf;
        }
        loss += nss_prime(p, f);
    }

    if (loss_out) *loss_out = loss;
    return g;
}

}  // namespace

Gradients backward(const ReadoutModel& model, const FeatureMap& fused,
                   const SaliencyMap& q, const FixationMap& f, LossKind kind,
                   double eps, double* loss_out) {
    Tape tape = run_forward(model, fused);
    const int hw = fused.height * fused.width;

    Grid dp = loss_gradient(tape.prediction, q, f, kind, eps, loss_out);

    // Softmax backward.
    double inner = 0;
    for (std::size_t i = 0; i < dp.data.size(); ++i)
        inner += dp.data[i] * tape.prediction.data[i];
    Grid dlogits(dp.height, dp.width);
    for (std::size_t i = 0; i < dp.data.size(); ++i)
        dlogits.data[i] = tape.prediction.data[i] * (dp.data[i] - inner);

    // The blur operator is symmetric, so its adjoint is the blur itself.
    // The center-bias term has no trainable parameters and passes the
    // gradient through unchanged.
    dlogits = gaussian_blur(dlogits, model.smooth_sigma);

    Gradients grads;
    for (const Layer& l : model.layers) grads.layers.emplace_back(l.out_ch, l.in_ch);

    // Per-pixel MLP backward. delta holds dLoss/d(pre-activation) of the
    // current layer.
    std::vector<double> delta(dlogits.data);
    for (int l = static_cast<int>(model.layers.size()) - 1; l >= 0; --l) {
        const Layer& layer = model.layers[l];
        Layer& g = grads.layers[l];

        // Input activations of this layer.
        const std::vector<double>* below = l > 0 ? &tape.pre[l - 1] : nullptr;
        for (int p = 0; p < hw; ++p) {
            const double* d = delta.data() + static_cast<std::size_t>(p) * layer.out_ch;
            for (int o = 0; o < layer.out_ch; ++o) {
                g.bias[o] += d[o];
                for (int i = 0; i < layer.in_ch; ++i) {
                    const double act =
                        below ? std::max((*below)[static_cast<std::size_t>(p) * layer.in_ch + i], 0.0)
                              : fused.data[static_cast<std::size_t>(p) * layer.in_ch + i];
                    g.w(o, i) += d[o] * act;
                }
            }
        }
        if (l > 0) {
            const Layer& lower = model.layers[l - 1];
            std::vector<double> next(static_cast<std::size_t>(hw) * lower.out_ch, 0.0);
            for (int p = 0; p < hw; ++p) {
                const double* d = delta.data() + static_cast<std::size_t>(p) * layer.out_ch;
                double* nd = next.data() + static_cast<std::size_t>(p) * lower.out_ch;
                for (int i = 0; i < layer.in_ch; ++i) {
                    const double z = tape.pre[l - 1][static_cast<std::size_t>(p) * lower.out_ch + i];
                    if (z <= 0.0) continue;  // rectifier subgradient at 0 is 0
                    double acc = 0;
                    for (int o = 0; o < layer.out_ch; ++o) acc += d[o] * layer.w(o, i);
                    nd[i] = acc;
                }
            }
            delta.swap(next);
        }
    }
    return grads;
}

CenterBias fit_center_bias(const std::vector<FixationMap>& fixation_maps) {
    double n = 0, sx = 0, sy = 0;
    for (const FixationMap& m : fixation_maps)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                if (m.at(y, x) != 0.0) { n += 1; sx += x; sy += y; }
    if (n < 1) throw std::invalid_argument("fit_center_bias: no fixations");

    CenterBias cb;
    cb.mu_x = sx / n;
    cb.mu_y = sy / n;
    double vx = 0, vy = 0;
    for (const FixationMap& m : fixation_maps)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x)
                if (m.at(y, x) != 0.0) {
                    vx += (x - cb.mu_x) * (x - cb.mu_x);
                    vy += (y - cb.mu_y) * (y - cb.mu_y);
                }
    cb.sigma_x = std::max(std::sqrt(vx / n), 1.0);
    cb.sigma_y = std::max(std::sqrt(vy / n), 1.0);
    cb.weight = 1.0;
    return cb;
}

namespace {

double validation_kld(const ReadoutModel& model, const std::vector<TrainSample>& set) {
    double total = 0;
    for (const TrainSample& s : set)
        total += kld_loss(forward(model, s.features).prediction, s.target);
    return total / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(ReadoutModel model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& config,
                  const std::vector<TrainSample>* validation) {
    model.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (!(config.learning_rate >= 0)) throw std::invalid_argument("train: bad learning rate");
    if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    Gradients m_state, v_state;
    for (const Layer& l : model.layers) {
        m_state.layers.emplace_back(l.out_ch, l.in_ch);
        v_state.layers.emplace_back(l.out_ch, l.in_ch);
    }
    long step = 0;

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    ReadoutModel best = model;
    double best_val = validation ? validation_kld(model, *validation)
                                 : std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            Gradients batch;
            for (const Layer& l : model.layers) batch.layers.emplace_back(l.out_ch, l.in_ch);

            for (std::size_t s = start; s < end; ++s) {
                const TrainSample& sample = dataset[order[s]];
                double loss = 0;
                Gradients g = backward(model, sample.features, sample.target,
                                       sample.fixations, config.loss, 1e-7, &loss);
                if (!std::isfinite(loss))
                    throw NumericError("train: non-finite loss at epoch " +
                                       std::to_string(epoch));
                epoch_loss += loss;
                const double scale = 1.0 / static_cast<double>(end - start);
                for (std::size_t l = 0; l < g.layers.size(); ++l) {
                    for (std::size_t i = 0; i < g.layers[l].weights.size(); ++i)
                        batch.layers[l].weights[i] += scale * g.layers[l].weights[i];
                    for (std::size_t i = 0; i < g.layers[l].bias.size(); ++i)
                        batch.layers[l].bias[i] += scale * g.layers[l].bias[i];
                }
            }

            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, step);
            const double bc2 = 1.0 - std::pow(config.beta2, step);
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto update = [&](std::vector<double>& param, std::vector<double>& m,
                                  std::vector<double>& v, const std::vector<double>& g) {
                    for (std::size_t i = 0; i < param.size(); ++i) {
                        m[i] = config.beta1 * m[i] + (1 - config.beta1) * g[i];
                        v[i] = config.beta2 * v[i] + (1 - config.beta2) * g[i] * g[i];
                        param[i] -= config.learning_rate * (m[i] / bc1) /
                                    (std::sqrt(v[i] / bc2) + config.adam_eps);
                    }
                };
                update(model.layers[l].weights, m_state.layers[l].weights,
                       v_state.layers[l].weights, batch.layers[l].weights);
                update(model.layers[l].bias, m_state.layers[l].bias,
                       v_state.layers[l].bias, batch.layers[l].bias);
            }
        }

        result.loss_trace.push_back(epoch_loss / static_cast<double>(dataset.size()));
        if (validation) {
            const double val = validation_kld(model, *validation);
            if (val < best_val) {
                best_val = val;
                best = model;
            }
        }
    }

    result.model = validation ? best : model;
    return result;
}

}  // namespace saldis
