#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "saldis/tensor.hpp"

namespace saldis {

/// One per-pixel channel-mixing (1x1) layer.
struct Layer {
    int out_ch = 0;
    int in_ch = 0;
    std::vector<double> weights;  // out_ch x in_ch, row-major
    std::vector<double> bias;     // out_ch

    Layer() = default;
    Layer(int out, int in);
    double& w(int o, int i) { return weights[static_cast<std::size_t>(o) * in_ch + i]; }
    double w(int o, int i) const { return weights[static_cast<std::size_t>(o) * in_ch + i]; }
};

/// Anisotropic Gaussian prior over pixel coordinates, added to the logits
/// in log space with the given weight.
struct CenterBias {
    double mu_x = 0, mu_y = 0;
    double sigma_x = 1, sigma_y = 1;
    double weight = 1.0;
};

/// Per-pixel readout stack (rectifier between layers, none after the
/// last, final output one channel) plus post-processing parameters.
struct ReadoutModel {
    std::vector<Layer> layers;
    std::optional<CenterBias> cb;
    double smooth_sigma = 0.0;

    int input_channels() const { return layers.empty() ? 0 : layers.front().in_ch; }
    void validate() const;
};

/// Randomly initialized model with the given hidden widths (default
/// [16, 8, 4, 1]); deterministic per seed.
ReadoutModel make_readout_model(int in_ch, std::uint64_t seed,
                                const std::vector<int>& widths = {16, 8, 4, 1});

enum class LossKind { kld, eml };

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 2;
    int epochs = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossKind loss = LossKind::kld;
    std::uint64_t seed = 0;
};

struct ForwardResult {
    Grid logits;  // post center-bias, post smoothing
    SaliencyMap prediction;
};

ForwardResult forward(const ReadoutModel& model, const FeatureMap& fused);

/// KLD(P,Q) = sum_i Q_i log(eps + Q_i / (eps + P_i)).
double kld_loss(const SaliencyMap& p, const SaliencyMap& q, double eps = 1e-7);

/// CC'(P,Q) = 1 - cov(P,Q) / (stddev(P) * stddev(Q)), in [0,2].
double cc_prime(const SaliencyMap& p, const SaliencyMap& q);

/// NSS'(P,F) = (1/N) sum_i (Rbar_i - Pbar_i) F_i with N = sum F_i and
/// Pbar, Rbar the standardized maps.
double nss_prime(const SaliencyMap& p, const FixationMap& f);

/// NSS' + CC' + KLD.
double eml_loss(const SaliencyMap& p, const SaliencyMap& q,
                const FixationMap& f, double eps = 1e-7);

/// Gradients of the selected loss w.r.t. every layer weight and bias.
struct Gradients {
    std::vector<Layer> layers;  // same shapes as the model's
};

Gradients backward(const ReadoutModel& model, const FeatureMap& fused,
                   const SaliencyMap& q, const FixationMap& f, LossKind kind,
                   double eps = 1e-7, double* loss_out = nullptr);

/// Fixation centroid and per-axis standard deviation (floored at one
/// pixel), weight 1.
CenterBias fit_center_bias(const std::vector<FixationMap>& fixation_maps);

struct TrainSample {
    FeatureMap features;
    SaliencyMap target;
    FixationMap fixations;
};

struct TrainResult {
    ReadoutModel model;
    std::vector<double> loss_trace;  // mean train loss per epoch
};

/// Deterministic Adam loop. With a validation set, returns the
/// parameters with the best validation KLD; otherwise the final ones.
TrainResult train(ReadoutModel model, const std::vector<TrainSample>& dataset,
                  const TrainConfig& config,
                  const std::vector<TrainSample>* validation = nullptr);

}  // namespace saldis
