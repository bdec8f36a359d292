#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saldis/tensor.hpp"

namespace saldis {

/// Fixations-above-threshold ROC area, thresholds swept over the map's
/// distinct values (ties counted with the >= convention, trapezoidal
/// area). Negatives are all non-fixation pixels.
double auc_judd(const SaliencyMap& p, const FixationMap& f);

struct ShuffledAucConfig {
    int n_splits = 10;
    std::uint64_t seed = 0;
};

/// ROC area with negatives sampled (without replacement, per split) from
/// the pooled fixation locations of other images, excluding pixels
/// fixated in F; averaged over n_splits resamplings.
double shuffled_auc(const SaliencyMap& p, const FixationMap& f,
                    const std::vector<FixationMap>& other_fixations,
                    const ShuffledAucConfig& config = {});

/// Mean standardized saliency at the fixation locations.
double nss_metric(const SaliencyMap& p, const FixationMap& f);

/// Same formula as the KLD training loss.
double kld_metric(const SaliencyMap& p, const SaliencyMap& q, double eps = 1e-7);

/// Pearson correlation between the two maps, in [-1,1].
double cc_metric(const SaliencyMap& p, const SaliencyMap& q);

/// Histogram intersection: sum of pixel-wise minima of two distributions.
double sim_metric(const SaliencyMap& p, const SaliencyMap& q);

inline const std::vector<std::string> kMetricNames = {"aucj", "sauc", "nss",
                                                      "kld",  "cc",   "sim"};

struct MetricReport {
    // metric name -> per-image values (nullopt where the image was
    // skipped for that metric).
    std::map<std::string, std::vector<std::optional<double>>> per_image;
    std::map<std::string, double> mean;     // over non-skipped images
    std::map<std::string, int> skipped;     // skip counts per metric
    std::vector<std::string> image_ids;
};

struct EvalConfig {
    double kld_eps = 1e-7;
    ShuffledAucConfig sauc;
    bool with_sauc = true;
};

/// Per-image metrics plus arithmetic means. Images failing a metric's
/// preconditions are recorded as skipped for that metric only.
MetricReport evaluate(const std::vector<SaliencyMap>& predictions,
                      const std::vector<SaliencyMap>& ground_truths,
                      const std::vector<FixationMap>& fixations,
                      const std::vector<std::string>& image_ids,
                      const EvalConfig& config = {});

}  // namespace saldis
