#pragma once

#include <utility>
#include <vector>

#include "saldis/tensor.hpp"

namespace saldis {

/// Detections with their feature slices, all resized to a common spatial
/// resolution (the maxima over the raw slices). May be empty.
struct ObjectSet {
    std::vector<std::pair<Detection, FeatureMap>> objects;

    bool empty() const { return objects.empty(); }
    std::size_t size() const { return objects.size(); }
};

enum class ChannelKind { appearance, size };

/// Single-channel map at the global feature resolution. Values in [0,1],
/// zero outside all boxes.
struct ChannelMap {
    Grid map;
    ChannelKind kind = ChannelKind::appearance;
};

enum class SimilarityBackend { cosine, svcca };

struct FusionFlags {
    bool object_block = false;  // O: raw object features in place
    bool size = false;          // S: size dissimilarity channel
    bool appearance = false;    // A: appearance dissimilarity channel
};

/// Slices each detection's features from the global map and resizes every
/// slice to the common (max height, max width) resolution.
ObjectSet build_object_set(const FeatureMap& global,
                           const std::vector<Detection>& detections,
                           int detector_w, int detector_h);

/// Sum over channels of the per-channel cosine similarity between the two
/// feature maps. Each term lies in [-1,1], so the result is in [-d, d].
double pairwise_similarity(const FeatureMap& f_i, const FeatureMap& f_j,
                           double eps = 1e-8);

/// Per-object appearance dissimilarity: reciprocal of the summed pairwise
/// similarities (denominator clamped below by eps), min-max normalized to
/// [0,1]. All-equal raw scores (including a single object) map to 1.
std::vector<double> dissimilarity_scores(const ObjectSet& set, double eps = 1e-8,
                                         SimilarityBackend backend = SimilarityBackend::cosine);

/// Replicates each score over its box footprint on an (out_h, out_w)
/// grid, averaging where boxes overlap; uncovered pixels are 0.
ChannelMap rasterize_scores(const std::vector<Detection>& detections,
                            const std::vector<double>& scores, int out_h,
                            int out_w, int img_w, int img_h,
                            ChannelKind kind = ChannelKind::appearance);

/// Box area divided by image area, in (0, 1].
double normalized_size(const Detection& box, int img_w, int img_h);

/// Normalized sizes replicated over the box footprints.
ChannelMap size_channel(const std::vector<Detection>& detections, int out_h,
                        int out_w, int img_w, int img_h);

/// Channel-wise concatenation of the global features with the selected
/// extra channels. The O block places each object's features at its box
/// footprint (count-averaged per channel under overlaps, zero elsewhere)
/// and contributes the object slices' channel count.
FeatureMap build_fused_features(const FeatureMap& global, const ObjectSet& set,
                                const ChannelMap& appearance,
                                const ChannelMap& size, const FusionFlags& flags,
                                int img_w, int img_h);

}  // namespace saldis
