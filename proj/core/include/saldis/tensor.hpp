#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace saldis {

/// Rank-2 tensor of doubles, row-major. Also used for saliency maps
/// (normalized, nonnegative) and fixation maps (binary 0/1 entries).
struct Grid {
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Grid() = default;
    Grid(int h, int w, double fill = 0.0);

    double& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }

    double sum() const;

    bool operator==(const Grid&) const = default;
};

using SaliencyMap = Grid;
using FixationMap = Grid;

/// Dense rank-3 tensor (height x width x channels), row-major,
/// channel-minor. Holds global encoder features, object slices and
/// fused inputs.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int h, int w, int c, double fill = 0.0);

    double& at(int y, int x, int k) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + k];
    }
    double at(int y, int x, int k) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + k];
    }
    std::size_t size() const { return data.size(); }

    /// Single-channel view as a Grid (channels must be 1).
    Grid as_grid() const;
    static FeatureMap from_grid(const Grid& g);

    bool operator==(const FeatureMap&) const = default;
};

/// Axis-aligned bounding box in image pixel coordinates,
/// inclusive-exclusive ([x_min, x_max) x [y_min, y_max)).
struct Detection {
    double x_min = 0;
    double y_min = 0;
    double x_max = 0;
    double y_max = 0;
    double confidence = 1.0;
    std::optional<int> class_id;
};

/// Integer pixel rectangle on a feature grid, half-open.
struct PixelRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

void validate_detection(const Detection& box, double img_w, double img_h);

/// Maps a detection from (src_w, src_h) coordinates onto a (dst_w, dst_h)
/// grid: min coordinates floored, max coordinates ceiled, clamped to the
/// grid, minimum resulting extent 1x1. Throws if the box lands fully
/// outside the grid.
PixelRect project_box(const Detection& box, double src_w, double src_h,
                      int dst_w, int dst_h);

/// Per-channel bilinear interpolation with corner-aligned sampling:
/// source corners map exactly to destination corners.
FeatureMap bilinear_resize(const FeatureMap& src, int out_h, int out_w);

/// Extracts the sub-tensor of `global` under `box`, with the box given in
/// detector coordinates (detector_w x detector_h) and rescaled onto the
/// global map via project_box.
FeatureMap slice_features(const FeatureMap& global, const Detection& box,
                          int detector_w, int detector_h);

/// Separable Gaussian convolution, kernel radius ceil(3*sigma). The
/// truncated kernel matrix is rescaled to be doubly stochastic (Sinkhorn
/// scaling), so constants are preserved and total mass is conserved; the
/// operator is symmetric, hence its own adjoint. sigma = 0 is the identity.
Grid gaussian_blur(const Grid& map, double sigma);

/// exp(logit - max) / sum; invariant to adding a constant to all logits.
SaliencyMap softmax_2d(const Grid& logits);

/// Divides a nonnegative map by its total sum. All-zero maps rejected.
SaliencyMap normalize_to_distribution(const Grid& map);

// Scalar statistics over a grid (population variance convention).
double grid_mean(const Grid& g);
double grid_stddev(const Grid& g);
double grid_covariance(const Grid& a, const Grid& b);

}  // namespace saldis
