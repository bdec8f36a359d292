#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "saldis/metrics.hpp"
#include "saldis/readout.hpp"
#include "saldis/tensor.hpp"

namespace saldis {

// FTN1: magic "FTN1", then height, width, channels as 32-bit LE unsigned,
// then h*w*c 32-bit LE IEEE-754 floats, row-major, channel-minor.
void save_feature_tensor(const FeatureMap& map, const std::filesystem::path& path);
FeatureMap load_feature_tensor(const std::filesystem::path& path);

// Single-channel convenience wrappers for saliency / fixation maps.
void save_grid(const Grid& g, const std::filesystem::path& path);
Grid load_grid(const std::filesystem::path& path);

/// Text detections: one per line, "x_min y_min x_max y_max confidence
/// [class_id]", '#' comments. Detections at or below the confidence
/// threshold are dropped; order preserved.
std::vector<Detection> load_detections(const std::filesystem::path& path,
                                       double confidence_threshold = 0.7);
void save_detections(const std::vector<Detection>& detections,
                     const std::filesystem::path& path);

// RDM1 checkpoint: magic, layer count, per-layer dims + 64-bit LE
// parameters, center-bias fields, smoothing sigma. Round-trips bit-exactly.
void save_checkpoint(const ReadoutModel& model, const std::filesystem::path& path);
ReadoutModel load_checkpoint(const std::filesystem::path& path);

/// "id.metric=value" lines per image, then "mean.metric=value" and
/// "skipped.metric=count" lines.
void write_report(const MetricReport& report, const std::filesystem::path& path);
std::string format_report(const MetricReport& report);

}  // namespace saldis
