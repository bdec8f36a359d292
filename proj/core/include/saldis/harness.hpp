#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "saldis/dissimilarity.hpp"
#include "saldis/io.hpp"
#include "saldis/metrics.hpp"
#include "saldis/readout.hpp"
#include "saldis/tensor.hpp"

namespace saldis {

/// One training sample on disk: global features, detections (annotated
/// and predicted), ground-truth saliency and fixations.
struct Scene {
    std::string id;
    FeatureMap features;
    SaliencyMap ground_truth;  // normalized distribution
    FixationMap fixations;
    int img_w = 0, img_h = 0;
    std::vector<Detection> dets_gt;
    std::vector<Detection> dets_pred;
};

enum class DetectionMode { ground_truth, predicted, random, none };

DetectionMode parse_detection_mode(const std::string& name);

void save_scene(const Scene& scene, const std::filesystem::path& dir);
Scene load_scene(const std::filesystem::path& dir, double confidence_threshold = 0.7);

void save_corpus(const std::vector<Scene>& corpus, const std::filesystem::path& dir);
std::vector<Scene> load_corpus(const std::filesystem::path& dir,
                               double confidence_threshold = 0.7);

struct SynthSpec {
    int map_h = 24, map_w = 32;     // feature / saliency grid
    int img_w = 64, img_h = 48;     // image (detector) coordinates
    int channels = 8;
    int max_objects = 6;
    int categories = 4;
    int fixations_per_scene = 20;
    double noise = 0.1;
    double signature_gain = 0.25;
    double context_gain = 0.5;
    double center_bias_strength = 0.05;
    double gt_blur_sigma = 1.5;
};

/// Deterministic synthetic corpus: rectangular objects carrying
/// per-category feature textures over a cluttered background with matched
/// pixel statistics; ground truth places more mass on category-unique and
/// larger objects, over a center-weighted background; fixations sampled
/// from the ground truth.
std::vector<Scene> synth_corpus(int n, std::uint64_t seed, const SynthSpec& spec = {});

struct Split {
    std::vector<std::size_t> train, val, test;
};

/// Deterministic 60/20/20 split by seed.
Split split_corpus(std::size_t n_scenes, std::uint64_t seed);

struct ChannelConfig {
    FusionFlags flags;
    SimilarityBackend backend = SimilarityBackend::cosine;
};

/// Detections a scene contributes under the given mode. Random mode draws
/// the annotated boxes of a donor scene (never the scene itself) and
/// recomputes dissimilarity against the host's features.
std::vector<Detection> select_detections(const std::vector<Scene>& corpus,
                                         std::size_t index, DetectionMode mode,
                                         std::uint64_t seed);

/// Fused features for one scene and detection list (appearance and size
/// channels computed from scratch).
FeatureMap fuse_scene(const Scene& scene, const std::vector<Detection>& dets,
                      const ChannelConfig& config);

TrainSample make_sample(const Scene& scene, const std::vector<Detection>& dets,
                        const ChannelConfig& config);

struct AblationRow {
    FusionFlags flags;
    std::string label;          // e.g. "baseline", "S+A", "O+S+A"
    bool diverged = false;
    std::string error;
    MetricReport report;
};

std::string flags_label(const FusionFlags& flags);

/// Trains one readout per flag subset on identical splits and seeds and
/// evaluates each on the test split. The baseline (no extra channels) row
/// comes first.
std::vector<AblationRow> run_ablation(const std::vector<Scene>& corpus,
                                      const std::vector<FusionFlags>& grid,
                                      const TrainConfig& train_config,
                                      const EvalConfig& eval_config = {},
                                      SimilarityBackend backend = SimilarityBackend::cosine);

struct RobustnessResult {
    ReadoutModel model;
    MetricReport report;
    std::vector<SaliencyMap> test_predictions;
    std::vector<std::string> test_ids;
};

/// Trains with train_mode detections (S+A channels) and evaluates the
/// test split with test_mode detections; none zeroes both channels.
RobustnessResult run_robustness(const std::vector<Scene>& corpus,
                                DetectionMode train_mode, DetectionMode test_mode,
                                const TrainConfig& train_config,
                                const EvalConfig& eval_config = {});

}  // namespace saldis
