#include "saldis/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "saldis/errors.hpp"

namespace saldis {

namespace fs = std::filesystem;

DetectionMode parse_detection_mode(const std::string& name) {
    if (name == "gt" || name == "ground_truth") return DetectionMode::ground_truth;
    if (name == "predicted" || name == "pred") return DetectionMode::predicted;
    if (name == "random") return DetectionMode::random;
    if (name == "none") return DetectionMode::none;
    throw DataError("unknown detection mode: " + name);
}

void save_scene(const Scene& scene, const fs::path& dir) {
    fs::create_directories(dir);
    save_feature_tensor(scene.features, dir / "features.ftn");
    save_grid(scene.ground_truth, dir / "saliency.ftn");
    save_grid(scene.fixations, dir / "fixations.ftn");
    save_detections(scene.dets_gt, dir / "dets_gt.txt");
    save_detections(scene.dets_pred, dir / "dets_pred.txt");
    std::ofstream meta(dir / "meta.txt");
    meta << "img_w=" << scene.img_w << "\nimg_h=" << scene.img_h << "\n";
}

Scene load_scene(const fs::path& dir, double confidence_threshold) {
    Scene scene;
    scene.id = dir.filename().string();
    scene.features = load_feature_tensor(dir / "features.ftn");
    scene.ground_truth = load_grid(dir / "saliency.ftn");
    scene.fixations = load_grid(dir / "fixations.ftn");
    scene.dets_gt = load_detections(dir / "dets_gt.txt", confidence_threshold);
    scene.dets_pred = load_detections(dir / "dets_pred.txt", confidence_threshold);

    std::ifstream meta(dir / "meta.txt");
    if (!meta) throw DataError("missing meta.txt in " + dir.string());
    std::string line;
    while (std::getline(meta, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const int value = std::stoi(line.substr(eq + 1));
        if (key == "img_w") scene.img_w = value;
        if (key == "img_h") scene.img_h = value;
    }
    if (scene.img_w < 1 || scene.img_h < 1)
        throw DataError("bad image dimensions in " + dir.string());
    if (scene.ground_truth.height != scene.features.height ||
        scene.ground_truth.width != scene.features.width ||
        scene.fixations.height != scene.features.height ||
        scene.fixations.width != scene.features.width)
        throw DataError("inconsistent map dimensions in scene " + scene.id);
    return scene;
}

void save_corpus(const std::vector<Scene>& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    for (const Scene& scene : corpus) save_scene(scene, dir / scene.id);
}

std::vector<Scene> load_corpus(const fs::path& dir, double confidence_threshold) {
    if (!fs::is_directory(dir)) throw DataError("not a corpus directory: " + dir.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw DataError("empty corpus directory: " + dir.string());
    std::vector<Scene> corpus;
    for (const fs::path& d : dirs) corpus.push_back(load_scene(d, confidence_threshold));
    return corpus;
}

namespace {

double uniform01(std::mt19937_64& rng) {
    return (rng() >> 11) * 0x1.0p-53;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

double normal(std::mt19937_64& rng) {
    // Box-Muller; implementation pinned here so corpora are reproducible
    // across standard libraries.
    const double u1 = std::max(uniform01(rng), 1e-300);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

std::vector<Scene> synth_corpus(int n, std::uint64_t seed, const SynthSpec& spec) {
    if (n < 1) throw std::invalid_argument("synth_corpus: n must be >= 1");

    // Corpus-wide category signatures: random unit vectors in channel space.
    std::mt19937_64 corpus_rng(seed);
    std::vector<std::vector<double>> signatures(spec.categories + 1);
    for (auto& sig : signatures) {
        sig.resize(spec.channels);
        double norm = 0;
        for (double& v : sig) { v = normal(corpus_rng); norm += v * v; }
        norm = std::sqrt(norm);
        for (double& v : sig) v /= norm;
    }
    // the last direction is a shared scene context present everywhere, so
    // feature slices of object-free regions still correlate strongly
    const std::vector<double>& context = signatures.back();

    // Per-category appearance textures in normalized box coordinates.
    // Two objects of the same category correlate through the pattern no
    // matter their box sizes, while the texture's zero mean keeps single
    // pixels uninformative.
    constexpr int kTexRes = 4;
    std::vector<std::array<double, kTexRes * kTexRes>> textures(spec.categories);
    for (auto& tex : textures) {
        double mean = 0;
        for (double& v : tex) { v = normal(corpus_rng); mean += v; }
        for (double& v : tex) v -= mean / tex.size();
    }
    auto texture_at = [&](int cat, double u, double v) {
        const double gu = std::clamp(u, 0.0, 1.0) * (kTexRes - 1);
        const double gv = std::clamp(v, 0.0, 1.0) * (kTexRes - 1);
        const int iu = std::min(static_cast<int>(gu), kTexRes - 2);
        const int iv = std::min(static_cast<int>(gv), kTexRes - 2);
        const double fu = gu - iu, fv = gv - iv;
        const auto& t = textures[cat];
        auto cell = [&](int yy, int xx) { return t[yy * kTexRes + xx]; };
        return (1 - fv) * ((1 - fu) * cell(iv, iu) + fu * cell(iv, iu + 1)) +
               fv * ((1 - fu) * cell(iv + 1, iu) + fu * cell(iv + 1, iu + 1));
    };

    std::vector<Scene> corpus;
    for (int s = 0; s < n; ++s) {
        std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (s + 1));
        Scene scene;
        {
            std::ostringstream id;
            id << "scene_" << std::setw(4) << std::setfill('0') << s;
            scene.id = id.str();
        }
        scene.img_w = spec.img_w;
        scene.img_h = spec.img_h;
        scene.features = FeatureMap(spec.map_h, spec.map_w, spec.channels);
        for (int y = 0; y < spec.map_h; ++y)
            for (int x = 0; x < spec.map_w; ++x)
                for (int c = 0; c < spec.channels; ++c)
                    scene.features.at(y, x, c) = spec.context_gain * context[c];

        const int k = uniform_int(rng, spec.max_objects > 0 ? 1 : 0,
                                  spec.max_objects);
        std::vector<int> categories(k);
        for (int i = 0; i < k; ++i) {
            const int cat = uniform_int(rng, 0, spec.categories - 1);
            categories[i] = cat;
            const int bw = uniform_int(rng, spec.img_w / 6, spec.img_w / 3);
            const int bh = uniform_int(rng, spec.img_h / 6, spec.img_h / 3);
            // photographer's bias: objects cluster around the image center
            const int x0 = std::clamp(
                static_cast<int>(std::lround((spec.img_w - bw) / 2.0 +
                                             normal(rng) * spec.img_w / 8.0)),
                0, spec.img_w - bw);
            const int y0 = std::clamp(
                static_cast<int>(std::lround((spec.img_h - bh) / 2.0 +
                                             normal(rng) * spec.img_h / 8.0)),
                0, spec.img_h - bh);
            Detection d;
            d.x_min = x0;
            d.y_min = y0;
            d.x_max = x0 + bw;
            d.y_max = y0 + bh;
            d.confidence = 1.0;
            d.class_id = cat;
            scene.dets_gt.push_back(d);
        }

        // Background clutter: patches drawn from the same signature
        // directions and amplitude distribution as object textures, so a
        // single pixel carries no evidence of whether it belongs to an
        // object. Objects occlude the clutter behind them.
        Grid occupied(spec.map_h, spec.map_w);
        for (const Detection& d : scene.dets_gt) {
            const PixelRect r = project_box(d, spec.img_w, spec.img_h,
                                            spec.map_w, spec.map_h);
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) occupied.at(y, x) = 1.0;
        }
        constexpr int kClutterCell = 2;
        for (int cy0 = 0; cy0 < spec.map_h; cy0 += kClutterCell)
            for (int cx0 = 0; cx0 < spec.map_w; cx0 += kClutterCell) {
                const int cat = uniform_int(rng, 0, spec.categories - 1);
                const double amp = normal(rng);
                for (int y = cy0; y < std::min(cy0 + kClutterCell, spec.map_h); ++y)
                    for (int x = cx0; x < std::min(cx0 + kClutterCell, spec.map_w);
                         ++x) {
                        if (occupied.at(y, x) > 0) continue;
                        for (int c = 0; c < spec.channels; ++c)
                            scene.features.at(y, x, c) +=
                                spec.signature_gain * amp * signatures[cat][c];
                    }
            }

        for (int i = 0; i < k; ++i) {
            const int cat = categories[i];
            const PixelRect r = project_box(scene.dets_gt[i], spec.img_w,
                                            spec.img_h, spec.map_w, spec.map_h);
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) {
                    const double u = (r.x1 - r.x0) > 1
                                         ? double(x - r.x0) / (r.x1 - r.x0 - 1)
                                         : 0.5;
                    const double v = (r.y1 - r.y0) > 1
                                         ? double(y - r.y0) / (r.y1 - r.y0 - 1)
                                         : 0.5;
                    const double phi = texture_at(cat, u, v);
                    for (int c = 0; c < spec.channels; ++c)
                        scene.features.at(y, x, c) +=
                            spec.signature_gain * phi * signatures[cat][c];
                }
        }
        for (double& v : scene.features.data) v += spec.noise * normal(rng);

        // Ground truth: center Gaussian background plus per-object mass
        // favoring category-unique and larger objects.
        Grid gt(spec.map_h, spec.map_w);
        const double cx = (spec.map_w - 1) / 2.0, cy = (spec.map_h - 1) / 2.0;
        const double sx = spec.map_w / 5.0, sy = spec.map_h / 5.0;
        for (int y = 0; y < spec.map_h; ++y)
            for (int x = 0; x < spec.map_w; ++x) {
                const double dx = (x - cx) / sx, dy = (y - cy) / sy;
                gt.at(y, x) = 0.2 + spec.center_bias_strength *
                                        std::exp(-0.5 * (dx * dx + dy * dy));
            }
        // Planted rule: objects that stand out from the rest of the scene
        // and cover more area receive more mass. Both drivers are
        // scene-relative, so a per-pixel readout can only recover them
        // from the fused channels, not from the local features alone.
        std::vector<double> dissim;
        if (k > 0) {
            const ObjectSet set = build_object_set(scene.features, scene.dets_gt,
                                                   spec.img_w, spec.img_h);
            dissim = dissimilarity_scores(set);
        }
        for (int i = 0; i < k; ++i) {
            const double weight = 1.5 * dissim[i] +
                                  0.5 * normalized_size(scene.dets_gt[i],
                                                        spec.img_w, spec.img_h);
            const PixelRect r = project_box(scene.dets_gt[i], spec.img_w,
                                            spec.img_h, spec.map_w, spec.map_h);
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) gt.at(y, x) += weight;
        }
        // Log-domain smoothing keeps the target inside the family a
        // logit-smoothing readout can represent exactly.
        Grid gt_logits(spec.map_h, spec.map_w);
        for (std::size_t i = 0; i < gt.data.size(); ++i)
            gt_logits.data[i] = std::log(gt.data[i]);
        scene.ground_truth =
            softmax_2d(gaussian_blur(gt_logits, spec.gt_blur_sigma));

        // Fixations: inverse-CDF sampling from the ground truth.
        std::vector<double> cdf(scene.ground_truth.data.size());
        std::partial_sum(scene.ground_truth.data.begin(),
                         scene.ground_truth.data.end(), cdf.begin());
        scene.fixations = Grid(spec.map_h, spec.map_w);
        for (int i = 0; i < spec.fixations_per_scene; ++i) {
            const double u = uniform01(rng) * cdf.back();
            const std::size_t idx =
                std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
            scene.fixations.data[std::min(idx, cdf.size() - 1)] = 1.0;
        }

        // Predicted detections: jittered annotated boxes.
        for (const Detection& d : scene.dets_gt) {
            Detection p = d;
            p.x_min = std::clamp(d.x_min + uniform_int(rng, -2, 2), 0.0, d.x_max - 1.0);
            p.y_min = std::clamp(d.y_min + uniform_int(rng, -2, 2), 0.0, d.y_max - 1.0);
            p.x_max = std::clamp(d.x_max + uniform_int(rng, -2, 2), p.x_min + 1.0,
                                 static_cast<double>(spec.img_w));
            p.y_max = std::clamp(d.y_max + uniform_int(rng, -2, 2), p.y_min + 1.0,
                                 static_cast<double>(spec.img_h));
            p.confidence = 0.75 + 0.24 * uniform01(rng);
            scene.dets_pred.push_back(p);
        }

        corpus.push_back(std::move(scene));
    }
    return corpus;
}

Split split_corpus(std::size_t n_scenes, std::uint64_t seed) {
    std::vector<std::size_t> order(n_scenes);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    Split split;
    const std::size_t n_train = n_scenes * 6 / 10;
    const std::size_t n_val = n_scenes * 2 / 10;
    for (std::size_t i = 0; i < n_scenes; ++i) {
        if (i < n_train) split.train.push_back(order[i]);
        else if (i < n_train + n_val) split.val.push_back(order[i]);
        else split.test.push_back(order[i]);
    }
    return split;
}

std::vector<Detection> select_detections(const std::vector<Scene>& corpus,
                                         std::size_t index, DetectionMode mode,
                                         std::uint64_t seed) {
    switch (mode) {
        case DetectionMode::ground_truth:
            return corpus[index].dets_gt;
        case DetectionMode::predicted:
            return corpus[index].dets_pred;
        case DetectionMode::none:
            return {};
        case DetectionMode::random: {
            if (corpus.size() < 2)
                throw DataError("random detection mode requires >= 2 scenes");
            std::mt19937_64 rng(seed + 0x517cc1b727220a95ULL * (index + 1));
            std::size_t donor = rng() % (corpus.size() - 1);
            if (donor >= index) ++donor;  // never the scene itself
            return corpus[donor].dets_gt;
        }
    }
    throw std::invalid_argument("select_detections: bad mode");
}

FeatureMap fuse_scene(const Scene& scene, const std::vector<Detection>& dets,
                      const ChannelConfig& config) {
    const int h = scene.features.height, w = scene.features.width;
    ObjectSet set;
    ChannelMap appearance{Grid(h, w), ChannelKind::appearance};
    ChannelMap size{Grid(h, w), ChannelKind::size};
    if (!dets.empty()) {
        set = build_object_set(scene.features, dets, scene.img_w, scene.img_h);
        const std::vector<double> scores =
            dissimilarity_scores(set, 1e-8, config.backend);
        appearance = rasterize_scores(dets, scores, h, w, scene.img_w, scene.img_h);
        size = size_channel(dets, h, w, scene.img_w, scene.img_h);
    }
    return build_fused_features(scene.features, set, appearance, size,
                                config.flags, scene.img_w, scene.img_h);
}

TrainSample make_sample(const Scene& scene, const std::vector<Detection>& dets,
                        const ChannelConfig& config) {
    return TrainSample{fuse_scene(scene, dets, config), scene.ground_truth,
                       scene.fixations};
}

std::string flags_label(const FusionFlags& flags) {
    std::string label;
    if (flags.object_block) label += "O+";
    if (flags.size) label += "S+";
    if (flags.appearance) label += "A+";
    if (label.empty()) return "baseline";
    label.pop_back();
    return label;
}

namespace {

// Output smoothing for trained readouts; matches the ground-truth blur of
// the synthetic corpus so box edges are not a systematic error floor.
constexpr double kDecoderSmoothing = 1.5;

struct DatasetBundle {
    std::vector<TrainSample> train, val, test;
    std::vector<SaliencyMap> test_gt;
    std::vector<FixationMap> test_fix;
    std::vector<std::string> test_ids;
};

DatasetBundle build_datasets(const std::vector<Scene>& corpus, const Split& split,
                             DetectionMode train_mode, DetectionMode test_mode,
                             const ChannelConfig& config, std::uint64_t seed) {
    DatasetBundle bundle;
    for (std::size_t i : split.train)
        bundle.train.push_back(make_sample(
            corpus[i], select_detections(corpus, i, train_mode, seed), config));
    for (std::size_t i : split.val)
        bundle.val.push_back(make_sample(
            corpus[i], select_detections(corpus, i, train_mode, seed), config));
    for (std::size_t i : split.test) {
        bundle.test.push_back(make_sample(
            corpus[i], select_detections(corpus, i, test_mode, seed), config));
        bundle.test_gt.push_back(corpus[i].ground_truth);
        bundle.test_fix.push_back(corpus[i].fixations);
        bundle.test_ids.push_back(corpus[i].id);
    }
    return bundle;
}

MetricReport evaluate_model(const ReadoutModel& model, const DatasetBundle& bundle,
                            const EvalConfig& eval_config,
                            std::vector<SaliencyMap>* predictions_out = nullptr) {
    std::vector<SaliencyMap> predictions;
    for (const TrainSample& s : bundle.test)
        predictions.push_back(forward(model, s.features).prediction);
    MetricReport report = evaluate(predictions, bundle.test_gt, bundle.test_fix,
                                   bundle.test_ids, eval_config);
    if (predictions_out) *predictions_out = std::move(predictions);
    return report;
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::vector<Scene>& corpus,
                                      const std::vector<FusionFlags>& grid,
                                      const TrainConfig& train_config,
                                      const EvalConfig& eval_config,
                                      SimilarityBackend backend) {
    const Split split = split_corpus(corpus.size(), train_config.seed);

    std::vector<FusionFlags> configs;
    configs.push_back(FusionFlags{});  // baseline first
    configs.insert(configs.end(), grid.begin(), grid.end());

    std::vector<AblationRow> rows;
    for (const FusionFlags& flags : configs) {
        AblationRow row;
        row.flags = flags;
        row.label = flags_label(flags);
        try {
            const ChannelConfig config{flags, backend};
            const DatasetBundle bundle =
                build_datasets(corpus, split, DetectionMode::predicted,
                               DetectionMode::predicted, config, train_config.seed);
            ReadoutModel model = make_readout_model(
                bundle.train.front().features.channels, train_config.seed);
            model.smooth_sigma = kDecoderSmoothing;
            const TrainResult trained =
                train(std::move(model), bundle.train, train_config, &bundle.val);
            row.report = evaluate_model(trained.model, bundle, eval_config);
        } catch (const NumericError& e) {
            row.diverged = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

RobustnessResult run_robustness(const std::vector<Scene>& corpus,
                                DetectionMode train_mode, DetectionMode test_mode,
                                const TrainConfig& train_config,
                                const EvalConfig& eval_config) {
    const Split split = split_corpus(corpus.size(), train_config.seed);
    const ChannelConfig config{FusionFlags{false, true, true},
                               SimilarityBackend::cosine};
    const DatasetBundle bundle = build_datasets(corpus, split, train_mode,
                                                test_mode, config,
                                                train_config.seed);
    ReadoutModel model = make_readout_model(
        bundle.train.front().features.channels, train_config.seed);
    model.smooth_sigma = kDecoderSmoothing;
    const TrainResult trained =
        train(std::move(model), bundle.train, train_config, &bundle.val);

    RobustnessResult result;
    result.model = trained.model;
    result.test_ids = bundle.test_ids;
    result.report = evaluate_model(trained.model, bundle, eval_config,
                                   &result.test_predictions);
    return result;
}

}  // namespace saldis
