#include "saldis/dissimilarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "saldis/svcca.hpp"

namespace saldis {

ObjectSet build_object_set(const FeatureMap& global,
                           const std::vector<Detection>& detections,
                           int detector_w, int detector_h) {
    ObjectSet set;
    if (detections.empty()) return set;

    std::vector<FeatureMap> slices;
    slices.reserve(detections.size());
    int max_h = 1, max_w = 1;
    for (const Detection& d : detections) {
        slices.push_back(slice_features(global, d, detector_w, detector_h));
        max_h = std::max(max_h, slices.back().height);
        max_w = std::max(max_w, slices.back().width);
    }
    for (std::size_t i = 0; i < detections.size(); ++i)
        set.objects.emplace_back(detections[i],
                                 bilinear_resize(slices[i], max_h, max_w));
    return set;
}

double pairwise_similarity(const FeatureMap& f_i, const FeatureMap& f_j,
                           double eps) {
    if (f_i.height != f_j.height || f_i.width != f_j.width ||
        f_i.channels != f_j.channels)
        throw std::invalid_argument("pairwise_similarity: dimension mismatch");
    if (!(eps > 0)) throw std::invalid_argument("pairwise_similarity: eps must be > 0");

    const int hw = f_i.height * f_i.width;
    double total = 0.0;
    for (int k = 0; k < f_i.channels; ++k) {
        double dot = 0, ni = 0, nj = 0;
        for (int p = 0; p < hw; ++p) {
            const double a = f_i.data[static_cast<std::size_t>(p) * f_i.channels + k];
            const double b = f_j.data[static_cast<std::size_t>(p) * f_j.channels + k];
            dot += a * b;
            ni += a * a;
            nj += b * b;
        }
        total += dot / std::max(std::sqrt(ni) * std::sqrt(nj), eps);
    }
    return total;
}

std::vector<double> dissimilarity_scores(const ObjectSet& set, double eps,
                                         SimilarityBackend backend) {
    if (!(eps > 0)) throw std::invalid_argument("dissimilarity_scores: eps must be > 0");
    const std::size_t n = set.size();
    if (n == 0) return {};
    if (n == 1) return {1.0};

    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sim_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const FeatureMap& fi = set.objects[i].second;
            const FeatureMap& fj = set.objects[j].second;
            if (backend == SimilarityBackend::cosine) {
                sim_sum += pairwise_similarity(fi, fj, eps);
            } else {
                sim_sum += svcca_score(FeatureMatrix::from_feature_map(fi),
                                       FeatureMatrix::from_feature_map(fj));
            }
        }
        raw[i] = 1.0 / std::max(sim_sum, eps);
    }

    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (*hi - *lo <= 0.0) return std::vector<double>(n, 1.0);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = (raw[i] - *lo) / (*hi - *lo);
    return scores;
}

ChannelMap rasterize_scores(const std::vector<Detection>& detections,
                            const std::vector<double>& scores, int out_h,
                            int out_w, int img_w, int img_h, ChannelKind kind) {
    if (detections.size() != scores.size())
        throw std::invalid_argument("rasterize_scores: detections/scores length mismatch");

    Grid sum(out_h, out_w), count(out_h, out_w);
    for (std::size_t i = 0; i < detections.size(); ++i) {
        validate_detection(detections[i], img_w, img_h);
        const PixelRect r = project_box(detections[i], img_w, img_h, out_w, out_h);
        for (int y = r.y0; y < r.y1; ++y)
            for (int x = r.x0; x < r.x1; ++x) {
                sum.at(y, x) += scores[i];
                count.at(y, x) += 1.0;
            }
    }
    for (std::size_t i = 0; i < sum.data.size(); ++i)
        if (count.data[i] > 0) sum.data[i] /= count.data[i];
    return ChannelMap{std::move(sum), kind};
}

double normalized_size(const Detection& box, int img_w, int img_h) {
    validate_detection(box, img_w, img_h);
    return (box.x_max - box.x_min) * (box.y_max - box.y_min) /
           (static_cast<double>(img_w) * img_h);
}

ChannelMap size_channel(const std::vector<Detection>& detections, int out_h,
                        int out_w, int img_w, int img_h) {
    std::vector<double> sizes(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i)
        sizes[i] = normalized_size(detections[i], img_w, img_h);
    return rasterize_scores(detections, sizes, out_h, out_w, img_w, img_h,
                            ChannelKind::size);
}

FeatureMap build_fused_features(const FeatureMap& global, const ObjectSet& set,
                                const ChannelMap& appearance,
                                const ChannelMap& size, const FusionFlags& flags,
                                int img_w, int img_h) {
    const int h = global.height, w = global.width;
    int extra = 0;
    // With no detections the O block is all zeros; its width defaults to the
    // global channel count so fused shapes stay consistent across scenes.
    const int d_obj = set.empty() ? global.channels
                                  : set.objects.front().second.channels;
    if (flags.object_block) extra += d_obj;
    if (flags.size) {
        if (size.map.height != h || size.map.width != w)
            throw std::invalid_argument("build_fused_features: size channel dimension mismatch");
        extra += 1;
    }
    if (flags.appearance) {
        if (appearance.map.height != h || appearance.map.width != w)
            throw std::invalid_argument("build_fused_features: appearance channel dimension mismatch");
        extra += 1;
    }

    FeatureMap fused(h, w, global.channels + extra);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < global.channels; ++k)
                fused.at(y, x, k) = global.at(y, x, k);

    int next = global.channels;
    if (flags.object_block) {
        // Place each object's features back under its box, count-averaged
        // per channel where boxes overlap.
        Grid count(h, w);
        for (const auto& [box, feat] : set.objects) {
            const PixelRect r = project_box(box, img_w, img_h, w, h);
            const FeatureMap local = bilinear_resize(feat, r.height(), r.width());
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) {
                    for (int k = 0; k < d_obj; ++k)
                        fused.at(y, x, next + k) += local.at(y - r.y0, x - r.x0, k);
                    count.at(y, x) += 1.0;
                }
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (count.at(y, x) > 0)
                    for (int k = 0; k < d_obj; ++k)
                        fused.at(y, x, next + k) /= count.at(y, x);
        next += d_obj;
    }
    if (flags.size) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) fused.at(y, x, next) = size.map.at(y, x);
        ++next;
    }
    if (flags.appearance) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) fused.at(y, x, next) = appearance.map.at(y, x);
        ++next;
    }
    return fused;
}

}  // namespace saldis
