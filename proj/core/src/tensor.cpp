#include "saldis/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace saldis {

Grid::Grid(int h, int w, double fill)
    : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
    if (h < 1 || w < 1) throw std::invalid_argument("Grid dimensions must be >= 1");
}

double Grid::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

FeatureMap::FeatureMap(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h < 1 || w < 1 || c < 1)
        throw std::invalid_argument("FeatureMap dimensions must be >= 1");
}

Grid FeatureMap::as_grid() const {
    if (channels != 1)
        throw std::invalid_argument("as_grid requires a single-channel map");
    Grid g(height, width);
    g.data = data;
    return g;
}

FeatureMap FeatureMap::from_grid(const Grid& g) {
    FeatureMap m(g.height, g.width, 1);
    m.data = g.data;
    return m;
}

void validate_detection(const Detection& box, double img_w, double img_h) {
    if (!(box.x_min >= 0 && box.x_min < box.x_max && box.x_max <= img_w &&
          box.y_min >= 0 && box.y_min < box.y_max && box.y_max <= img_h))
        throw std::invalid_argument(
            "invalid detection box [" + std::to_string(box.x_min) + "," +
            std::to_string(box.y_min) + "," + std::to_string(box.x_max) + "," +
            std::to_string(box.y_max) + "] for image " + std::to_string(img_w) +
            "x" + std::to_string(img_h));
    if (!(std::isfinite(box.confidence) && box.confidence >= 0.0 &&
          box.confidence <= 1.0))
        throw std::invalid_argument("detection confidence outside [0,1]");
}

PixelRect project_box(const Detection& box, double src_w, double src_h,
                      int dst_w, int dst_h) {
    const double sx = static_cast<double>(dst_w) / src_w;
    const double sy = static_cast<double>(dst_h) / src_h;
    int x0 = static_cast<int>(std::floor(box.x_min * sx));
    int x1 = static_cast<int>(std::ceil(box.x_max * sx));
    int y0 = static_cast<int>(std::floor(box.y_min * sy));
    int y1 = static_cast<int>(std::ceil(box.y_max * sy));
    if (x0 >= dst_w || y0 >= dst_h || x1 <= 0 || y1 <= 0)
        throw std::invalid_argument(
            "detection box [" + std::to_string(box.x_min) + "," +
            std::to_string(box.y_min) + "," + std::to_string(box.x_max) + "," +
            std::to_string(box.y_max) + "] falls outside the target grid");
    x0 = std::clamp(x0, 0, dst_w - 1);
    y0 = std::clamp(y0, 0, dst_h - 1);
    x1 = std::clamp(x1, x0 + 1, dst_w);
    y1 = std::clamp(y1, y0 + 1, dst_h);
    return PixelRect{x0, y0, x1, y1};
}

FeatureMap bilinear_resize(const FeatureMap& src, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bilinear_resize: output dimensions must be >= 1");
    if (out_h == src.height && out_w == src.width) return src;

    FeatureMap dst(out_h, out_w, src.channels);
    const double sy = out_h > 1 ? double(src.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? double(src.width - 1) / (out_w - 1) : 0.0;
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = oy * sy;
        int y0 = std::min(static_cast<int>(fy), src.height - 1);
        int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = ox * sx;
            int x0 = std::min(static_cast<int>(fx), src.width - 1);
            int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int k = 0; k < src.channels; ++k) {
                const double top = src.at(y0, x0, k) * (1 - wx) + src.at(y0, x1, k) * wx;
                const double bot = src.at(y1, x0, k) * (1 - wx) + src.at(y1, x1, k) * wx;
                dst.at(oy, ox, k) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

FeatureMap slice_features(const FeatureMap& global, const Detection& box,
                          int detector_w, int detector_h) {
    if (detector_w < 1 || detector_h < 1)
        throw std::invalid_argument("slice_features: detector dimensions must be >= 1");
    validate_detection(box, detector_w, detector_h);
    const PixelRect r = project_box(box, detector_w, detector_h,
                                    global.width, global.height);
    FeatureMap out(r.height(), r.width(), global.channels);
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            for (int k = 0; k < global.channels; ++k)
                out.at(y - r.y0, x - r.x0, k) = global.at(y, x, k);
    return out;
}

namespace {

// Doubly stochastic 1-D blur operator: truncated Gaussian band rescaled
// by symmetric Sinkhorn iteration so every row and column sums to 1.
struct BlurOperator {
    int n = 0;
    int radius = 0;
    std::vector<double> kernel;  // radius+1 entries, kernel[|t|]
    std::vector<double> scale;   // per-index symmetric scaling d_i

    double weight(int i, int j) const {
        const int t = std::abs(i - j);
        if (t > radius) return 0.0;
        return scale[i] * kernel[t] * scale[j];
    }
};

BlurOperator make_blur_operator(int n, double sigma) {
    BlurOperator op;
    op.n = n;
    op.radius = static_cast<int>(std::ceil(3.0 * sigma));
    op.kernel.resize(op.radius + 1);
    double norm = 0.0;
    for (int t = 0; t <= op.radius; ++t) {
        op.kernel[t] = std::exp(-0.5 * t * t / (sigma * sigma));
        norm += (t == 0 ? 1.0 : 2.0) * op.kernel[t];
    }
    for (double& k : op.kernel) k /= norm;

    op.scale.assign(n, 1.0);
    std::vector<double> next(n);
    for (int iter = 0; iter < 200; ++iter) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            double row = 0.0;
            const int lo = std::max(0, i - op.radius);
            const int hi = std::min(n - 1, i + op.radius);
            for (int j = lo; j <= hi; ++j)
                row += op.kernel[std::abs(i - j)] * op.scale[j];
            // damped symmetric update; the undamped d = 1/(Kd) oscillates
            const double r = op.scale[i] * row;
            next[i] = op.scale[i] / std::sqrt(r);
            worst = std::max(worst, std::abs(r - 1.0));
        }
        op.scale.swap(next);
        if (worst < 1e-14) break;
    }
    return op;
}

void blur_rows(Grid& g, const BlurOperator& op) {
    std::vector<double> tmp(g.width);
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
            double acc = 0.0;
            const int lo = std::max(0, x - op.radius);
            const int hi = std::min(g.width - 1, x + op.radius);
            for (int j = lo; j <= hi; ++j) acc += op.weight(x, j) * g.at(y, j);
            tmp[x] = acc;
        }
        for (int x = 0; x < g.width; ++x) g.at(y, x) = tmp[x];
    }
}

void blur_cols(Grid& g, const BlurOperator& op) {
    std::vector<double> tmp(g.height);
    for (int x = 0; x < g.width; ++x) {
        for (int y = 0; y < g.height; ++y) {
            double acc = 0.0;
            const int lo = std::max(0, y - op.radius);
            const int hi = std::min(g.height - 1, y + op.radius);
            for (int j = lo; j <= hi; ++j) acc += op.weight(y, j) * g.at(j, x);
            tmp[y] = acc;
        }
        for (int y = 0; y < g.height; ++y) g.at(y, x) = tmp[y];
    }
}

}  // namespace

Grid gaussian_blur(const Grid& map, double sigma) {
    if (sigma < 0) throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return map;
    Grid out = map;
    blur_rows(out, make_blur_operator(map.width, sigma));
    blur_cols(out, make_blur_operator(map.height, sigma));
    return out;
}

SaliencyMap softmax_2d(const Grid& logits) {
    for (double v : logits.data)
        if (!std::isfinite(v))
            throw std::invalid_argument("softmax_2d: non-finite logit");
    const double m = *std::max_element(logits.data.begin(), logits.data.end());
    SaliencyMap out(logits.height, logits.width);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
        out.data[i] = std::exp(logits.data[i] - m);
        total += out.data[i];
    }
    for (double& v : out.data) v /= total;
    return out;
}

SaliencyMap normalize_to_distribution(const Grid& map) {
    double total = 0.0;
    for (double v : map.data) {
        if (!(v >= 0.0))
            throw std::invalid_argument("normalize_to_distribution: negative value");
        total += v;
    }
    if (total <= 0.0)
        throw std::invalid_argument("normalize_to_distribution: all-zero map");
    SaliencyMap out = map;
    for (double& v : out.data) v /= total;
    return out;
}

double grid_mean(const Grid& g) { return g.sum() / static_cast<double>(g.size()); }

double grid_stddev(const Grid& g) {
    const double mu = grid_mean(g);
    double acc = 0.0;
    for (double v : g.data) acc += (v - mu) * (v - mu);
    return std::sqrt(acc / static_cast<double>(g.size()));
}

double grid_covariance(const Grid& a, const Grid& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("grid_covariance: dimension mismatch");
    const double ma = grid_mean(a), mb = grid_mean(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        acc += (a.data[i] - ma) * (b.data[i] - mb);
    return acc / static_cast<double>(a.size());
}

}  // namespace saldis
