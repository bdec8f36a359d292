#include "saldis/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "saldis/errors.hpp"

namespace saldis {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError("truncated file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(std::istream& in, const std::string& path) {
    const std::uint32_t bits = get_u32(in, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u32(out, static_cast<std::uint32_t>(bits));
    put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

double get_f64(std::istream& in, const std::string& path) {
    const std::uint64_t lo = get_u32(in, path);
    const std::uint64_t hi = get_u32(in, path);
    const std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

// Write through a temp file and rename, so readers never see a partial file.
class AtomicWriter {
  public:
    explicit AtomicWriter(const std::filesystem::path& path)
        : final_(path), tmp_(path.string() + ".tmp"),
          out_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!out_) throw DataError("cannot open for writing: " + path.string());
    }
    std::ofstream& stream() { return out_; }
    void commit() {
        out_.close();
        if (!out_) throw DataError("write failed: " + final_.string());
        std::filesystem::rename(tmp_, final_);
    }

  private:
    std::filesystem::path final_, tmp_;
    std::ofstream out_;
};

void check_magic(std::istream& in, const char* magic, const std::string& path) {
    char buf[4];
    if (!in.read(buf, 4)) throw DataError("truncated file: " + path);
    if (std::memcmp(buf, magic, 4) != 0)
        throw DataError("bad magic in " + path + " (expected " + magic + ")");
}

}  // namespace

void save_feature_tensor(const FeatureMap& map, const std::filesystem::path& path) {
    AtomicWriter w(path);
    w.stream().write("FTN1", 4);
    put_u32(w.stream(), static_cast<std::uint32_t>(map.height));
    put_u32(w.stream(), static_cast<std::uint32_t>(map.width));
    put_u32(w.stream(), static_cast<std::uint32_t>(map.channels));
    for (double v : map.data) put_f32(w.stream(), static_cast<float>(v));
    w.commit();
}

FeatureMap load_feature_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    check_magic(in, "FTN1", path.string());
    const std::uint32_t h = get_u32(in, path.string());
    const std::uint32_t w = get_u32(in, path.string());
    const std::uint32_t c = get_u32(in, path.string());
    if (h < 1 || w < 1 || c < 1)
        throw DataError("bad tensor dimensions in " + path.string());
    FeatureMap map(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (double& v : map.data) {
        v = get_f32(in, path.string());
        if (!std::isfinite(v))
            throw DataError("non-finite payload value in " + path.string());
    }
    return map;
}

void save_grid(const Grid& g, const std::filesystem::path& path) {
    save_feature_tensor(FeatureMap::from_grid(g), path);
}

Grid load_grid(const std::filesystem::path& path) {
    const FeatureMap m = load_feature_tensor(path);
    if (m.channels != 1)
        throw DataError("expected single-channel tensor in " + path.string());
    return m.as_grid();
}

std::vector<Detection> load_detections(const std::filesystem::path& path,
                                       double confidence_threshold) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path.string());
    std::vector<Detection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        Detection d;
        if (!(fields >> d.x_min)) continue;  // blank or comment-only line
        int class_id;
        if (!(fields >> d.y_min >> d.x_max >> d.y_max >> d.confidence))
            throw DataError("malformed detection at " + path.string() + ":" +
                            std::to_string(line_no));
        if (fields >> class_id) d.class_id = class_id;
        std::string rest;
        if (fields >> rest)
            throw DataError("trailing fields at " + path.string() + ":" +
                            std::to_string(line_no));
        if (!(std::isfinite(d.x_min) && std::isfinite(d.y_min) &&
              std::isfinite(d.x_max) && std::isfinite(d.y_max) &&
              std::isfinite(d.confidence) && d.x_min < d.x_max && d.y_min < d.y_max))
            throw DataError("degenerate detection box at " + path.string() + ":" +
                            std::to_string(line_no));
        if (d.confidence > confidence_threshold) out.push_back(d);
    }
    return out;
}

void save_detections(const std::vector<Detection>& detections,
                     const std::filesystem::path& path) {
    AtomicWriter w(path);
    w.stream().precision(17);
    for (const Detection& d : detections) {
        w.stream() << d.x_min << ' ' << d.y_min << ' ' << d.x_max << ' '
                   << d.y_max << ' ' << d.confidence;
        if (d.class_id) w.stream() << ' ' << *d.class_id;
        w.stream() << '\n';
    }
    w.commit();
}

void save_checkpoint(const ReadoutModel& model, const std::filesystem::path& path) {
    model.validate();
    AtomicWriter w(path);
    w.stream().write("RDM1", 4);
    put_u32(w.stream(), static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& l : model.layers) {
        put_u32(w.stream(), static_cast<std::uint32_t>(l.out_ch));
        put_u32(w.stream(), static_cast<std::uint32_t>(l.in_ch));
        for (double v : l.weights) put_f64(w.stream(), v);
        for (double v : l.bias) put_f64(w.stream(), v);
    }
    w.stream().put(model.cb ? 1 : 0);
    const CenterBias cb = model.cb.value_or(CenterBias{});
    put_f64(w.stream(), cb.mu_x);
    put_f64(w.stream(), cb.mu_y);
    put_f64(w.stream(), cb.sigma_x);
    put_f64(w.stream(), cb.sigma_y);
    put_f64(w.stream(), cb.weight);
    put_f64(w.stream(), model.smooth_sigma);
    w.commit();
}

ReadoutModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open: " + path.string());
    check_magic(in, "RDM1", path.string());
    const std::uint32_t n_layers = get_u32(in, path.string());
    if (n_layers < 1 || n_layers > 1024)
        throw DataError("implausible layer count in " + path.string());
    ReadoutModel model;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const std::uint32_t out = get_u32(in, path.string());
        const std::uint32_t cin = get_u32(in, path.string());
        if (out < 1 || cin < 1)
            throw DataError("bad layer dimensions in " + path.string());
        Layer layer(static_cast<int>(out), static_cast<int>(cin));
        for (double& v : layer.weights) v = get_f64(in, path.string());
        for (double& v : layer.bias) v = get_f64(in, path.string());
        model.layers.push_back(std::move(layer));
    }
    char has_cb = 0;
    if (!in.get(has_cb)) throw DataError("truncated file: " + path.string());
    CenterBias cb;
    cb.mu_x = get_f64(in, path.string());
    cb.mu_y = get_f64(in, path.string());
    cb.sigma_x = get_f64(in, path.string());
    cb.sigma_y = get_f64(in, path.string());
    cb.weight = get_f64(in, path.string());
    if (has_cb) model.cb = cb;
    model.smooth_sigma = get_f64(in, path.string());
    model.validate();
    return model;
}

std::string format_report(const MetricReport& report) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < report.image_ids.size(); ++i)
        for (const std::string& name : kMetricNames) {
            const auto& v = report.per_image.at(name)[i];
            if (v) out << report.image_ids[i] << '.' << name << '=' << *v << '\n';
        }
    for (const std::string& name : kMetricNames)
        out << "mean." << name << '=' << report.mean.at(name) << '\n';
    for (const std::string& name : kMetricNames)
        out << "skipped." << name << '=' << report.skipped.at(name) << '\n';
    return out.str();
}

void write_report(const MetricReport& report, const std::filesystem::path& path) {
    AtomicWriter w(path);
    w.stream() << format_report(report);
    w.commit();
}

}  // namespace saldis
