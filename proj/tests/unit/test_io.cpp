#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "saldis/errors.hpp"
#include "saldis/io.hpp"
#include "saldis/readout.hpp"
#include "saldis/tensor.hpp"

using namespace saldis;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("saldis_io_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("feature tensor: round trip at single precision") {
    TempDir tmp;
    FeatureMap m(3, 5, 2);
    std::mt19937_64 rng(1);
    for (double& v : m.data) v = std::uniform_real_distribution<double>(-10, 10)(rng);
    const fs::path file = tmp.path / "m.ftn";
    save_feature_tensor(m, file);
    const FeatureMap back = load_feature_tensor(file);
    CHECK(back.height == 3);
    CHECK(back.width == 5);
    CHECK(back.channels == 2);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        CHECK(back.data[i] == static_cast<double>(static_cast<float>(m.data[i])));

    // float-representable values survive exactly
    FeatureMap exact(2, 2, 1);
    exact.data = {0.5, -3.25, 1024.0, 0.0};
    save_feature_tensor(exact, file);
    CHECK(load_feature_tensor(file).data == exact.data);
}

TEST_CASE("feature tensor: header layout is stable") {
    TempDir tmp;
    FeatureMap m(2, 3, 4, 0.0);
    const fs::path file = tmp.path / "m.ftn";
    save_feature_tensor(m, file);
    const std::string bytes = read_bytes(file);
    REQUIRE(bytes.size() == 4 + 12 + 2 * 3 * 4 * 4);
    CHECK(bytes.substr(0, 4) == "FTN1");
    // little-endian u32 height=2, width=3, channels=4
    CHECK(static_cast<unsigned char>(bytes[4]) == 2);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    CHECK(static_cast<unsigned char>(bytes[8]) == 3);
    CHECK(static_cast<unsigned char>(bytes[12]) == 4);
}

TEST_CASE("feature tensor: bad magic, truncation, non-finite payload") {
    TempDir tmp;
    const fs::path file = tmp.path / "bad.ftn";

    write_bytes(file, std::string("JUNK") + std::string(16, '\0'));
    CHECK_THROWS_AS(load_feature_tensor(file), DataError);

    FeatureMap m(2, 2, 1, 1.0);
    save_feature_tensor(m, file);
    const std::string good = read_bytes(file);
    write_bytes(file, good.substr(0, good.size() - 2));
    CHECK_THROWS_AS(load_feature_tensor(file), DataError);

    FeatureMap nan_map(1, 1, 1);
    nan_map.data[0] = std::numeric_limits<double>::quiet_NaN();
    save_feature_tensor(nan_map, tmp.path / "nan.ftn");
    CHECK_THROWS_AS(load_feature_tensor(tmp.path / "nan.ftn"), DataError);

    CHECK_THROWS_AS(load_feature_tensor(tmp.path / "missing.ftn"), DataError);
}

TEST_CASE("grid wrappers store a single channel") {
    TempDir tmp;
    Grid g(4, 6);
    g.at(1, 2) = 0.5;
    g.at(3, 5) = 0.25;
    const fs::path file = tmp.path / "g.ftn";
    save_grid(g, file);
    const Grid back = load_grid(file);
    CHECK(back == g);
    CHECK(load_feature_tensor(file).channels == 1);

    FeatureMap multi(2, 2, 3, 0.0);
    save_feature_tensor(multi, file);
    CHECK_THROWS_AS(load_grid(file), DataError);
}

TEST_CASE("detections: parsing, confidence gate, comments") {
    TempDir tmp;
    const fs::path file = tmp.path / "dets.txt";
    write_text(file,
               "# header comment\n"
               "10 10 50 50 0.9\n"
               "0 5 20 30 0.5\n"
               "\n"
               "1.5 2.5 8.0 9.5 0.8 3\n"
               "4 4 6 6 0.7\n");  // exactly at the threshold -> dropped
    const std::vector<Detection> dets = load_detections(file, 0.7);
    REQUIRE(dets.size() == 2);
    CHECK(dets[0].x_min == 10.0);
    CHECK(dets[0].y_max == 50.0);
    CHECK(dets[0].confidence == 0.9);
    CHECK_FALSE(dets[0].class_id.has_value());
    CHECK(dets[1].x_min == 1.5);
    CHECK(dets[1].confidence == 0.8);
    CHECK(dets[1].class_id == 3);

    // threshold 0 keeps everything except non-positive-area boxes
    CHECK(load_detections(file, 0.0).size() == 4);
}

TEST_CASE("detections: empty file and malformed lines") {
    TempDir tmp;
    const fs::path file = tmp.path / "dets.txt";
    write_text(file, "# nothing here\n\n");
    CHECK(load_detections(file).empty());

    write_text(file, "10 10 50 50 0.9\n3 4 banana 6 0.8\n");
    try {
        load_detections(file);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);  // line number
    }

    write_text(file, "50 10 10 50 0.9\n");  // inverted box
    CHECK_THROWS_AS(load_detections(file), DataError);

    write_text(file, "10 10 50 50\n");  // missing confidence
    CHECK_THROWS_AS(load_detections(file), DataError);

    CHECK_THROWS_AS(load_detections(tmp.path / "missing.txt"), DataError);
}

TEST_CASE("detections: save then load preserves surviving entries") {
    TempDir tmp;
    std::vector<Detection> dets = {
        {1.25, 2.5, 30.75, 40.0, 0.95, 2},
        {0.1, 0.2, 5.3, 7.9, 0.8, {}},
    };
    const fs::path file = tmp.path / "out.txt";
    save_detections(dets, file);
    const std::vector<Detection> back = load_detections(file, 0.7);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        CHECK(back[i].x_min == dets[i].x_min);
        CHECK(back[i].y_min == dets[i].y_min);
        CHECK(back[i].x_max == dets[i].x_max);
        CHECK(back[i].y_max == dets[i].y_max);
        CHECK(back[i].confidence == dets[i].confidence);
        CHECK(back[i].class_id == dets[i].class_id);
    }
}

TEST_CASE("checkpoint: bit-exact round trip") {
    TempDir tmp;
    ReadoutModel model = make_readout_model(7, 42);
    model.cb = CenterBias{3.25, 4.75, 2.0, 1.5, 0.6};
    model.smooth_sigma = 1.25;
    const fs::path file = tmp.path / "model.rdm";
    save_checkpoint(model, file);
    const ReadoutModel back = load_checkpoint(file);
    REQUIRE(back.layers.size() == model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        CHECK(back.layers[l].out_ch == model.layers[l].out_ch);
        CHECK(back.layers[l].in_ch == model.layers[l].in_ch);
        CHECK(back.layers[l].weights == model.layers[l].weights);
        CHECK(back.layers[l].bias == model.layers[l].bias);
    }
    REQUIRE(back.cb.has_value());
    CHECK(back.cb->mu_x == 3.25);
    CHECK(back.cb->mu_y == 4.75);
    CHECK(back.cb->sigma_x == 2.0);
    CHECK(back.cb->sigma_y == 1.5);
    CHECK(back.cb->weight == 0.6);
    CHECK(back.smooth_sigma == 1.25);

    // without a center bias
    ReadoutModel plain = make_readout_model(3, 1, {4, 1});
    save_checkpoint(plain, file);
    CHECK_FALSE(load_checkpoint(file).cb.has_value());
}

TEST_CASE("checkpoint: corrupted files rejected") {
    TempDir tmp;
    const fs::path file = tmp.path / "model.rdm";
    write_bytes(file, "RDM1");
    CHECK_THROWS_AS(load_checkpoint(file), DataError);
    write_bytes(file, "NOPE" + std::string(64, '\0'));
    CHECK_THROWS_AS(load_checkpoint(file), DataError);
}

TEST_CASE("report formatting") {
    MetricReport report;
    report.image_ids = {"img0", "img1"};
    for (const std::string& name : kMetricNames) {
        report.per_image[name] = {0.25, 0.75};
        report.mean[name] = 0.5;
        report.skipped[name] = 0;
    }
    report.per_image["nss"] = {1.5, std::nullopt};
    report.mean["nss"] = 1.5;
    report.skipped["nss"] = 1;
    const std::string text = format_report(report);
    CHECK(text.find("img0.nss=1.5") != std::string::npos);
    CHECK(text.find("img1.cc=0.75") != std::string::npos);
    CHECK(text.find("img1.nss=") == std::string::npos);  // skipped line omitted
    CHECK(text.find("mean.cc=0.5") != std::string::npos);
    CHECK(text.find("skipped.nss=1") != std::string::npos);

    TempDir tmp;
    const fs::path file = tmp.path / "report.txt";
    write_report(report, file);
    CHECK(read_bytes(file) == text);
}
