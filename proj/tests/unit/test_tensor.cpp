#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "saldis/tensor.hpp"

using namespace saldis;

TEST_CASE("bilinear_resize: constant extension from 1x1") {
    FeatureMap src(1, 1, 1, 3.5);
    const FeatureMap dst = bilinear_resize(src, 4, 4);
    for (double v : dst.data) CHECK(v == 3.5);
}

TEST_CASE("bilinear_resize: identity for matching dimensions") {
    FeatureMap src(3, 5, 2);
    std::mt19937_64 rng(1);
    for (double& v : src.data) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    CHECK(bilinear_resize(src, 3, 5) == src);
}

TEST_CASE("bilinear_resize: corner-aligned midpoint") {
    FeatureMap src(2, 2, 1);
    src.at(0, 0, 0) = 0; src.at(0, 1, 0) = 1;
    src.at(1, 0, 0) = 0; src.at(1, 1, 0) = 1;
    const FeatureMap dst = bilinear_resize(src, 2, 3);
    CHECK(dst.at(0, 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(dst.at(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bilinear_resize: exact on linear ramps") {
    FeatureMap src(4, 5, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) src.at(y, x, 0) = 2.0 * x + 3.0 * y + 1.0;
    const FeatureMap dst = bilinear_resize(src, 7, 9);
    for (int y = 0; y < 7; ++y)
        for (int x = 0; x < 9; ++x) {
            const double sx = x * 4.0 / 8.0;  // source coordinate
            const double sy = y * 3.0 / 6.0;
            CHECK(dst.at(y, x, 0) == doctest::Approx(2.0 * sx + 3.0 * sy + 1.0).epsilon(1e-9));
        }
}

TEST_CASE("bilinear_resize: rejects empty output") {
    FeatureMap src(2, 2, 1);
    CHECK_THROWS_AS(bilinear_resize(src, 0, 4), std::invalid_argument);
}

TEST_CASE("slice_features: full-extent box returns the whole map") {
    FeatureMap global(5, 7, 3);
    std::mt19937_64 rng(2);
    for (double& v : global.data) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    Detection box{0, 0, 300, 300, 1.0, {}};
    CHECK(slice_features(global, box, 300, 300) == global);
}

TEST_CASE("slice_features: exact half-scale arithmetic") {
    FeatureMap global(10, 10, 2, 1.0);
    Detection box{0, 0, 150, 150, 1.0, {}};
    const FeatureMap slice = slice_features(global, box, 300, 300);
    CHECK(slice.height == 5);
    CHECK(slice.width == 5);
}

TEST_CASE("slice_features: floor/ceil bounds on a coarse map") {
    FeatureMap global(19, 19, 1, 0.0);
    Detection box{10, 10, 20, 25, 1.0, {}};
    const FeatureMap slice = slice_features(global, box, 300, 300);
    // x: floor(10*19/300)=0, ceil(20*19/300)=2; y: floor -> 0, ceil(25*19/300)=2
    CHECK(slice.width == 2);
    CHECK(slice.height == 2);
}

TEST_CASE("slice_features: minimum 1x1 extent for tiny boxes") {
    FeatureMap global(4, 4, 1);
    Detection box{100, 100, 101, 101, 1.0, {}};
    const FeatureMap slice = slice_features(global, box, 300, 300);
    CHECK(slice.height >= 1);
    CHECK(slice.width >= 1);
}

TEST_CASE("slice_features: box outside the image rejected") {
    FeatureMap global(4, 4, 1);
    Detection box{350, 10, 360, 20, 1.0, {}};
    CHECK_THROWS(slice_features(global, box, 300, 300));
}

TEST_CASE("gaussian_blur: sigma 0 is the identity") {
    Grid g(3, 4);
    g.at(1, 2) = 5.0;
    CHECK(gaussian_blur(g, 0.0) == g);
}

TEST_CASE("gaussian_blur: constant map unchanged") {
    Grid g(6, 9, 2.5);
    const Grid out = gaussian_blur(g, 1.7);
    for (double v : out.data) CHECK(v == doctest::Approx(2.5).epsilon(1e-10));
}

TEST_CASE("gaussian_blur: delta conserves mass, peak stays put") {
    Grid g(9, 9);
    g.at(4, 4) = 1.0;
    const Grid out = gaussian_blur(g, 1.0);
    CHECK(out.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : out.data) CHECK(v <= out.at(4, 4) + 1e-15);
}

TEST_CASE("gaussian_blur: mass conserved near boundaries") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Grid g(5 + static_cast<int>(rng() % 8), 5 + static_cast<int>(rng() % 8));
        for (double& v : g.data) v = std::uniform_real_distribution<double>(0, 1)(rng);
        const double sigma = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
        CHECK(gaussian_blur(g, sigma).sum() == doctest::Approx(g.sum()).epsilon(1e-9));
    }
    Grid corner(7, 7);
    corner.at(0, 0) = 1.0;  // delta on the corner
    CHECK(gaussian_blur(corner, 2.0).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gaussian_blur: negative sigma rejected") {
    CHECK_THROWS_AS(gaussian_blur(Grid(2, 2), -1.0), std::invalid_argument);
}

TEST_CASE("softmax_2d: constant logits give a uniform map") {
    const SaliencyMap p = softmax_2d(Grid(4, 4, 7.0));
    for (double v : p.data) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-12));
}

TEST_CASE("softmax_2d: shift invariance and closed form") {
    Grid logits(2, 2);
    logits.at(0, 1) = std::log(2.0);
    const SaliencyMap p = softmax_2d(logits);
    CHECK(p.at(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(p.at(1, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(p.at(1, 1) == doctest::Approx(0.2).epsilon(1e-12));

    Grid shifted = logits;
    for (double& v : shifted.data) v += 100.0;
    const SaliencyMap q = softmax_2d(shifted);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        CHECK(q.data[i] == doctest::Approx(p.data[i]).epsilon(1e-12));
}

TEST_CASE("softmax_2d: output is a distribution, argmax preserved") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Grid logits(3, 5);
        for (double& v : logits.data)
            v = std::uniform_real_distribution<double>(-10, 10)(rng);
        const SaliencyMap p = softmax_2d(logits);
        CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
        const auto arg_in = std::max_element(logits.data.begin(), logits.data.end());
        const auto arg_out = std::max_element(p.data.begin(), p.data.end());
        CHECK(arg_in - logits.data.begin() == arg_out - p.data.begin());
    }
}

TEST_CASE("normalize_to_distribution") {
    Grid g(2, 2, 2.0);
    const SaliencyMap p = normalize_to_distribution(g);
    for (double v : p.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    Grid h(2, 2);
    h.at(0, 0) = 3;
    h.at(0, 1) = 1;
    const SaliencyMap q = normalize_to_distribution(h);
    CHECK(q.at(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(q.at(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(q.at(1, 0) == 0.0);

    // already normalized -> unchanged
    const SaliencyMap r = normalize_to_distribution(q);
    for (std::size_t i = 0; i < q.data.size(); ++i)
        CHECK(r.data[i] == doctest::Approx(q.data[i]).epsilon(1e-12));

    CHECK_THROWS_AS(normalize_to_distribution(Grid(2, 2)), std::invalid_argument);
}
