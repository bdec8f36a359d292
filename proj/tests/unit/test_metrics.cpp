#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "saldis/errors.hpp"
#include "saldis/metrics.hpp"
#include "saldis/tensor.hpp"

using namespace saldis;

namespace {

// O(positives x negatives) rank-comparison oracle:
// P(fix pixel > negative pixel) + 0.5 * P(tie).
double auc_oracle(const std::vector<double>& pos, const std::vector<double>& neg) {
    double score = 0;
    for (double p : pos)
        for (double n : neg) {
            if (p > n) score += 1.0;
            else if (p == n) score += 0.5;
        }
    return score / (static_cast<double>(pos.size()) * neg.size());
}

double auc_judd_oracle(const SaliencyMap& p, const FixationMap& f) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < p.data.size(); ++i)
        (f.data[i] != 0.0 ? pos : neg).push_back(p.data[i]);
    return auc_oracle(pos, neg);
}

SaliencyMap random_distribution(int h, int w, std::mt19937_64& rng) {
    Grid g(h, w);
    for (double& v : g.data) v = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    return normalize_to_distribution(g);
}

}  // namespace

TEST_CASE("auc_judd: perfect ranking gives 1, constant gives 0.5") {
    Grid f(4, 4);
    f.at(0, 0) = 1.0;
    f.at(2, 3) = 1.0;
    SaliencyMap p(4, 4, 0.01);
    p.at(0, 0) = 0.5;
    p.at(2, 3) = 0.4;
    CHECK(auc_judd(p, f) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(auc_judd(SaliencyMap(4, 4, 1.0 / 16), f) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(auc_judd(p, Grid(4, 4)), std::invalid_argument);
}

TEST_CASE("auc_judd: matches the pairwise oracle on random instances") {
    std::mt19937_64 rng(1);
    double mean = 0;
    const int n_trials = 200;
    for (int trial = 0; trial < n_trials; ++trial) {
        const int h = 4 + static_cast<int>(rng() % 13);
        const int w = 4 + static_cast<int>(rng() % 13);
        SaliencyMap p = random_distribution(h, w, rng);
        // quantize some values to force ties
        if (trial % 3 == 0)
            for (double& v : p.data) v = std::round(v * 50) / 50.0;
        Grid f(h, w);
        const int n_fix = 1 + static_cast<int>(rng() % 10);
        for (int i = 0; i < n_fix; ++i) f.data[rng() % f.data.size()] = 1.0;
        const double got = auc_judd(p, f);
        CHECK(got == doctest::Approx(auc_judd_oracle(p, f)).epsilon(1e-9));
        mean += got;
    }
    CHECK(std::abs(mean / n_trials - 0.5) < 0.03);
}

TEST_CASE("auc_judd: invariant to strictly increasing transforms") {
    std::mt19937_64 rng(2);
    const SaliencyMap p = random_distribution(8, 8, rng);
    Grid f(8, 8);
    for (int i = 0; i < 6; ++i) f.data[rng() % f.data.size()] = 1.0;
    const double base = auc_judd(p, f);
    SaliencyMap warped = p;
    for (double& v : warped.data) v = std::exp(3.0 * v);
    CHECK(auc_judd(warped, f) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("shuffled_auc: perfect ranking, ties, and oracle equivalence") {
    std::mt19937_64 rng(3);
    SaliencyMap p(6, 6, 0.001);
    Grid f(6, 6);
    f.at(1, 1) = 1.0;
    f.at(4, 4) = 1.0;
    p.at(1, 1) = 0.3;
    p.at(4, 4) = 0.4;
    Grid other(6, 6);
    other.at(0, 0) = 1.0;
    other.at(5, 2) = 1.0;
    CHECK(shuffled_auc(p, f, {other}) == doctest::Approx(1.0).epsilon(1e-12));

    CHECK(shuffled_auc(SaliencyMap(6, 6, 1.0 / 36), f, {other}) ==
          doctest::Approx(0.5).epsilon(1e-12));

    // when the pool is used in full, each split equals the oracle
    std::vector<double> pos = {p.at(1, 1), p.at(4, 4)};
    std::vector<double> neg = {p.at(0, 0), p.at(5, 2)};
    CHECK(shuffled_auc(p, f, {other}) ==
          doctest::Approx(auc_oracle(pos, neg)).epsilon(1e-9));
}

TEST_CASE("shuffled_auc: deterministic per seed, pool excludes F's pixels") {
    std::mt19937_64 rng(4);
    const SaliencyMap p = random_distribution(10, 10, rng);
    Grid f(10, 10);
    for (int i = 0; i < 5; ++i) f.data[rng() % f.data.size()] = 1.0;
    std::vector<FixationMap> others;
    for (int j = 0; j < 3; ++j) {
        Grid o(10, 10);
        for (int i = 0; i < 8; ++i) o.data[rng() % o.data.size()] = 1.0;
        others.push_back(std::move(o));
    }
    ShuffledAucConfig config;
    config.seed = 9;
    const double a = shuffled_auc(p, f, others, config);
    const double b = shuffled_auc(p, f, others, config);
    CHECK(a == b);

    // pool entirely inside F -> empty after exclusion
    CHECK_THROWS_AS(shuffled_auc(p, f, {f}), std::invalid_argument);
}

TEST_CASE("shuffled_auc penalizes a center-biased predictor more than auc_judd") {
    // Fixations cluster at the center in every image; P is the shared
    // center prior. Negatives drawn from other images' fixations are
    // center-clustered too, so sAUC drops toward chance.
    std::mt19937_64 rng(5);
    const int n = 21;
    Grid prior(n, n);
    const double c = (n - 1) / 2.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            prior.at(y, x) = std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / 18.0);
    const SaliencyMap p = normalize_to_distribution(prior);

    std::normal_distribution<double> gauss(0.0, 3.0);
    auto sample_map = [&]() {
        Grid m(n, n);
        for (int i = 0; i < 10; ++i) {
            const int x = std::clamp(static_cast<int>(std::lround(c + gauss(rng))), 0, n - 1);
            const int y = std::clamp(static_cast<int>(std::lround(c + gauss(rng))), 0, n - 1);
            m.at(y, x) = 1.0;
        }
        return m;
    };
    const FixationMap f = sample_map();
    std::vector<FixationMap> others;
    for (int i = 0; i < 10; ++i) others.push_back(sample_map());

    const double aucj = auc_judd(p, f);
    const double sauc = shuffled_auc(p, f, others, ShuffledAucConfig{20, 11});
    CHECK(aucj > 0.8);
    CHECK(sauc < aucj);
}

TEST_CASE("nss_metric: one-sigma construction and regression value") {
    // P at all fixations exactly mu + sigma -> NSS = 1; half zeros and
    // half twos makes mu = sigma = 1 with the 2-pixels at mu + sigma
    Grid p_raw(4, 4);
    for (std::size_t i = 0; i < p_raw.data.size(); ++i)
        p_raw.data[i] = i % 2 ? 2.0 : 0.0;
    REQUIRE(grid_mean(p_raw) == 1.0);
    REQUIRE(grid_stddev(p_raw) == 1.0);
    Grid f(4, 4);
    f.data[1] = 1.0;
    f.data[9] = 1.0;
    CHECK(nss_metric(p_raw, f) == doctest::Approx(1.0).epsilon(1e-9));

    // standardized values averaging 0
    Grid p2(2, 2);
    p2.data = {1.0, -1.0, 0.5, -0.5};
    Grid f2(2, 2);
    f2.data = {1.0, 1.0, 0.0, 0.0};
    CHECK(nss_metric(p2, f2) == doctest::Approx(0.0).epsilon(1e-12));

    // 2x2 hand-standardized regression
    Grid p3(2, 2, 0.1);
    p3.at(0, 0) = 0.7;
    Grid f3(2, 2);
    f3.at(0, 0) = 1.0;
    CHECK(nss_metric(p3, f3) == doctest::Approx(0.45 / (std::sqrt(3.0) * 0.15)).epsilon(1e-9));

    CHECK_THROWS_AS(nss_metric(Grid(2, 2, 0.25), f3), NumericError);
}

TEST_CASE("nss_metric: invariant to positive affine rescaling") {
    std::mt19937_64 rng(6);
    const SaliencyMap p = random_distribution(8, 8, rng);
    Grid f(8, 8);
    for (int i = 0; i < 5; ++i) f.data[rng() % f.data.size()] = 1.0;
    const double base = nss_metric(p, f);
    Grid scaled = p;
    for (double& v : scaled.data) v = 3.7 * v + 0.2;
    CHECK(nss_metric(scaled, f) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("kld_metric: shares the loss formula") {
    const SaliencyMap uniform = normalize_to_distribution(Grid(2, 2, 1.0));
    CHECK(std::abs(kld_metric(uniform, uniform)) < 1e-6);
    Grid delta(2, 2);
    delta.at(1, 1) = 1.0;
    CHECK(kld_metric(uniform, delta) == doctest::Approx(std::log(4.0)).epsilon(1e-5));
}

TEST_CASE("kld_metric: asymmetric witness") {
    Grid a(1, 2), b(1, 2);
    a.data = {0.9, 0.1};
    b.data = {0.5, 0.5};
    CHECK(kld_metric(a, b) != doctest::Approx(kld_metric(b, a)).epsilon(1e-6));
}

TEST_CASE("cc_metric: endpoints, symmetry, independence") {
    std::mt19937_64 rng(7);
    const SaliencyMap p = random_distribution(8, 8, rng);
    CHECK(cc_metric(p, p) == doctest::Approx(1.0).epsilon(1e-12));

    const double lo = *std::min_element(p.data.begin(), p.data.end());
    const double hi = *std::max_element(p.data.begin(), p.data.end());
    Grid flipped(8, 8);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        flipped.data[i] = (hi + lo) - p.data[i];
    CHECK(cc_metric(flipped, p) == doctest::Approx(-1.0).epsilon(1e-9));

    double mean = 0;
    for (int s = 0; s < 100; ++s) {
        const SaliencyMap a = random_distribution(32, 32, rng);
        const SaliencyMap b = random_distribution(32, 32, rng);
        CHECK(cc_metric(a, b) == doctest::Approx(cc_metric(b, a)).epsilon(1e-12));
        mean += cc_metric(a, b);
    }
    CHECK(std::abs(mean / 100) < 0.05);

    CHECK_THROWS_AS(cc_metric(SaliencyMap(8, 8, 1.0 / 64), p), NumericError);
}

TEST_CASE("sim_metric: endpoints and arithmetic") {
    std::mt19937_64 rng(8);
    const SaliencyMap p = random_distribution(6, 6, rng);
    CHECK(sim_metric(p, p) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sim_metric(p, p) == doctest::Approx(sim_metric(p, p)).epsilon(1e-12));

    Grid a(2, 2), b(2, 2);
    a.data = {0.5, 0.5, 0.0, 0.0};
    b.data = {0.25, 0.25, 0.25, 0.25};
    CHECK(sim_metric(a, b) == 0.5);
    CHECK(sim_metric(b, a) == 0.5);  // symmetry

    Grid c(2, 2), d(2, 2);
    c.data = {0.5, 0.5, 0.0, 0.0};
    d.data = {0.0, 0.0, 0.5, 0.5};
    CHECK(sim_metric(c, d) == 0.0);  // disjoint supports

    Grid unnormalized(2, 2, 1.0);
    CHECK_THROWS_AS(sim_metric(unnormalized, b), std::invalid_argument);
}

TEST_CASE("distribution metrics are sensitive to blurring, rank metrics are not") {
    std::mt19937_64 rng(9);
    Grid spiky(16, 16);
    spiky.at(3, 4) = 1.0;
    spiky.at(10, 12) = 1.0;
    const SaliencyMap q = normalize_to_distribution(gaussian_blur(spiky, 1.0));
    const SaliencyMap p1 = normalize_to_distribution(gaussian_blur(spiky, 1.5));
    const SaliencyMap p2 = normalize_to_distribution(gaussian_blur(spiky, 3.0));
    CHECK(std::abs(sim_metric(p1, q) - sim_metric(p2, q)) > 1e-3);
    CHECK(std::abs(kld_metric(p1, q) - kld_metric(p2, q)) > 1e-3);
}

TEST_CASE("evaluate: aggregation and skip accounting") {
    std::mt19937_64 rng(10);
    Grid fix(8, 8);
    fix.at(2, 2) = 1.0;
    fix.at(5, 6) = 1.0;
    const SaliencyMap q = normalize_to_distribution(gaussian_blur(fix, 1.0));

    SUBCASE("P = Q = blurred F") {
        const MetricReport report = evaluate({q}, {q}, {fix}, {"img0"});
        CHECK(*report.per_image.at("sim")[0] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(*report.per_image.at("cc")[0] == doctest::Approx(1.0).epsilon(1e-9));
        // the eps-regularized divergence of a map against itself carries
        // a small negative bias of order (n-1)*eps
        CHECK(*report.per_image.at("kld")[0] < 1e-6);
        CHECK(std::abs(*report.per_image.at("kld")[0]) < 2e-5);
        CHECK(report.skipped.at("sauc") == 1);  // no other images to pool
    }

    SUBCASE("two identical images: aggregate equals per-image") {
        const MetricReport report = evaluate({q, q}, {q, q}, {fix, fix},
                                             {"a", "b"});
        CHECK(report.mean.at("cc") == doctest::Approx(*report.per_image.at("cc")[0]));
        CHECK(report.mean.at("nss") == doctest::Approx(*report.per_image.at("nss")[0]));
    }

    SUBCASE("constant prediction skips nss but not the rest") {
        const SaliencyMap constant(8, 8, 1.0 / 64);
        const SaliencyMap p = normalize_to_distribution(gaussian_blur(fix, 2.0));
        const MetricReport report =
            evaluate({p, constant, p}, {q, q, q}, {fix, fix, fix}, {"a", "b", "c"});
        CHECK(report.skipped.at("nss") == 1);
        CHECK(report.skipped.at("cc") == 1);
        CHECK(report.skipped.at("kld") == 0);
        CHECK(report.per_image.at("nss")[1] == std::nullopt);
        double manual = (*report.per_image.at("nss")[0] + *report.per_image.at("nss")[2]) / 2;
        CHECK(report.mean.at("nss") == doctest::Approx(manual));
    }

    CHECK_THROWS_AS(evaluate({q}, {}, {fix}, {"x"}), std::invalid_argument);
}
