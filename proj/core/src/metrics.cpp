#include "saldis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "saldis/errors.hpp"
#include "saldis/readout.hpp"

namespace saldis {

namespace {

// ROC area over explicit positive/negative score sets: thresholds at every
// distinct score (plus +inf), >= counting, trapezoidal rule. Equals the
// pairwise rank statistic with half credit for ties.
double roc_area(std::vector<double> pos, std::vector<double> neg) {
    struct Scored { double value; bool positive; };
    std::vector<Scored> all;
    all.reserve(pos.size() + neg.size());
    for (double v : pos) all.push_back({v, true});
    for (double v : neg) all.push_back({v, false});
    std::sort(all.begin(), all.end(),
              [](const Scored& a, const Scored& b) { return a.value > b.value; });

    const double np = static_cast<double>(pos.size());
    const double nn = static_cast<double>(neg.size());
    double tp = 0, fp = 0, area = 0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        double dtp = 0, dfp = 0;
        while (j < all.size() && all[j].value == all[i].value) {
            (all[j].positive ? dtp : dfp) += 1;
            ++j;
        }
        const double tp2 = tp + dtp / np;
        const double fp2 = fp + dfp / nn;
        area += (fp2 - fp) * (tp + tp2) / 2.0;
        tp = tp2;
        fp = fp2;
        i = j;
    }
    return area;
}

std::vector<std::size_t> fixation_indices(const FixationMap& f) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < f.data.size(); ++i)
        if (f.data[i] != 0.0) idx.push_back(i);
    return idx;
}

}  // namespace

double auc_judd(const SaliencyMap& p, const FixationMap& f) {
    if (p.height != f.height || p.width != f.width)
        throw std::invalid_argument("auc_judd: dimension mismatch");
    const std::vector<std::size_t> fix = fixation_indices(f);
    if (fix.empty()) throw std::invalid_argument("auc_judd: empty fixation map");

    std::vector<double> pos, neg;
    pos.reserve(fix.size());
    neg.reserve(p.data.size() - fix.size());
    for (std::size_t i = 0; i < p.data.size(); ++i)
        (f.data[i] != 0.0 ? pos : neg).push_back(p.data[i]);
    if (neg.empty()) throw std::invalid_argument("auc_judd: no non-fixation pixels");
    return roc_area(std::move(pos), std::move(neg));
}

double shuffled_auc(const SaliencyMap& p, const FixationMap& f,
                    const std::vector<FixationMap>& other_fixations,
                    const ShuffledAucConfig& config) {
    if (p.height != f.height || p.width != f.width)
        throw std::invalid_argument("shuffled_auc: dimension mismatch");
    const std::vector<std::size_t> fix = fixation_indices(f);
    if (fix.empty()) throw std::invalid_argument("shuffled_auc: empty fixation map");
    if (config.n_splits < 1)
        throw std::invalid_argument("shuffled_auc: n_splits must be >= 1");

    // Pooled other-image fixation locations, minus pixels fixated in F.
    std::vector<std::size_t> pool;
    for (const FixationMap& other : other_fixations) {
        if (other.height != f.height || other.width != f.width)
            throw std::invalid_argument("shuffled_auc: pooled map dimension mismatch");
        for (std::size_t i = 0; i < other.data.size(); ++i)
            if (other.data[i] != 0.0 && f.data[i] == 0.0) pool.push_back(i);
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (pool.empty()) throw std::invalid_argument("shuffled_auc: empty negative pool");

    std::vector<double> pos;
    pos.reserve(fix.size());
    for (std::size_t i : fix) pos.push_back(p.data[i]);

    const std::size_t n_neg = std::min(pool.size(), fix.size());
    std::mt19937_64 rng(config.seed);
    double total = 0;
    for (int split = 0; split < config.n_splits; ++split) {
        std::vector<std::size_t> sample = pool;
        std::shuffle(sample.begin(), sample.end(), rng);
        std::vector<double> neg;
        neg.reserve(n_neg);
        for (std::size_t i = 0; i < n_neg; ++i) neg.push_back(p.data[sample[i]]);
        total += roc_area(pos, std::move(neg));
    }
    return total / config.n_splits;
}

double nss_metric(const SaliencyMap& p, const FixationMap& f) {
    if (p.height != f.height || p.width != f.width)
        throw std::invalid_argument("nss_metric: dimension mismatch");
    const std::vector<std::size_t> fix = fixation_indices(f);
    if (fix.empty()) throw std::invalid_argument("nss_metric: empty fixation map");
    const double sigma = grid_stddev(p);
    const auto [lo, hi] = std::minmax_element(p.data.begin(), p.data.end());
    if (sigma <= 0 || *hi - *lo <= 1e-12 * std::max(std::abs(*hi), std::abs(*lo)))
        throw NumericError("nss_metric: constant prediction");
    const double mu = grid_mean(p);
    double acc = 0;
    for (std::size_t i : fix) acc += (p.data[i] - mu) / sigma;
    return acc / static_cast<double>(fix.size());
}

double kld_metric(const SaliencyMap& p, const SaliencyMap& q, double eps) {
    return kld_loss(p, q, eps);
}

double cc_metric(const SaliencyMap& p, const SaliencyMap& q) {
    if (p.height != q.height || p.width != q.width)
        throw std::invalid_argument("cc_metric: dimension mismatch");
    const double sp = grid_stddev(p), sq = grid_stddev(q);
    if (sp <= 0 || sq <= 0) throw NumericError("cc_metric: constant map");
    return grid_covariance(p, q) / (sp * sq);
}

double sim_metric(const SaliencyMap& p, const SaliencyMap& q) {
    if (p.height != q.height || p.width != q.width)
        throw std::invalid_argument("sim_metric: dimension mismatch");
    auto check = [](const SaliencyMap& m, const char* who) {
        double total = 0;
        for (double v : m.data) {
            if (!(v >= 0.0))
                throw std::invalid_argument(std::string("sim_metric: negative value in ") + who);
            total += v;
        }
        if (std::abs(total - 1.0) > 1e-6)
            throw std::invalid_argument(std::string("sim_metric: ") + who +
                                        " is not a normalized distribution");
    };
    check(p, "P");
    check(q, "Q");
    double acc = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i)
        acc += std::min(p.data[i], q.data[i]);
    return acc;
}

MetricReport evaluate(const std::vector<SaliencyMap>& predictions,
                      const std::vector<SaliencyMap>& ground_truths,
                      const std::vector<FixationMap>& fixations,
                      const std::vector<std::string>& image_ids,
                      const EvalConfig& config) {
    const std::size_t n = predictions.size();
    if (ground_truths.size() != n || fixations.size() != n || image_ids.size() != n)
        throw std::invalid_argument("evaluate: input list length mismatch");
    if (n == 0) throw std::invalid_argument("evaluate: no images");

    MetricReport report;
    report.image_ids = image_ids;
    for (const std::string& name : kMetricNames) {
        report.per_image[name].assign(n, std::nullopt);
        report.skipped[name] = 0;
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto record = [&](const std::string& name, auto&& fn) {
            try {
                report.per_image[name][i] = fn();
            } catch (const std::exception&) {
                ++report.skipped[name];
            }
        };
        record("aucj", [&] { return auc_judd(predictions[i], fixations[i]); });
        if (config.with_sauc && n > 1) {
            record("sauc", [&] {
                std::vector<FixationMap> others;
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) others.push_back(fixations[j]);
                ShuffledAucConfig sc = config.sauc;
                sc.seed = config.sauc.seed + i;
                return shuffled_auc(predictions[i], fixations[i], others, sc);
            });
        } else {
            ++report.skipped["sauc"];
        }
        record("nss", [&] { return nss_metric(predictions[i], fixations[i]); });
        record("kld", [&] {
            return kld_metric(predictions[i], ground_truths[i], config.kld_eps);
        });
        record("cc", [&] { return cc_metric(predictions[i], ground_truths[i]); });
        record("sim", [&] { return sim_metric(predictions[i], ground_truths[i]); });
    }

    for (const std::string& name : kMetricNames) {
        double total = 0;
        int count = 0;
        for (const auto& v : report.per_image[name])
            if (v) { total += *v; ++count; }
        report.mean[name] = count > 0 ? total / count
                                      : std::numeric_limits<double>::quiet_NaN();
    }
    return report;
}

}  // namespace saldis
