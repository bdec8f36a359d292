#include "saldis/svcca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "saldis/errors.hpp"

namespace saldis {

FeatureMatrix::FeatureMatrix(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
    if (r < 1 || c < 1)
        throw std::invalid_argument("FeatureMatrix dimensions must be >= 1");
}

FeatureMatrix FeatureMatrix::from_feature_map(const FeatureMap& m) {
    FeatureMatrix out(m.height * m.width, m.channels);
    out.data = m.data;  // same layout: position-major, channel-minor
    return out;
}

namespace {

FeatureMatrix multiply(const FeatureMatrix& a, const FeatureMatrix& b) {
    FeatureMatrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiMaxSweeps = 100;

}  // namespace

SvdResult svd(const FeatureMatrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw std::invalid_argument("svd: non-finite entry");

    const int n = m.rows, c = m.cols;
    FeatureMatrix a = m;
    FeatureMatrix v(c, c);
    for (int i = 0; i < c; ++i) v.at(i, i) = 1.0;

    // One-sided Jacobi: orthogonalize column pairs of A, accumulate in V.
    double frob2 = 0;
    for (double x : m.data) frob2 += x * x;
    // columns this small are numerically zero (rank deficiency); rotating
    // them never reaches the relative tolerance
    const double negligible = 1e-30 * frob2;
    bool converged = false;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        converged = true;
        for (int p = 0; p < c - 1; ++p) {
            for (int q = p + 1; q < c; ++q) {
                double app = 0, aqq = 0, apq = 0;
                for (int i = 0; i < n; ++i) {
                    app += a.at(i, p) * a.at(i, p);
                    aqq += a.at(i, q) * a.at(i, q);
                    apq += a.at(i, p) * a.at(i, q);
                }
                if (app <= negligible || aqq <= negligible) continue;
                if (std::abs(apq) <= kJacobiTol * std::sqrt(app * aqq)) continue;
                converged = false;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (int i = 0; i < n; ++i) {
                    const double ap = a.at(i, p), aq = a.at(i, q);
                    a.at(i, p) = cs * ap - sn * aq;
                    a.at(i, q) = sn * ap + cs * aq;
                }
                for (int i = 0; i < c; ++i) {
                    const double vp = v.at(i, p), vq = v.at(i, q);
                    v.at(i, p) = cs * vp - sn * vq;
                    v.at(i, q) = sn * vp + cs * vq;
                }
            }
        }
    }
    if (!converged)
        throw NumericError("svd: Jacobi iteration did not converge");

    std::vector<double> s(c);
    for (int j = 0; j < c; ++j) {
        double norm = 0;
        for (int i = 0; i < n; ++i) norm += a.at(i, j) * a.at(i, j);
        s[j] = std::sqrt(norm);
    }
    std::vector<int> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return s[i] > s[j]; });

    SvdResult r;
    r.u = FeatureMatrix(n, c);
    r.v = FeatureMatrix(c, c);
    r.singular_values.resize(c);
    for (int j = 0; j < c; ++j) {
        const int src = order[j];
        r.singular_values[j] = s[src];
        if (s[src] > 0)
            for (int i = 0; i < n; ++i) r.u.at(i, j) = a.at(i, src) / s[src];
        for (int i = 0; i < c; ++i) r.v.at(i, j) = v.at(i, src);
    }
    return r;
}

FeatureMatrix project_topk(const FeatureMatrix& m, double energy_fraction) {
    if (!(energy_fraction > 0.0 && energy_fraction <= 1.0))
        throw std::invalid_argument("project_topk: energy_fraction must be in (0,1]");
    const SvdResult d = svd(m);
    double total = 0;
    for (double s : d.singular_values) total += s * s;
    if (total <= 0.0) throw std::invalid_argument("project_topk: zero matrix");

    int k = 0;
    double acc = 0;
    while (k < m.cols && acc < energy_fraction * total - 1e-15 * total) {
        acc += d.singular_values[k] * d.singular_values[k];
        ++k;
    }
    k = std::max(k, 1);

    FeatureMatrix vk(m.cols, k);
    for (int i = 0; i < m.cols; ++i)
        for (int j = 0; j < k; ++j) vk.at(i, j) = d.v.at(i, j);
    return multiply(m, vk);
}

namespace {

FeatureMatrix centered(const FeatureMatrix& m) {
    FeatureMatrix out = m;
    for (int j = 0; j < m.cols; ++j) {
        double mu = 0;
        for (int i = 0; i < m.rows; ++i) mu += m.at(i, j);
        mu /= m.rows;
        for (int i = 0; i < m.rows; ++i) out.at(i, j) -= mu;
    }
    return out;
}

FeatureMatrix cross_cov(const FeatureMatrix& a, const FeatureMatrix& b, double ridge) {
    FeatureMatrix s(a.cols, b.cols);
    for (int i = 0; i < a.cols; ++i)
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0;
            for (int r = 0; r < a.rows; ++r) acc += a.at(r, i) * b.at(r, j);
            s.at(i, j) = acc / (a.rows - 1);
        }
    if (ridge > 0 && a.cols == b.cols)
        for (int i = 0; i < a.cols; ++i) s.at(i, i) += ridge;
    return s;
}

// Inverse square root of a symmetric positive definite matrix via SVD.
FeatureMatrix inv_sqrt_spd(const FeatureMatrix& m) {
    const SvdResult d = svd(m);
    FeatureMatrix out(m.cols, m.cols);
    for (int i = 0; i < m.cols; ++i)
        for (int j = 0; j < m.cols; ++j) {
            double acc = 0;
            for (int k = 0; k < m.cols; ++k) {
                const double s = std::max(d.singular_values[k], 1e-30);
                acc += d.v.at(i, k) * d.v.at(j, k) / std::sqrt(s);
            }
            out.at(i, j) = acc;
        }
    return out;
}

constexpr double kCcaRidge = 1e-10;

}  // namespace

std::vector<double> cca_correlations(const FeatureMatrix& x, const FeatureMatrix& y) {
    if (x.rows != y.rows)
        throw std::invalid_argument("cca_correlations: row-count mismatch");
    if (x.rows < 2)
        throw std::invalid_argument("cca_correlations: fewer than 2 rows");

    const FeatureMatrix xc = centered(x), yc = centered(y);
    const FeatureMatrix sxx = cross_cov(xc, xc, kCcaRidge);
    const FeatureMatrix syy = cross_cov(yc, yc, kCcaRidge);
    const FeatureMatrix sxy = cross_cov(xc, yc, 0.0);

    const FeatureMatrix t = multiply(multiply(inv_sqrt_spd(sxx), sxy), inv_sqrt_spd(syy));
    const SvdResult d = svd(t);

    const int k = std::min(x.cols, y.cols);
    std::vector<double> corr(d.singular_values.begin(), d.singular_values.begin() + k);
    for (double& c : corr) c = std::clamp(c, 0.0, 1.0);
    return corr;
}

double svcca_score(const FeatureMatrix& x, const FeatureMatrix& y,
                   double energy_fraction) {
    const FeatureMatrix px = project_topk(x, energy_fraction);
    const FeatureMatrix py = project_topk(y, energy_fraction);
    const std::vector<double> corr = cca_correlations(px, py);
    double acc = 0;
    for (double c : corr) acc += c;
    return acc / corr.size();
}

}  // namespace saldis
