#pragma once

#include <vector>

#include "saldis/tensor.hpp"

namespace saldis {

/// Dense matrix of object features: rows are spatial positions (h*w),
/// columns are channels.
struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    FeatureMatrix() = default;
    FeatureMatrix(int r, int c, double fill = 0.0);

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    static FeatureMatrix from_feature_map(const FeatureMap& m);
};

struct SvdResult {
    FeatureMatrix u;                      // rows x cols, orthonormal columns
    std::vector<double> singular_values;  // descending, nonnegative
    FeatureMatrix v;                      // cols x cols, orthogonal
};

/// One-sided Jacobi SVD; M = U * diag(s) * V^T. Intended for small
/// matrices (at most a few hundred rows). Throws on non-convergence.
SvdResult svd(const FeatureMatrix& m);

/// Projects M onto its top singular directions: columns = M * V_k, where
/// k is the smallest count whose cumulative squared singular values reach
/// energy_fraction of the total.
FeatureMatrix project_topk(const FeatureMatrix& m, double energy_fraction = 0.99);

/// Canonical correlations between X and Y (columns centered internally,
/// covariances ridge-regularized), descending, clamped to [0,1].
std::vector<double> cca_correlations(const FeatureMatrix& x, const FeatureMatrix& y);

/// Mean canonical correlation between the SVD-projected feature pair;
/// drop-in replacement for the cosine-based object similarity.
double svcca_score(const FeatureMatrix& x, const FeatureMatrix& y,
                   double energy_fraction = 0.99);

}  // namespace saldis
