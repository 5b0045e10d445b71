// Deep neural collapse measurements, computed per layer on pre- and
// post-activation features:
//   dnc1: within-class variability relative to between-class variability,
//         ||Sigma_W Sigma_B^+||_F^2
//   dnc2: ratio of the two largest singular values of the feature matrix
//   dnc3: row-norm-weighted average sine between each weight row and the
//         closest feature column
//
// dnc1 and dnc2 can be degenerate (Sigma_B = 0 for dnc1; s2 ~ 0 for dnc2),
// which happens on collapsed-to-zero runs; a degenerate value is reported as
// an empty optional rather than NaN.

#ifndef DUFM_METRICS_HPP
#define DUFM_METRICS_HPP

#include <optional>
#include <vector>

#include "dufm/matrix.hpp"
#include "dufm/model.hpp"

namespace dufm {

struct LayerMetrics {
    int layer = 0;  // 1-based
    std::optional<double> dnc1_pre;
    std::optional<double> dnc1_post;
    std::optional<double> dnc2_pre;
    std::optional<double> dnc2_post;
    double dnc3 = 0.0;
};

// F is d x N with columns arranged class-by-class, N = 2n.
std::optional<double> dnc1(const Matrix& features, const DufmDims& dims);

std::optional<double> dnc2(const Matrix& features);

// Rows of `weights` against columns of `activations` (the post-activation
// feature matrix of the same layer). Rows with l2 norm below 1e-6 are
// excluded; if all rows are excluded, returns 0.
double dnc3(const Matrix& weights, const Matrix& activations);

std::vector<LayerMetrics> layer_metrics(const DufmParams& params, const ForwardTrace& trace,
                                        const DufmDims& dims);

}  // namespace dufm

#endif
