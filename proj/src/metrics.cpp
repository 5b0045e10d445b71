#include "dufm/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dufm {

std::optional<double> dnc1(const Matrix& features, const DufmDims& dims) {
    const int n = dims.samples_per_class;
    const int total = dims.total_samples();
    if (features.cols != total) throw std::invalid_argument("dnc1: column count is not 2n");
    const int d = features.rows;

    Matrix mu(d, DufmDims::num_classes);
    std::vector<double> mu_g(d, 0.0);
    for (int c = 0; c < DufmDims::num_classes; ++c)
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < d; ++r) mu(r, c) += features(r, c * n + i) / n;
    for (int r = 0; r < d; ++r)
        mu_g[r] = (mu(r, 0) + mu(r, 1)) / 2.0;

    Matrix sigma_w(d, d), sigma_b(d, d);
    for (int c = 0; c < DufmDims::num_classes; ++c) {
        for (int i = 0; i < n; ++i) {
            for (int r = 0; r < d; ++r) {
                const double dr = features(r, c * n + i) - mu(r, c);
                if (dr == 0.0) continue;
                for (int s = 0; s < d; ++s)
                    sigma_w(r, s) += dr * (features(s, c * n + i) - mu(s, c)) / total;
            }
        }
        for (int r = 0; r < d; ++r) {
            const double dr = mu(r, c) - mu_g[r];
            for (int s = 0; s < d; ++s)
                sigma_b(r, s) += 0.5 * dr * (mu(s, c) - mu_g[s]);
        }
    }

    const double b_norm = frobenius_norm(sigma_b);
    const double w_norm = frobenius_norm(sigma_w);
    if (b_norm <= 1e-14 * (b_norm + w_norm)) return std::nullopt;  // class means coincide
    return frobenius_sq(multiply(sigma_w, pseudo_inverse(sigma_b)));
}

std::optional<double> dnc2(const Matrix& features) {
    if (features.cols < 2) throw std::invalid_argument("dnc2: need at least 2 columns");
    const std::vector<double> s = singular_values(features);
    if (s[1] < 1e-14 * s[0] || s[0] == 0.0) return std::nullopt;
    return s[0] / s[1];
}

double dnc3(const Matrix& weights, const Matrix& activations) {
    if (weights.cols != activations.rows)
        throw std::invalid_argument("dnc3: weight columns must match activation rows");

    std::vector<double> col_norm_sq(activations.cols, 0.0);
    for (int i = 0; i < activations.rows; ++i)
        for (int j = 0; j < activations.cols; ++j)
            col_norm_sq[j] += activations(i, j) * activations(i, j);

    double weighted_sum = 0.0, weight_total = 0.0;
    for (int r = 0; r < weights.rows; ++r) {
        double w_norm_sq = 0.0;
        for (int j = 0; j < weights.cols; ++j) w_norm_sq += weights(r, j) * weights(r, j);
        const double w_norm = std::sqrt(w_norm_sq);
        if (w_norm < 1e-6) continue;

        double best_sin = 1.0;
        for (int c = 0; c < activations.cols; ++c) {
            if (col_norm_sq[c] == 0.0) continue;
            double inner = 0.0;
            for (int j = 0; j < weights.cols; ++j) inner += weights(r, j) * activations(j, c);
            // Sine of the angle via the orthogonal residual of the row against
            // the column. sqrt(1 - cos^2) loses half the mantissa near
            // alignment and cannot resolve sines below about 1e-8.
            const double coef = inner / col_norm_sq[c];
            double resid_sq = 0.0;
            for (int j = 0; j < weights.cols; ++j) {
                const double d = weights(r, j) - coef * activations(j, c);
                resid_sq += d * d;
            }
            best_sin = std::min(best_sin, std::sqrt(std::min(1.0, resid_sq / w_norm_sq)));
        }
        weighted_sum += w_norm * best_sin;
        weight_total += w_norm;
    }
    if (weight_total == 0.0) return 0.0;
    return weighted_sum / weight_total;
}

std::vector<LayerMetrics> layer_metrics(const DufmParams& params, const ForwardTrace& trace,
                                        const DufmDims& dims) {
    std::vector<LayerMetrics> out;
    out.reserve(dims.layers);
    for (int l = 1; l <= dims.layers; ++l) {
        LayerMetrics m;
        m.layer = l;
        m.dnc1_pre = dnc1(trace.pre[l - 1], dims);
        m.dnc1_post = dnc1(trace.post[l - 1], dims);
        m.dnc2_pre = dnc2(trace.pre[l - 1]);
        m.dnc2_post = dnc2(trace.post[l - 1]);
        m.dnc3 = dnc3(params.w[l - 1], trace.post[l - 1]);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace dufm
