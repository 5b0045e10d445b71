#include "dufm/theory.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dufm {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::collapse: return "collapse";
        case Regime::boundary: return "boundary";
        case Regime::zero: return "zero";
    }
    return "?";
}

double dnc_threshold(int layers) {
    if (layers < 2) throw std::invalid_argument("dnc_threshold: L must be >= 2");
    // (L-1)^{L-1} / (2^{L+1} L^{2L}); exact 128-bit integers up to L = 14,
    // log-space beyond that.
    if (layers <= 14) {
        unsigned __int128 num = 1, den = 1;
        for (int i = 0; i < layers - 1; ++i) num *= static_cast<unsigned>(layers - 1);
        for (int i = 0; i < layers + 1; ++i) den *= 2u;
        for (int i = 0; i < 2 * layers; ++i) den *= static_cast<unsigned>(layers);
        return static_cast<double>(num) / static_cast<double>(den);
    }
    const long double log_num = (layers - 1) * std::log((long double)(layers - 1));
    const long double log_den =
        (layers + 1) * std::log(2.0L) + 2.0L * layers * std::log((long double)layers);
    return static_cast<double>(std::exp(log_num - log_den));
}

Regime regime(const DufmDims& dims, const RegConfig& reg) {
    dims.validate();
    reg.validate(dims.layers);
    const double product = reg.product(dims);
    const double threshold = dnc_threshold(dims.layers);
    if (std::abs(product - threshold) <= 1e-12 * threshold) return Regime::boundary;
    return product < threshold ? Regime::collapse : Regime::zero;
}

double ridge_value(const SpectrumPair& s, double lambda_wl) {
    if (lambda_wl <= 0.0) throw std::invalid_argument("ridge_value: lambda must be positive");
    return lambda_wl / (2.0 * (s.s1 * s.s1 + 2.0 * lambda_wl)) +
           lambda_wl / (2.0 * (s.s2 * s.s2 + 2.0 * lambda_wl));
}

Matrix ridge_classifier(const Matrix& activations, double lambda_wl) {
    const int d = activations.rows;
    Matrix b = multiply(activations, transpose(activations));
    for (int i = 0; i < d; ++i) b(i, i) += 2.0 * lambda_wl;
    EigResult eig = symmetric_eig(b);
    Matrix inv(d, d);
    for (int k = 0; k < d; ++k) {
        const double w = 1.0 / eig.values[k];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) inv(i, j) += w * eig.vectors(i, k) * eig.vectors(j, k);
    }
    return multiply(transpose(activations), inv);
}

std::optional<double> key_lemma_value(const SpectrumPair& target, const SpectrumPair& given) {
    if (given.s1 < given.s2 || given.s2 < 0.0)
        throw std::invalid_argument("key_lemma_value: spectrum not ordered");
    auto ratio_sq = [](double t, double g) -> std::optional<double> {
        if (g == 0.0) {
            if (t == 0.0) return 0.0;  // 0/0 defined as 0
            return std::nullopt;       // rank obstruction
        }
        return (t * t) / (g * g);
    };
    const auto first = ratio_sq(target.s1, given.s1);
    const auto second = ratio_sq(target.s2, given.s2);
    if (!first || !second) return std::nullopt;
    return *first + *second;
}

double schatten_min_value(const SpectrumPair& s, int layers) {
    if (layers < 2) throw std::invalid_argument("schatten_min_value: L must be >= 2");
    return std::pow(s.s1 + s.s2, 2.0 / layers);
}

double variational_min_value(const Matrix& c, double lambda_a, double lambda_b) {
    if (lambda_a <= 0.0 || lambda_b <= 0.0)
        throw std::invalid_argument("variational_min_value: lambdas must be positive");
    return std::sqrt(lambda_a * lambda_b) * nuclear_norm(c);
}

std::pair<Matrix, Matrix> variational_factors(const Matrix& c, double lambda_a, double lambda_b,
                                              int inner_dim) {
    if (lambda_a <= 0.0 || lambda_b <= 0.0)
        throw std::invalid_argument("variational_factors: lambdas must be positive");
    SvdResult svd = thin_svd(c);
    int rank = 0;
    for (double s : svd.singular_values)
        if (s > 1e-12 * svd.singular_values[0]) ++rank;
    if (inner_dim < rank)
        throw std::invalid_argument("variational_factors: inner_dim below rank of C");

    // Balancing lambda_a ||A||_F^2 = lambda_b ||B||_F^2 fixes the split of
    // each singular value across the factors.
    const double gamma_a = std::pow(lambda_b / lambda_a, 0.25);
    const double gamma_b = std::pow(lambda_a / lambda_b, 0.25);
    Matrix a(c.rows, inner_dim);
    Matrix b(inner_dim, c.cols);
    for (int j = 0; j < rank; ++j) {
        const double root = std::sqrt(svd.singular_values[j]);
        for (int i = 0; i < c.rows; ++i) a(i, j) = gamma_a * root * svd.u(i, j);
        for (int i = 0; i < c.cols; ++i) b(j, i) = gamma_b * root * svd.v(i, j);
    }
    return {std::move(a), std::move(b)};
}

std::vector<double> singular_profile(double q, const DufmDims& dims, const RegConfig& reg) {
    dims.validate();
    reg.validate(dims.layers);
    const int L = dims.layers;
    if (L < 3) throw std::invalid_argument("singular_profile: L = 2 uses the y-parametrized branch");
    if (q < 0.0) throw std::invalid_argument("singular_profile: q must be non-negative");

    std::vector<double> x(L - 1, 0.0);  // x[0] = x_2 .. x[L-2] = x_L
    if (q == 0.0) return x;

    const double lam_h_eff = dims.samples_per_class * reg.lambda_h1;
    const double lam_prev = reg.lambda_w[L - 2];  // lambda_{W_{L-1}}

    // x_L = lambda_{W_{L-1}}^{L-1} / (lambda_h1' * prod_{j=1}^{L-2} lambda_{W_j}) * q^L
    double coeff = std::pow(lam_prev, L - 1) / lam_h_eff;
    for (int j = 1; j <= L - 2; ++j) coeff /= reg.lambda_w[j - 1];
    x[L - 2] = coeff * std::pow(q, L);

    // x_{l+1} / x_l = (lambda_{W_{L-1}} / lambda_{W_l}) * q
    for (int l = L - 1; l >= 2; --l)
        x[l - 2] = x[l - 1] * reg.lambda_w[l - 1] / (lam_prev * q);
    return x;
}

namespace {

// Dense grid then golden-section refinement; returns the leftmost best point.
template <typename F>
double minimize_1d(F&& f, double lo, double hi, int grid_points, double rel_tol) {
    double best_x = lo;
    double best_f = f(lo);
    for (int i = 1; i <= grid_points; ++i) {
        const double x = lo + (hi - lo) * i / grid_points;
        const double fx = f(x);
        if (fx < best_f) {
            best_f = fx;
            best_x = x;
        }
    }
    const double h = (hi - lo) / grid_points;
    double a = std::max(lo, best_x - h), b = std::min(hi, best_x + h);
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > rel_tol * std::max(1e-300, std::abs(a) + std::abs(b))) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
        if (b - a < 1e-18) break;
    }
    return fc < fd ? c : d;
}

}  // namespace

OptimumReport theoretical_optimum(const DufmDims& dims, const RegConfig& reg) {
    dims.validate();
    reg.validate(dims.layers);
    const int L = dims.layers;
    const double lam_h_eff = dims.samples_per_class * reg.lambda_h1;

    OptimumReport report;
    report.threshold = dnc_threshold(L);
    report.product = reg.product(dims);
    report.regime = regime(dims, reg);

    if (L == 2) {
        const double lam2 = reg.lambda_w[1];
        const double slope = std::sqrt(reg.lambda_w[0] * lam_h_eff);
        auto f = [&](double y) { return lam2 / (2.0 * (y * y + 2.0 * lam2)) + slope * y; };
        // Past y_max the linear term alone exceeds f(0) = 1/4.
        const double y_max = 1.0 / (4.0 * slope);
        const double y_star = minimize_1d(f, 0.0, y_max, 10000, 1e-12);
        if (f(y_star) < f(0.0)) {
            report.q_star = y_star;
            report.x = {y_star * y_star};
            report.optimal_loss = 2.0 * f(y_star);
        } else {
            report.q_star = 0.0;
            report.x = {0.0};
            report.optimal_loss = 0.5;
        }
        return report;
    }

    const double lam_last = reg.lambda_w[L - 1];
    const double lam_prev = reg.lambda_w[L - 2];
    double coeff = std::pow(lam_prev, L - 1) / lam_h_eff;
    for (int j = 1; j <= L - 2; ++j) coeff /= reg.lambda_w[j - 1];

    auto g = [&](double q) {
        const double x_last = coeff * std::pow(q, L);
        return lam_last / (2.0 * (x_last + 2.0 * lam_last)) + 0.5 * L * lam_prev * q;
    };
    // Past q_max the linear term alone exceeds g(0) = 1/4.
    const double q_max = 1.0 / (2.0 * L * lam_prev);
    const double q_star = minimize_1d(g, 0.0, q_max, 10000, 1e-12);
    if (g(q_star) < g(0.0)) {
        report.q_star = q_star;
        report.x = singular_profile(q_star, dims, reg);
        report.optimal_loss = 2.0 * g(q_star);
    } else {
        report.q_star = 0.0;
        report.x.assign(L - 1, 0.0);
        report.optimal_loss = 0.5;
    }
    return report;
}

DufmParams construct_collapsed_solution(const DufmDims& dims, const RegConfig& reg) {
    const OptimumReport opt = theoretical_optimum(dims, reg);
    if (opt.regime != Regime::collapse)
        throw std::invalid_argument("construct_collapsed_solution: regime is " +
                                    regime_name(opt.regime));
    const int L = dims.layers;
    const int n = dims.samples_per_class;

    // relu(H_l) = sqrt(x_l) [e1 | e2] for the n = 1 reduced problem.
    auto two_column_frame = [](int d, double scale) {
        Matrix m(d, 2);
        m(0, 0) = scale;
        m(1, 1) = scale;
        return m;
    };

    DufmParams params;
    params.w.resize(L);

    // Middle layers map one frame onto the next: W_l = sqrt(x_{l+1}/x_l) on
    // the leading 2x2 block.
    for (int l = 2; l <= L - 1; ++l) {
        const double scale = std::sqrt(opt.x[l - 1] / opt.x[l - 2]);
        Matrix w(dims.widths[l], dims.widths[l - 1]);
        w(0, 0) = scale;
        w(1, 1) = scale;
        params.w[l - 1] = std::move(w);
    }

    const double s_last = std::sqrt(opt.x[L - 2]);
    params.w[L - 1] =
        ridge_classifier(two_column_frame(dims.widths[L - 1], s_last), reg.lambda_w[L - 1]);

    // First layer from the variational factorization of H_2 (the t = 0,
    // non-negative member of the nuclear-norm minimizer family).
    const Matrix h2 = two_column_frame(dims.widths.size() > 1 ? dims.widths[1] : 2,
                                       std::sqrt(opt.x[0]));
    auto [w1, h1_reduced] =
        variational_factors(h2, reg.lambda_w[0], n * reg.lambda_h1, dims.widths[0]);
    params.w[0] = std::move(w1);

    params.h1 = Matrix(dims.widths[0], dims.total_samples());
    for (int c = 0; c < DufmDims::num_classes; ++c)
        for (int i = 0; i < n; ++i)
            for (int r = 0; r < dims.widths[0]; ++r)
                params.h1(r, c * n + i) = h1_reduced(r, c);

    check_shapes(params, dims);
    return params;
}

std::string optimum_report_to_json(const OptimumReport& report) {
    nlohmann::json doc;
    doc["threshold"] = report.threshold;
    doc["product"] = report.product;
    doc["regime"] = regime_name(report.regime);
    doc["q_star"] = report.q_star;
    doc["x"] = report.x;
    doc["optimal_loss"] = report.optimal_loss;
    return doc.dump(2);
}

}  // namespace dufm
