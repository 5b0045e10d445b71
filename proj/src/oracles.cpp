#include "dufm/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dufm/matrix.hpp"
#include "dufm/model.hpp"
#include "dufm/theory.hpp"

namespace dufm {

namespace {

// Singular values of a two-column matrix from its 2x2 Gram, closed form.
// Kept separate from the Jacobi path so the searches do not share code with
// the implementation they check.
SpectrumPair spectrum2(const Matrix& m) {
    double rr = 0.0, ss = 0.0, rs = 0.0;
    for (int i = 0; i < m.rows; ++i) {
        rr += m(i, 0) * m(i, 0);
        ss += m(i, 1) * m(i, 1);
        rs += m(i, 0) * m(i, 1);
    }
    const double mean = 0.5 * (rr + ss);
    const double disc = std::sqrt(std::max(0.0, mean * mean - (rr * ss - rs * rs)));
    SpectrumPair out;
    out.s1 = std::sqrt(std::max(0.0, mean + disc));
    out.s2 = std::sqrt(std::max(0.0, mean - disc));
    return out;
}

using Objective = std::function<double(const std::vector<double>&)>;

// Numeric-gradient descent with backtracking line search.
double fd_minimize(const Objective& f, std::vector<double>& x, int iters) {
    const int n = static_cast<int>(x.size());
    double fx = f(x);
    double step = 1.0;
    std::vector<double> grad(n), trial(n);
    for (int it = 0; it < iters; ++it) {
        double gnorm = 0.0;
        for (int i = 0; i < n; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
            const double saved = x[i];
            x[i] = saved + h;
            const double fp = f(x);
            x[i] = saved - h;
            const double fm = f(x);
            x[i] = saved;
            grad[i] = (fp - fm) / (2.0 * h);
            gnorm += grad[i] * grad[i];
        }
        gnorm = std::sqrt(gnorm);
        if (gnorm < 1e-12) break;

        step = std::min(step * 2.0, 1e3 / (gnorm + 1e-30));
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            for (int i = 0; i < n; ++i) trial[i] = x[i] - step * grad[i];
            const double ft = f(trial);
            if (ft < fx - 1e-12 * std::abs(fx)) {
                x = trial;
                fx = ft;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return fx;
}

// Projected variant of fd_minimize for box constraint x >= 0. Coordinates at
// the boundary use a one-sided difference so the probe stays feasible.
double fd_minimize_nonneg(const Objective& f, std::vector<double>& x, int iters) {
    const int n = static_cast<int>(x.size());
    double fx = f(x);
    double step = 1.0;
    std::vector<double> grad(n), trial(n);
    for (int it = 0; it < iters; ++it) {
        double gnorm = 0.0;
        for (int i = 0; i < n; ++i) {
            const double h = 1e-7 * std::max(1.0, std::abs(x[i]));
            const double saved = x[i];
            x[i] = saved + h;
            const double fp = f(x);
            x[i] = std::max(saved - h, 0.0);
            const double fm = f(x);
            const double width = saved + h - x[i];
            x[i] = saved;
            grad[i] = (fp - fm) / width;
            if (saved == 0.0 && grad[i] > 0.0) grad[i] = 0.0;  // pushes out of the box
            gnorm += grad[i] * grad[i];
        }
        gnorm = std::sqrt(gnorm);
        if (gnorm < 1e-14) break;

        step = std::min(step * 2.0, 1e3 / (gnorm + 1e-30));
        bool moved = false;
        for (int bt = 0; bt < 50; ++bt) {
            for (int i = 0; i < n; ++i) trial[i] = std::max(x[i] - step * grad[i], 0.0);
            const double ft = f(trial);
            if (ft < fx - 1e-14 * std::abs(fx)) {
                x = trial;
                fx = ft;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return fx;
}

// Gaussian elimination with partial pivoting; a is n x n, rhs is n x m.
Matrix solve_linear(Matrix a, Matrix rhs) {
    const int n = a.rows, m = rhs.cols;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
            for (int j = 0; j < m; ++j) std::swap(rhs(col, j), rhs(piv, j));
        }
        const double d = a(col, col);
        for (int r = col + 1; r < n; ++r) {
            const double factor = a(r, col) / d;
            if (factor == 0.0) continue;
            for (int j = col; j < n; ++j) a(r, j) -= factor * a(col, j);
            for (int j = 0; j < m; ++j) rhs(r, j) -= factor * rhs(col, j);
        }
    }
    Matrix x(n, m);
    for (int r = n - 1; r >= 0; --r) {
        for (int j = 0; j < m; ++j) {
            double s = rhs(r, j);
            for (int c = r + 1; c < n; ++c) s -= a(r, c) * x(c, j);
            x(r, j) = s / a(r, r);
        }
    }
    return x;
}

// Minimizes lambda_a/2 ||A||^2 + lambda_b/2 ||B||^2 subject to A B = C by
// eliminating the constraint through the square factor on the smaller side
// (B = A^{-1} C when rows <= cols, else A = C B^{-1}) and running multi-start
// gradient descent with backtracking. Returns the best cost found and fills
// the corresponding factor pair.
double variational_search(const Matrix& c, double lambda_a, double lambda_b, Rng& rng,
                          Matrix& a_out, Matrix& b_out) {
    const bool a_square = c.rows <= c.cols;
    const int k = a_square ? c.rows : c.cols;
    const double inf = std::numeric_limits<double>::infinity();

    auto inverse = [&](const Matrix& m) { return solve_linear(m, Matrix::identity(k)); };
    auto pair_of = [&](const Matrix& sq) {
        return a_square ? std::pair{sq, multiply(inverse(sq), c)}
                        : std::pair{multiply(c, inverse(sq)), sq};
    };
    auto cost_of = [&](const Matrix& sq) {
        const auto [a, b] = pair_of(sq);
        if (!a.all_finite() || !b.all_finite()) return inf;
        return 0.5 * lambda_a * frobenius_sq(a) + 0.5 * lambda_b * frobenius_sq(b);
    };

    double best = inf;
    for (int start = 0; start < 6; ++start) {
        Matrix sq = gaussian(rng, k, k, 1.0);
        double fx = cost_of(sq);
        if (!std::isfinite(fx)) continue;
        double step = 0.1;
        for (int it = 0; it < 5000; ++it) {
            const auto [a, b] = pair_of(sq);
            const Matrix inv_t = transpose(inverse(sq));
            const Matrix grad =
                a_square ? lambda_a * sq - lambda_b * multiply(inv_t, multiply(b, transpose(b)))
                         : lambda_b * sq - lambda_a * multiply(multiply(transpose(a), a), inv_t);
            const double gnorm = frobenius_norm(grad);
            if (gnorm < 1e-12 * (1.0 + fx)) break;
            step *= 2.0;
            bool moved = false;
            for (int bt = 0; bt < 50; ++bt) {
                const Matrix trial = sq - step * grad;
                const double ft = cost_of(trial);
                if (ft < fx - 1e-14 * fx) {
                    sq = trial;
                    fx = ft;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        if (fx < best) {
            best = fx;
            std::tie(a_out, b_out) = pair_of(sq);
        }
    }
    return best;
}

Matrix random_nonneg(Rng& rng, int rows, int cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

void track_worst(VerificationReport& report, double rel_err, const std::string& desc) {
    if (rel_err > report.max_rel_error) {
        report.max_rel_error = rel_err;
        report.worst_case = desc;
    }
}

}  // namespace

std::string VerificationReport::to_json() const {
    nlohmann::json doc;
    doc["lemma"] = lemma;
    doc["trials"] = trials;
    doc["max_rel_error"] = max_rel_error;
    doc["worst_case"] = worst_case;
    doc["passed"] = passed;
    doc["tol"] = tol;
    if (!convention.empty()) doc["convention"] = convention;
    return doc.dump(2);
}

VerificationReport verify_ridge(int trials, uint64_t seed, double tol) {
    VerificationReport report{.lemma = "ridge", .trials = trials, .tol = tol};
    Rng rng(seed);
    bool ok = true;

    for (int trial = 0; trial < trials; ++trial) {
        const int d = rng.uniform_int(2, 8);
        // Trial 0 pins the zero-feature case: both routes must give 1/2.
        const Matrix acts =
            trial == 0 ? Matrix(d, 2) : random_nonneg(rng, d, 2, 0.0, 2.0);
        const double lambda = std::exp(rng.uniform(std::log(1e-4), std::log(1.0)));

        auto objective = [&](const Matrix& w) {
            return 0.25 * frobenius_sq(multiply(w, acts) - Matrix::identity(2)) +
                   0.5 * lambda * frobenius_sq(w);
        };
        auto grad = [&](const Matrix& w) {
            return 0.5 * multiply(multiply(w, acts) - Matrix::identity(2), transpose(acts)) +
                   lambda * w;
        };

        // The objective is an uncoupled ridge regression per output row, so
        // the search optimum comes from Gaussian elimination on the normal
        // equations (0.5 A A^T + lambda I) w_r = 0.5 A e_r, a route fully
        // disjoint from the spectral closed form. A short gradient polish
        // confirms the solve landed on a stationary point.
        const SpectrumPair spec = spectrum2(acts);
        Matrix normal = multiply(acts, transpose(acts));
        for (double& v : normal.data) v *= 0.5;
        for (int i = 0; i < d; ++i) normal(i, i) += lambda;
        Matrix rhs = acts;
        for (double& v : rhs.data) v *= 0.5;
        Matrix w = transpose(solve_linear(normal, rhs));
        const double lr = 1.0 / (0.5 * spec.s1 * spec.s1 + lambda);
        for (int it = 0; it < 50; ++it) w = w - lr * grad(w);
        const double best = objective(w);

        const double closed = ridge_value(spec, lambda);
        const double rel = std::abs(best - closed) / closed;
        std::ostringstream desc;
        desc << "d=" << d << " lambda=" << lambda << " s=(" << spec.s1 << "," << spec.s2 << ")";
        track_worst(report, rel, desc.str());
        if (rel > tol) ok = false;
        if (best < closed * (1.0 - tol)) ok = false;  // search must not beat the certificate

        // The closed-form classifier must attain the value and be stationary.
        const Matrix w_closed = ridge_classifier(acts, lambda);
        if (std::abs(objective(w_closed) - closed) > 1e-9 * (1.0 + closed)) ok = false;
        if (frobenius_norm(grad(w_closed)) > 1e-8) ok = false;
    }
    report.passed = ok;
    return report;
}

VerificationReport verify_key_lemma(int trials, uint64_t seed, double tol) {
    VerificationReport report{.lemma = "key", .trials = trials, .tol = tol};
    Rng rng(seed);
    bool ok = true;
    int squared_wins = 0, unsquared_wins = 0;

    auto search_min = [&](const Matrix& x_mat, const SpectrumPair& target, int out_dim,
                          int restarts, double* residual_out) {
        auto penalized = [&](const std::vector<double>& flat, double rho) {
            Matrix w(out_dim, x_mat.rows, std::vector<double>(flat));
            const SpectrumPair got = spectrum2(relu(multiply(w, x_mat)));
            const double mismatch = (got.s1 - target.s1) * (got.s1 - target.s1) +
                                    (got.s2 - target.s2) * (got.s2 - target.s2);
            return frobenius_sq(w) + rho * mismatch;
        };
        double best = std::numeric_limits<double>::infinity();
        double best_residual = std::numeric_limits<double>::infinity();
        for (int start = 0; start < restarts; ++start) {
            Matrix w0 = start % 2 == 0 ? gaussian(rng, out_dim, x_mat.rows, 1.0)
                                       : random_nonneg(rng, out_dim, x_mat.rows, 0.0, 1.0);
            std::vector<double> flat = w0.data;
            for (double rho : {1e2, 1e4, 1e6, 1e8}) {
                Objective f = [&](const std::vector<double>& v) { return penalized(v, rho); };
                fd_minimize(f, flat, 500);
            }
            Matrix w(out_dim, x_mat.rows, flat);
            const SpectrumPair got = spectrum2(relu(multiply(w, x_mat)));
            const double mismatch = std::hypot(got.s1 - target.s1, got.s2 - target.s2);
            if (mismatch < best_residual) best_residual = mismatch;
            if (mismatch < 1e-3 * (1.0 + target.s1)) best = std::min(best, frobenius_sq(w));
        }
        if (residual_out) *residual_out = best_residual;
        return best;
    };

    // The convention-resolving experiment: X = identity embedded in 3x2,
    // target (2,1). Squared ratios give 5, unsquared give 3.
    {
        Matrix x_mat(3, 2);
        x_mat(0, 0) = 1.0;
        x_mat(1, 1) = 1.0;
        const SpectrumPair target{2.0, 1.0};
        const double found = search_min(x_mat, target, 3, 20, nullptr);
        if (std::abs(found - 5.0) < std::abs(found - 3.0))
            ++squared_wins;
        else
            ++unsquared_wins;
        const double rel = std::abs(found - 5.0) / 5.0;
        track_worst(report, rel, "identity-embedding target (2,1)");
        if (rel > tol) ok = false;
    }

    for (int trial = 0; trial < trials; ++trial) {
        const int m = rng.uniform_int(3, 5);
        const int out_dim = rng.uniform_int(2, 4);
        Matrix x_mat = random_nonneg(rng, m, 2, 0.0, 1.5);
        SpectrumPair given = spectrum2(x_mat);
        if (given.s2 < 0.15 * given.s1) {
            // Keep X comfortably full rank.
            x_mat(0, 0) += 1.0;
            x_mat(1, 1) += 1.0;
            given = spectrum2(x_mat);
        }
        const double t1 = rng.uniform(0.5, 2.0);
        const double t2 = rng.uniform(0.0, t1);
        const SpectrumPair target{t1, t2};

        const double found = search_min(x_mat, target, out_dim, 20, nullptr);
        const double squared = *key_lemma_value(target, given);
        const double unsquared = t1 / given.s1 + t2 / given.s2;
        if (std::abs(found - squared) <= std::abs(found - unsquared))
            ++squared_wins;
        else
            ++unsquared_wins;

        const double rel = std::abs(found - squared) / squared;
        std::ostringstream desc;
        desc << "m=" << m << " d=" << out_dim << " target=(" << t1 << "," << t2 << ")";
        track_worst(report, rel, desc.str());
        if (rel > tol) ok = false;
        if (found < squared * (1.0 - tol)) ok = false;
    }

    // Infeasibility probe: rank-1 X cannot produce a rank-2 relu(WX).
    {
        Matrix x_mat(3, 2);
        for (int i = 0; i < 3; ++i) {
            x_mat(i, 0) = 0.5 + 0.3 * i;
            x_mat(i, 1) = 2.0 * x_mat(i, 0);
        }
        double residual = 0.0;
        search_min(x_mat, SpectrumPair{1.0, 0.5}, 3, 10, &residual);
        if (residual < 0.4) ok = false;  // s2 of relu(WX) is pinned at 0, mismatch >= 0.5
    }

    report.convention = squared_wins >= unsquared_wins ? "squared" : "unsquared";
    if (report.convention != "squared") ok = false;
    report.passed = ok;
    return report;
}

VerificationReport verify_row_kkt(int trials, uint64_t seed, double tol) {
    VerificationReport report{.lemma = "rowkkt", .trials = trials, .tol = tol};
    Rng rng(seed);
    bool ok = true;

    for (int trial = 0; trial < trials; ++trial) {
        const int m = rng.uniform_int(3, 5);
        const int d = rng.uniform_int(2, 4);
        Matrix x_mat = random_nonneg(rng, m, 2, 0.05, 1.0);
        // Sparsify A a little so the inequality-constrained rows get exercised.
        Matrix a_mat = random_nonneg(rng, d, 2, 0.0, 1.0);
        for (double& v : a_mat.data)
            if (rng.uniform() < 0.25) v = 0.0;

        double xx = 0.0, yy = 0.0, xy = 0.0;
        for (int i = 0; i < m; ++i) {
            xx += x_mat(i, 0) * x_mat(i, 0);
            yy += x_mat(i, 1) * x_mat(i, 1);
            xy += x_mat(i, 0) * x_mat(i, 1);
        }
        double aa = 0.0, bb = 0.0, ab = 0.0;
        for (int i = 0; i < d; ++i) {
            aa += a_mat(i, 0) * a_mat(i, 0);
            bb += a_mat(i, 1) * a_mat(i, 1);
            ab += a_mat(i, 0) * a_mat(i, 1);
        }
        const double denom = xx * yy - xy * xy;
        // Nearly aligned columns make both the formula and the penalty search
        // ill-conditioned; that limit is pinned by the aligned branch below.
        if (denom < 0.05 * xx * yy) continue;
        const double closed = (aa * yy - 2.0 * ab * xy + bb * xx) / denom;

        auto penalized = [&](const std::vector<double>& flat, double rho) {
            Matrix w(d, m, std::vector<double>(flat));
            return frobenius_sq(w) + rho * frobenius_sq(relu(multiply(w, x_mat)) - a_mat);
        };
        // One start is the row-wise span solution w_r = alpha x + beta y with
        // both constraints active: always feasible, so the search cannot come
        // back empty-handed, and any descent from it would expose a wrong
        // formula. Half the random starts are non-negative: with non-negative
        // inputs they keep every relu alive, so the penalty gradient cannot
        // die.
        Matrix span(d, m);
        for (int r = 0; r < d; ++r) {
            const double alpha = (a_mat(r, 0) * yy - a_mat(r, 1) * xy) / denom;
            const double beta = (a_mat(r, 1) * xx - a_mat(r, 0) * xy) / denom;
            for (int i = 0; i < m; ++i)
                span(r, i) = alpha * x_mat(i, 0) + beta * x_mat(i, 1);
        }
        double best = std::numeric_limits<double>::infinity();
        double least_residual = std::numeric_limits<double>::infinity();
        Matrix best_w(d, m);
        for (int start = 0; start < 13; ++start) {
            std::vector<double> flat = start == 12 ? span.data
                                       : start % 2 == 0
                                           ? gaussian(rng, d, m, 1.0).data
                                           : random_nonneg(rng, d, m, 0.0, 1.0).data;
            for (double rho : {1e2, 1e4, 1e6, 1e8}) {
                Objective f = [&](const std::vector<double>& v) { return penalized(v, rho); };
                fd_minimize(f, flat, 250);
            }
            Matrix w(d, m, flat);
            const double residual = frobenius_norm(relu(multiply(w, x_mat)) - a_mat);
            least_residual = std::min(least_residual, residual);
            if (residual < 1e-4 * (1.0 + frobenius_norm(a_mat))) {
                const double val = frobenius_sq(w);
                if (val < best) {
                    best = val;
                    best_w = w;
                }
            }
        }

        if (!std::isfinite(best)) {
            ok = false;
            std::ostringstream diag;
            diag << "no feasible search point, trial " << trial << " m=" << m << " d=" << d
                 << " denom=" << denom << " closed=" << closed
                 << " least_residual=" << least_residual;
            track_worst(report, 1.0, diag.str());
            continue;
        }
        const double rel = std::abs(best - closed) / closed;
        std::ostringstream desc;
        desc << "m=" << m << " d=" << d << " closed=" << closed;
        track_worst(report, rel, desc.str());
        if (rel > tol) ok = false;
        if (best < closed * (1.0 - tol)) ok = false;

        // The lemma asserts W*X >= 0 at the optimum.
        const Matrix wx = multiply(best_w, x_mat);
        double min_entry = 0.0;
        for (double v : wx.data) min_entry = std::min(min_entry, v);
        // Tolerance matches the penalty search: rows with zero targets rest
        // a little below the active boundary W*X = 0.
        if (min_entry < -1e-2) {
            ok = false;
            track_worst(report, 1.0, "negative W*X entry " + std::to_string(min_entry));
        }
    }

    // Aligned branch: x = alpha y with consistent A gives b^T b / y^T y.
    {
        Matrix x_mat(4, 2);
        for (int i = 0; i < 4; ++i) {
            x_mat(i, 1) = 0.3 + 0.2 * i;
            x_mat(i, 0) = 1.7 * x_mat(i, 1);  // alpha = 1.7
        }
        Matrix a_mat(3, 2);
        for (int i = 0; i < 3; ++i) {
            a_mat(i, 1) = 0.4 + 0.3 * i;
            a_mat(i, 0) = 1.7 * a_mat(i, 1);
        }
        double yy = 0.0, bb = 0.0;
        for (int i = 0; i < 4; ++i) yy += x_mat(i, 1) * x_mat(i, 1);
        for (int i = 0; i < 3; ++i) bb += a_mat(i, 1) * a_mat(i, 1);
        // Direct substitution: rows w_j = (b_j / y^T y) y are feasible and optimal.
        Matrix w(3, 4);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 4; ++i) w(j, i) = a_mat(j, 1) / yy * x_mat(i, 1);
        if (frobenius_norm(relu(multiply(w, x_mat)) - a_mat) > 1e-10 ||
            std::abs(frobenius_sq(w) - bb / yy) > 1e-10) {
            ok = false;
            track_worst(report, 1.0, "aligned-branch substitution failed");
        }
    }

    // Orthogonal X, rows of A hitting one column each: optimal rows align
    // with columns of X (zero weighted sine).
    {
        Matrix x_mat(4, 2);
        x_mat(0, 0) = 1.2;
        x_mat(2, 1) = 0.8;
        Matrix a_mat(2, 2);
        a_mat(0, 0) = 0.9;
        a_mat(1, 1) = 0.6;
        auto penalized = [&](const std::vector<double>& flat, double rho) {
            Matrix w(2, 4, std::vector<double>(flat));
            return frobenius_sq(w) + rho * frobenius_sq(relu(multiply(w, x_mat)) - a_mat);
        };
        // Restart from non-negative points: a start with a dead relu on the
        // target coordinate can leave the penalty term stuck at its floor.
        double best = std::numeric_limits<double>::infinity();
        Matrix w(2, 4);
        for (int start = 0; start < 8; ++start) {
            std::vector<double> flat = random_nonneg(rng, 2, 4, 0.0, 1.0).data;
            for (double rho : {1e2, 1e4, 1e6, 1e8}) {
                Objective f = [&](const std::vector<double>& v) { return penalized(v, rho); };
                fd_minimize(f, flat, 400);
            }
            Matrix cand(2, 4, flat);
            if (frobenius_norm(relu(multiply(cand, x_mat)) - a_mat) > 1e-4) continue;
            const double val = frobenius_sq(cand);
            if (val < best) {
                best = val;
                w = cand;
            }
        }
        if (!std::isfinite(best)) {
            ok = false;
            track_worst(report, 1.0, "orthogonal-input search found no feasible point");
        }
        for (int r = 0; r < 2; ++r) {
            double wn = 0.0, inner_best = 0.0;
            for (int i = 0; i < 4; ++i) wn += w(r, i) * w(r, i);
            for (int c = 0; c < 2; ++c) {
                double inner = 0.0, cn = 0.0;
                for (int i = 0; i < 4; ++i) {
                    inner += w(r, i) * x_mat(i, c);
                    cn += x_mat(i, c) * x_mat(i, c);
                }
                inner_best = std::max(inner_best, inner * inner / (wn * cn));
            }
            // The penalty search leaves a few 1e-3 of mass in the free
            // coordinates, so the sine only resolves down to about that scale.
            if (std::sqrt(std::max(0.0, 1.0 - inner_best)) > 1e-2) {
                ok = false;
                track_worst(report, 1.0, "orthogonal-input row not aligned with a column");
            }
        }
    }

    report.passed = ok;
    return report;
}

VerificationReport verify_schatten(int trials, uint64_t seed, double tol) {
    VerificationReport report{.lemma = "schatten", .trials = trials, .tol = tol};
    Rng rng(seed);
    bool ok = true;

    // Minimize the Schatten value over negative injections placed where the
    // fixed non-negative part has zeros.
    auto injected_min = [&](const Matrix& p, int power_l, int restarts) {
        std::vector<std::pair<int, int>> slots;
        for (int i = 0; i < p.rows; ++i)
            for (int j = 0; j < 2; ++j)
                if (p(i, j) == 0.0) slots.emplace_back(i, j);
        auto value = [&](const std::vector<double>& v) {
            Matrix h = p;
            for (size_t k = 0; k < slots.size(); ++k)
                h(slots[k].first, slots[k].second) = -v[k] * v[k];
            const SpectrumPair s = spectrum2(h);
            return std::pow(s.s1, 2.0 / power_l) + std::pow(s.s2, 2.0 / power_l);
        };
        auto spectrum_at = [&](const std::vector<double>& v) {
            Matrix h = p;
            for (size_t k = 0; k < slots.size(); ++k)
                h(slots[k].first, slots[k].second) = -v[k] * v[k];
            return spectrum2(h);
        };
        double best = value(std::vector<double>(slots.size(), 0.0));
        for (int start = 0; start < restarts; ++start) {
            std::vector<double> v(slots.size());
            for (double& e : v) e = rng.uniform(0.0, 1.2);
            best = std::min(best, fd_minimize(value, v, 800));

            // For L > 2 the minimizer is rank one, where s2^{2/L} has a cusp
            // that stalls plain descent. Chase the rank-one set with a smooth
            // penalty on s2^2 instead, then score the endpoint honestly.
            // The polish runs on the slot magnitudes u = v^2 with projection
            // onto u >= 0: slots that belong at exactly zero snap there,
            // where the squared parametrization only crawls.
            if (power_l > 2) {
                for (double& e : v) e = rng.uniform(0.0, 1.2);
                for (double rho : {1e2, 1e3}) {
                    Objective f = [&](const std::vector<double>& w) {
                        const SpectrumPair s = spectrum_at(w);
                        return s.s1 * s.s1 + rho * s.s2 * s.s2;
                    };
                    fd_minimize(f, v, 300);
                }
                std::vector<double> u(v.size());
                for (size_t k = 0; k < v.size(); ++k) u[k] = v[k] * v[k];
                auto spectrum_at_u = [&](const std::vector<double>& w) {
                    Matrix h = p;
                    for (size_t k = 0; k < slots.size(); ++k)
                        h(slots[k].first, slots[k].second) = -w[k];
                    return spectrum2(h);
                };
                Objective pen_u = [&](const std::vector<double>& w) {
                    const SpectrumPair s = spectrum_at_u(w);
                    return s.s1 * s.s1 + 1e4 * s.s2 * s.s2;
                };
                Objective s2_u = [&](const std::vector<double>& w) {
                    const SpectrumPair s = spectrum_at_u(w);
                    return s.s2 * s.s2;
                };
                for (int round = 0; round < 4; ++round) {
                    fd_minimize_nonneg(pen_u, u, 400);
                    fd_minimize_nonneg(s2_u, u, 400);
                }
                const SpectrumPair end = spectrum_at_u(u);
                best = std::min(best, std::pow(end.s1, 2.0 / power_l) +
                                          std::pow(end.s2, 2.0 / power_l));
            }
        }
        return best;
    };

    const int kPowers[] = {2, 3, 4};
    for (int trial = 0; trial < trials; ++trial) {
        const int power_l = kPowers[trial % 3];
        const int rows = rng.uniform_int(3, 6);

        // Disjoint-support P: the closed form is attained, so this is the
        // equality case that drives max_rel_error.
        Matrix p(rows, 2);
        for (int i = 0; i < rows; ++i) {
            const int which = rng.uniform_int(0, 2);  // 0, 1, or a zero row
            if (which < 2) p(i, which) = rng.uniform(0.2, 1.5);
        }
        const SpectrumPair s = spectrum2(p);
        if (s.s1 == 0.0 || s.s2 == 0.0) continue;
        const double closed = schatten_min_value(s, power_l);
        const double found = injected_min(p, power_l, 10);
        const double rel = std::abs(found - closed) / closed;
        std::ostringstream desc;
        desc << "rows=" << rows << " L=" << power_l;
        track_worst(report, rel, desc.str());
        if (rel > tol) ok = false;
        if (found < closed * (1.0 - tol)) ok = false;

        // Shared-support P: closed form stays a valid lower bound.
        Matrix q = p;
        q(0, 0) = rng.uniform(0.2, 1.0);
        q(0, 1) = rng.uniform(0.2, 1.0);
        const double closed_q = schatten_min_value(spectrum2(q), power_l);
        if (injected_min(q, power_l, 4) < closed_q * (1.0 - tol)) ok = false;
    }

    // A shared-support matrix with a small overlap row admits strict descent
    // through injection when L > 2.
    for (int power_l : {3, 4}) {
        Matrix p(3, 2);
        p(0, 0) = 0.1;
        p(0, 1) = 0.1;
        p(1, 0) = 1.0;
        p(2, 1) = 1.0;
        const double at_zero = std::pow(spectrum2(p).s1, 2.0 / power_l) +
                               std::pow(spectrum2(p).s2, 2.0 / power_l);
        if (injected_min(p, power_l, 8) >= at_zero - 1e-4) ok = false;
    }

    report.passed = ok;
    return report;
}

VerificationReport verify_variational(int trials, uint64_t seed, double tol) {
    VerificationReport report{.lemma = "variational", .trials = trials, .tol = tol};
    Rng rng(seed);
    bool ok = true;

    for (int trial = 0; trial < trials; ++trial) {
        const int rows = rng.uniform_int(2, 6);
        const int cols = rng.uniform_int(2, 6);
        const Matrix c = trial == 0 ? Matrix(rows, cols) : gaussian(rng, rows, cols, 1.0);
        const double lambda_a = rng.uniform(0.1, 2.0);
        const double lambda_b = rng.uniform(0.1, 2.0);
        const int k = std::min(rows, cols);

        // Parametrize the constraint away through the square factor on the
        // smaller side (B = A^{-1} C or A = C B^{-1}) and run multi-start
        // gradient descent with backtracking on the now-unconstrained cost.
        // Alternating ridge solves were tried first but stall on fixed points
        // that pair singular directions of A and B in the wrong order.
        Matrix a(rows, k), b(k, cols);
        const double found = variational_search(c, lambda_a, lambda_b, rng, a, b);
        const double closed = variational_min_value(c, lambda_a, lambda_b);
        const double rel = std::abs(found - closed) / (closed + 1e-12);
        std::ostringstream desc;
        desc << rows << "x" << cols << " lambdas=(" << lambda_a << "," << lambda_b << ")";
        track_worst(report, rel, desc.str());
        if (rel > tol) ok = false;
        if (found < closed * (1.0 - tol) - 1e-12) ok = false;

        // Balancing identity at the search optimum.
        if (closed > 1e-9) {
            const double lhs = lambda_a * frobenius_sq(a);
            const double rhs = lambda_b * frobenius_sq(b);
            if (std::abs(lhs - rhs) / (lhs + rhs) > tol) {
                ok = false;
                track_worst(report, 1.0, "balancing identity violated at the search optimum");
            }
        }

        // The closed-form factors must attain the value exactly.
        auto [fa, fb] = variational_factors(c, lambda_a, lambda_b, k);
        if (frobenius_norm(multiply(fa, fb) - c) > 1e-10 * (1.0 + frobenius_norm(c))) {
            ok = false;
            track_worst(report, 1.0, "closed-form factors do not reproduce the product");
        }
        const double factor_cost =
            0.5 * lambda_a * frobenius_sq(fa) + 0.5 * lambda_b * frobenius_sq(fb);
        if (std::abs(factor_cost - closed) > 1e-10 * (1.0 + closed)) {
            ok = false;
            track_worst(report, 1.0, "closed-form factor cost mismatch");
        }
    }
    report.passed = ok;
    return report;
}

VerificationReport verify_sigma_opt(int trials, uint64_t seed, double tol) {
    VerificationReport report{.lemma = "sigma", .trials = trials, .tol = tol};
    Rng rng(seed);
    bool ok = true;

    // Direct multi-start coordinate descent on the reduced per-index
    // objective, on a log grid.
    auto direct_min = [&](const DufmDims& dims, const RegConfig& reg) {
        const int L = dims.layers;
        const double lam_h_eff = dims.samples_per_class * reg.lambda_h1;
        auto value = [&](const std::vector<double>& z) {
            std::vector<double> x(L - 1);
            for (int i = 0; i < L - 1; ++i) x[i] = std::exp(z[i]);
            double v = reg.lambda_w[L - 1] / (2.0 * (x[L - 2] + 2.0 * reg.lambda_w[L - 1]));
            for (int l = 2; l <= L - 1; ++l)
                v += 0.5 * reg.lambda_w[l - 1] * x[l - 1] / x[l - 2];
            v += std::sqrt(reg.lambda_w[0] * lam_h_eff) * std::sqrt(x[0]);
            return v;
        };
        // The ratio terms couple the coordinates into a narrow curved valley
        // only about 12% below the 1/4 plateau, and away from the valley the
        // gradients decay exponentially, so neither coordinate descent nor a
        // coarse grid with local polish lands in it. Scan a fine Cartesian
        // grid (at most 4 dimensions, allocation-free inner loop) and polish
        // the winner with gradient descent in log coordinates.
        const int dim = L - 1;
        auto value_at = [&](const double* z) {
            double x[4];
            for (int i = 0; i < dim; ++i) x[i] = std::exp(z[i]);
            double v = reg.lambda_w[L - 1] / (2.0 * (x[dim - 1] + 2.0 * reg.lambda_w[L - 1]));
            for (int l = 2; l <= L - 1; ++l)
                v += 0.5 * reg.lambda_w[l - 1] * x[l - 1] / x[l - 2];
            return v + std::sqrt(reg.lambda_w[0] * lam_h_eff * x[0]);
        };
        const int points = 53;  // spacing 0.5 over [-20, 6]
        double z[4], best_z[4] = {-20.0, -20.0, -20.0, -20.0};
        double best = 0.25;  // the all-zero limit
        int idx[4] = {0, 0, 0, 0};
        while (true) {
            for (int i = 0; i < dim; ++i) z[i] = -20.0 + 0.5 * idx[i];
            const double v = value_at(z);
            if (v < best) {
                best = v;
                std::copy(z, z + dim, best_z);
            }
            int carry = dim - 1;
            while (carry >= 0 && ++idx[carry] == points) idx[carry--] = 0;
            if (carry < 0) break;
        }
        std::vector<double> start(best_z, best_z + dim);
        return std::min(best, fd_minimize(value, start, 600));
    };

    const int depths[] = {2, 3, 4, 5};
    for (int trial = 0; trial < trials; ++trial) {
        const int L = depths[trial % 4];
        DufmDims dims;
        dims.layers = L;
        dims.widths.assign(L, 8);
        dims.samples_per_class = rng.uniform_int(1, 20);
        RegConfig reg;
        reg.lambda_w.resize(L);
        reg.lambda_h1 = std::exp(rng.uniform(std::log(1e-3), std::log(0.3)));
        for (double& l : reg.lambda_w) l = std::exp(rng.uniform(std::log(1e-3), std::log(0.3)));

        // Scale lambda_h1 so the product lands below or above threshold.
        const double target_factor = trial % 2 == 0 ? 0.5 : 2.0;
        reg.lambda_h1 *= target_factor * dnc_threshold(L) / reg.product(dims);

        const OptimumReport opt = theoretical_optimum(dims, reg);
        const double per_index_theory = opt.optimal_loss / 2.0;
        double per_index_direct;
        if (L == 2) {
            // One variable; reuse the coordinate machinery via a fine scan on y.
            const double slope = std::sqrt(reg.lambda_w[0] * dims.samples_per_class * reg.lambda_h1);
            auto f = [&](double y) {
                return reg.lambda_w[1] / (2.0 * (y * y + 2.0 * reg.lambda_w[1])) + slope * y;
            };
            per_index_direct = 0.25;
            const double y_hi = 1.0 / (2.0 * slope);
            for (int g = 1; g <= 200000; ++g)
                per_index_direct = std::min(per_index_direct, f(y_hi * g / 200000.0));
        } else {
            per_index_direct = direct_min(dims, reg);
        }

        const double rel = std::abs(per_index_direct - per_index_theory) / per_index_theory;
        std::ostringstream desc;
        desc << "L=" << L << " factor=" << target_factor << " n=" << dims.samples_per_class;
        track_worst(report, rel, desc.str());
        if (rel > tol) ok = false;
        if (per_index_direct < per_index_theory * (1.0 - tol)) ok = false;
        if (target_factor > 1.0 && std::abs(opt.optimal_loss - 0.5) > 1e-12) ok = false;
        if (target_factor < 1.0 && opt.optimal_loss >= 0.5) ok = false;
    }

    // L = 2 transition: the crossover product sits at 1/128, not 1/256.
    {
        DufmDims dims;
        dims.layers = 2;
        dims.widths = {4, 4};
        dims.samples_per_class = 1;
        auto loss_at_product = [&](double product) {
            RegConfig reg;
            reg.lambda_w = {0.2, 0.2};
            reg.lambda_h1 = product / (0.2 * 0.2);
            return theoretical_optimum(dims, reg).optimal_loss;
        };
        double lo = 0.5 / 128.0, hi = 2.0 / 128.0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (loss_at_product(mid) < 0.5)
                lo = mid;
            else
                hi = mid;
        }
        const double crossover = 0.5 * (lo + hi);
        if (std::abs(crossover - 1.0 / 128.0) > 0.01 / 128.0) ok = false;
        if (std::abs(crossover - 1.0 / 256.0) < 0.01 / 256.0) ok = false;
    }

    report.passed = ok;
    return report;
}

VerificationReport verify_counterexample() {
    VerificationReport report{.lemma = "counterexample", .trials = 1, .tol = 1e-3};
    bool ok = true;

    const Matrix a(3, 3, {-1, 0, 1, 0, 1, 1, 1, 1, 0});
    const double plain = nuclear_norm(a);
    const double rectified = nuclear_norm(relu(a));
    track_worst(report, std::abs(plain - 3.464), "nuclear norm of the fixed 3x3 matrix");
    if (std::abs(plain - 3.464) > 1e-3) ok = false;
    if (std::abs(rectified - 3.494) > 1e-3) ok = false;
    if (rectified <= plain) ok = false;  // the violation is the whole point
    if (std::abs(nuclear_norm(transpose(a)) - plain) > 1e-9) ok = false;

    // Two-column monotonicity holds without exception.
    Rng rng(12345);
    for (int trial = 0; trial < 10000; ++trial) {
        const int rows = rng.uniform_int(2, 6);
        const Matrix m = gaussian(rng, rows, 2, 1.0);
        if (nuclear_norm(relu(m)) > nuclear_norm(m) + 1e-9) {
            ok = false;
            break;
        }
    }
    report.passed = ok;
    return report;
}

}  // namespace dufm
