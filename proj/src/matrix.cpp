#include "dufm/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dufm {

Matrix::Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != static_cast<size_t>(r) * c)
        throw std::invalid_argument("Matrix: data length does not match rows*cols");
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("operator+: shape mismatch");
    Matrix r = a;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
    return r;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("operator-: shape mismatch");
    Matrix r = a;
    for (size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
    return r;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix r = a;
    for (double& v : r.data) v *= s;
    return r;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("multiply: inner dimensions differ");
    Matrix r(a.rows, b.cols);
    const int n = a.rows, k = a.cols, m = b.cols;
    // i-k-j order so the inner loop runs over contiguous rows of b and r.
    for (int i = 0; i < n; ++i) {
        double* ri = &r.data[static_cast<size_t>(i) * m];
        const double* ai = &a.data[static_cast<size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
            const double aip = ai[p];
            if (aip == 0.0) continue;
            const double* bp = &b.data[static_cast<size_t>(p) * m];
            for (int j = 0; j < m; ++j) ri[j] += aip * bp[j];
        }
    }
    return r;
}

Matrix transpose(const Matrix& m) {
    Matrix r(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) r(j, i) = m(i, j);
    return r;
}

Matrix relu(const Matrix& m) {
    Matrix r = m;
    for (double& v : r.data) v = v > 0.0 ? v : 0.0;
    return r;
}

double frobenius_sq(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(frobenius_sq(m)); }

double dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

EigResult symmetric_eig(const Matrix& sym) {
    if (sym.rows != sym.cols) throw std::invalid_argument("symmetric_eig: matrix not square");
    const int n = sym.rows;
    Matrix a = sym;
    Matrix v = Matrix::identity(n);

    double trace = 0.0;
    for (int i = 0; i < n; ++i) trace += std::abs(a(i, i));
    const double tol = 1e-13 * std::max(trace, 1e-300);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= tol / (n * n + 1.0)) continue;
                const double app = a(p, p), aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const double apj = a(p, j), aqj = a(q, j);
                    a(p, j) = c * apj - s * aqj;
                    a(q, j) = s * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

    EigResult res;
    res.values.resize(n);
    res.vectors = Matrix(n, n);
    for (int k = 0; k < n; ++k) {
        res.values[k] = a(order[k], order[k]);
        for (int i = 0; i < n; ++i) res.vectors(i, k) = v(i, order[k]);
    }
    return res;
}

namespace {

// Going through the Gram matrix squares the spectrum, so eigenvalues below
// the Jacobi noise floor (about 1e-13 of the trace) carry no information.
// Clamping them to zero keeps rank decisions downstream honest.
std::vector<double> gram_singular_values(const std::vector<double>& eigenvalues) {
    double trace = 0.0;
    for (double v : eigenvalues) trace += std::max(v, 0.0);
    const double floor = 1e-12 * trace;
    std::vector<double> s(eigenvalues.size());
    for (size_t i = 0; i < s.size(); ++i)
        s[i] = eigenvalues[i] > floor ? std::sqrt(eigenvalues[i]) : 0.0;
    return s;
}

}  // namespace

SvdResult thin_svd(const Matrix& m) {
    SvdResult res;
    const int k = std::min(m.rows, m.cols);
    const Matrix mt = transpose(m);
    // Eigendecompose the smaller Gram matrix; recover the other factor by
    // projection through m.
    const bool rows_smaller = m.rows <= m.cols;
    const Matrix gram = rows_smaller ? multiply(m, mt) : multiply(mt, m);
    EigResult eig = symmetric_eig(gram);

    res.singular_values = gram_singular_values(eig.values);

    if (rows_smaller) {
        res.u = eig.vectors;                 // rows x k
        res.v = Matrix(m.cols, k);
        const Matrix mtu = multiply(mt, res.u);
        for (int j = 0; j < k; ++j) {
            const double s = res.singular_values[j];
            if (s > 0.0)
                for (int i = 0; i < m.cols; ++i) res.v(i, j) = mtu(i, j) / s;
        }
    } else {
        res.v = eig.vectors;                 // cols x k
        res.u = Matrix(m.rows, k);
        const Matrix mv = multiply(m, res.v);
        for (int j = 0; j < k; ++j) {
            const double s = res.singular_values[j];
            if (s > 0.0)
                for (int i = 0; i < m.rows; ++i) res.u(i, j) = mv(i, j) / s;
        }
    }
    return res;
}

std::vector<double> singular_values(const Matrix& m) {
    const Matrix mt = transpose(m);
    const Matrix gram = m.rows <= m.cols ? multiply(m, mt) : multiply(mt, m);
    EigResult eig = symmetric_eig(gram);
    return gram_singular_values(eig.values);
}

double nuclear_norm(const Matrix& m) {
    double sum = 0.0;
    for (double s : singular_values(m)) sum += s;
    return sum;
}

double schatten_power(const Matrix& m, int power_l) {
    if (power_l < 2) throw std::invalid_argument("schatten_power: L must be >= 2");
    const double p = 2.0 / power_l;
    double sum = 0.0;
    for (double s : singular_values(m)) sum += std::pow(s, p);
    return sum;
}

Matrix pseudo_inverse(const Matrix& m, double rel_tol) {
    if (rel_tol <= 0.0) throw std::invalid_argument("pseudo_inverse: rel_tol must be positive");
    SvdResult svd = thin_svd(m);
    const int k = static_cast<int>(svd.singular_values.size());
    const double cutoff = svd.singular_values.empty() ? 0.0 : rel_tol * svd.singular_values[0];
    Matrix result(m.cols, m.rows);
    // M^+ = sum_j v_j u_j^T / s_j over retained singular triplets.
    for (int j = 0; j < k; ++j) {
        const double s = svd.singular_values[j];
        if (s <= cutoff || s == 0.0) continue;
        const double inv = 1.0 / s;
        for (int i = 0; i < m.cols; ++i) {
            const double vij = svd.v(i, j) * inv;
            if (vij == 0.0) continue;
            for (int r = 0; r < m.rows; ++r) result(i, r) += vij * svd.u(r, j);
        }
    }
    return result;
}

uint64_t Rng::next_u64() {
    // splitmix64 (Steele, Lea, Flood 2014)
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
}

Matrix gaussian(Rng& rng, int rows, int cols, double std) {
    if (std < 0.0) throw std::invalid_argument("gaussian: std must be non-negative");
    Matrix m(rows, cols);
    if (std == 0.0) return m;
    for (double& v : m.data) v = std * rng.normal();
    return m;
}

}  // namespace dufm
