// Dense real-matrix kernels: products, transposes, symmetric eigendecomposition,
// singular values, pseudo-inverse, matrix norms, ReLU, and seeded Gaussian sampling.
//
// All matrices are row-major doubles. The solvers target small problems
// (at most ~1000 on a side); the eigen-solver is a cyclic Jacobi iteration
// on the smaller Gram matrix, which is robust and dependency-free.

#ifndef DUFM_MATRIX_HPP
#define DUFM_MATRIX_HPP

#include <cstdint>
#include <vector>

namespace dufm {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major, length rows*cols

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d);

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    static Matrix identity(int n);
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix relu(const Matrix& m);

double frobenius_sq(const Matrix& m);
double frobenius_norm(const Matrix& m);
double dot(const Matrix& a, const Matrix& b);

// Symmetric eigendecomposition by cyclic Jacobi rotations.
// Eigenvalues sorted non-increasingly; eigenvectors are the columns of
// `vectors`, matching the eigenvalue order.
struct EigResult {
    std::vector<double> values;
    Matrix vectors;
};
EigResult symmetric_eig(const Matrix& sym);

// Thin SVD computed from the eigendecomposition of the smaller Gram matrix.
// U: rows x k, V: cols x k, k = min(rows, cols); singular values non-increasing.
struct SvdResult {
    std::vector<double> singular_values;
    Matrix u;
    Matrix v;
};
SvdResult thin_svd(const Matrix& m);

std::vector<double> singular_values(const Matrix& m);

double nuclear_norm(const Matrix& m);
// Value of ||M||_{S_{2/L}}^{2/L}: sum of singular values raised to 2/L. L >= 2.
double schatten_power(const Matrix& m, int power_l);

// Moore-Penrose pseudo-inverse; singular values below rel_tol * s_max are
// treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rel_tol = 1e-10);

// Deterministic, platform-independent PRNG: splitmix64 state stream with
// a Box-Muller transform for normals.
class Rng {
public:
    static constexpr const char* kAlgorithm = "splitmix64+box-muller";

    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    double normal();                        // standard normal
    int uniform_int(int lo, int hi);        // inclusive bounds

private:
    uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

Matrix gaussian(Rng& rng, int rows, int cols, double std);

}  // namespace dufm

#endif
