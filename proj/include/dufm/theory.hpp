// Closed-form machinery for the binary DUFM global optimum: the collapse
// threshold, the per-lemma optimal values the objective reduces to, the
// q-parametrized singular-value profile, the optimal-value calculator, and an
// explicit constructor of a collapsed optimal solution.
//
// Throughout, the n-sample problem is reduced to n = 1 with the effective
// first-layer regularization lambda_h1' = n * lambda_h1.

#ifndef DUFM_THEORY_HPP
#define DUFM_THEORY_HPP

#include <optional>
#include <string>
#include <vector>

#include "dufm/matrix.hpp"
#include "dufm/model.hpp"

namespace dufm {

struct SpectrumPair {
    double s1 = 0.0;
    double s2 = 0.0;  // s1 >= s2 >= 0
};

enum class Regime { collapse, boundary, zero };
std::string regime_name(Regime r);

struct OptimumReport {
    double threshold = 0.0;          // (L-1)^{L-1} / (2^{L+1} L^{2L})
    double product = 0.0;            // n * lambda_h1 * prod lambda_w
    Regime regime = Regime::zero;
    double q_star = 0.0;             // for L = 2 this is y = sqrt(x2)
    std::vector<double> x;           // squared singular values x_2 .. x_L
    double optimal_loss = 0.0;
};

// Collapse threshold for depth L; exact integer arithmetic where it fits.
double dnc_threshold(int layers);

Regime regime(const DufmDims& dims, const RegConfig& reg);

// Conditionally optimal last-layer value given the spectrum of relu(H_L):
// lambda/(2(s1^2+2lambda)) + lambda/(2(s2^2+2lambda)).
double ridge_value(const SpectrumPair& s, double lambda_wl);

// The ridge-optimal classifier W_L = A^T (A A^T + 2 lambda I)^{-1} for
// A = relu(H_L).
Matrix ridge_classifier(const Matrix& activations, double lambda_wl);

// Minimal ||W||_F^2 mapping a matrix of spectrum `given` onto spectrum
// `target` through relu: target.s1^2/given.s1^2 + target.s2^2/given.s2^2,
// with 0/0 := 0. Empty optional when rank(target) > rank(given).
std::optional<double> key_lemma_value(const SpectrumPair& target, const SpectrumPair& given);

// Minimal ||H||_{S_{2/L}}^{2/L} over H with relu(H) of the given spectrum:
// (s1+s2)^{2/L}.
double schatten_min_value(const SpectrumPair& s, int layers);

// Variational form of the nuclear norm: min over A B = C of
// lambda_a/2 ||A||^2 + lambda_b/2 ||B||^2 = sqrt(lambda_a lambda_b) ||C||_*.
double variational_min_value(const Matrix& c, double lambda_a, double lambda_b);
std::pair<Matrix, Matrix> variational_factors(const Matrix& c, double lambda_a, double lambda_b,
                                              int inner_dim);

// Squared singular values x_2 .. x_L of the stationary family at ratio
// q = x_L / x_{L-1}. Requires L >= 3; uses lambda_h1' = n * lambda_h1.
std::vector<double> singular_profile(double q, const DufmDims& dims, const RegConfig& reg);

OptimumReport theoretical_optimum(const DufmDims& dims, const RegConfig& reg);

// Explicit collapsed global optimum; rejects zero/boundary regimes.
DufmParams construct_collapsed_solution(const DufmDims& dims, const RegConfig& reg);

std::string optimum_report_to_json(const OptimumReport& report);

}  // namespace dufm

#endif
