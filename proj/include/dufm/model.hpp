// The L-layer deep unconstrained features model: first-layer features H1 are
// free optimization variables followed by L fully-connected ReLU layers,
// trained with MSE against one-hot labels and Frobenius regularization on
// every variable.

#ifndef DUFM_MODEL_HPP
#define DUFM_MODEL_HPP

#include <string>
#include <vector>

#include "dufm/matrix.hpp"

namespace dufm {

struct DufmDims {
    int layers = 2;              // L
    std::vector<int> widths;     // d_1 .. d_L, each > 1
    static constexpr int num_classes = 2;  // K
    int samples_per_class = 1;   // n

    int total_samples() const { return num_classes * samples_per_class; }
    void validate() const;
};

struct RegConfig {
    double lambda_h1 = 0.0;
    std::vector<double> lambda_w;  // length L, all strictly positive

    void validate(int layers) const;
    double product(const DufmDims& dims) const;  // n * lambda_h1 * prod lambda_w
};

struct DufmParams {
    Matrix h1;                 // d_1 x N
    std::vector<Matrix> w;     // w[l-1] is W_l: d_{l+1} x d_l, K x d_L for l = L
};

struct ForwardTrace {
    // pre[l-1] is H_l; post[l-1] is relu(H_l). post[0] is kept for metric
    // reporting only; the forward chain applies relu starting at H_2.
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
    Matrix logits;             // K x N
};

struct LossBreakdown {
    double total = 0.0;
    double fit = 0.0;
    double reg_h1 = 0.0;
    std::vector<double> reg_w;
};

Matrix label_matrix(const DufmDims& dims);

void check_shapes(const DufmParams& params, const DufmDims& dims);

ForwardTrace forward(const DufmParams& params, const DufmDims& dims);

LossBreakdown loss(const DufmParams& params, const DufmDims& dims, const RegConfig& reg);

// Analytic gradient of the total loss via backpropagation. ReLU subgradient
// at 0 is taken as 0, so the all-zero point is stationary.
DufmParams gradient(const DufmParams& params, const DufmDims& dims, const RegConfig& reg);

// Training initialization: W_l entries i.i.d. N(0, 1/d_l) (fan-in scaling),
// H1 entries i.i.d. standard normal. Sampling order: H1, then W_1 .. W_L.
DufmParams init_params(const DufmDims& dims, Rng& rng);

// JSON (de)serialization of the parameter document
// {dims, seed?, matrices as nested row-major arrays}.
std::string params_to_json(const DufmParams& params, const DufmDims& dims,
                           const uint64_t* seed = nullptr);
struct ParsedParams {
    DufmDims dims;
    DufmParams params;
    bool has_seed = false;
    uint64_t seed = 0;
};
ParsedParams params_from_json(const std::string& text);

}  // namespace dufm

#endif
