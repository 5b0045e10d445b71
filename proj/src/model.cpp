#include "dufm/model.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dufm {

void DufmDims::validate() const {
    if (layers < 2) throw std::invalid_argument("dims: L must be >= 2");
    if (static_cast<int>(widths.size()) != layers)
        throw std::invalid_argument("dims: widths must have L entries");
    for (int d : widths)
        if (d < 2) throw std::invalid_argument("dims: every width must be > 1");
    if (samples_per_class < 1) throw std::invalid_argument("dims: n must be >= 1");
}

void RegConfig::validate(int layers) const {
    if (lambda_h1 <= 0.0) throw std::invalid_argument("reg: lambda_h1 must be positive");
    if (static_cast<int>(lambda_w.size()) != layers)
        throw std::invalid_argument("reg: lambda_w must have L entries");
    for (double l : lambda_w)
        if (l <= 0.0) throw std::invalid_argument("reg: every lambda_w must be positive");
}

double RegConfig::product(const DufmDims& dims) const {
    double p = dims.samples_per_class * lambda_h1;
    for (double l : lambda_w) p *= l;
    return p;
}

Matrix label_matrix(const DufmDims& dims) {
    dims.validate();
    const int n = dims.samples_per_class;
    Matrix y(DufmDims::num_classes, dims.total_samples());
    for (int c = 0; c < DufmDims::num_classes; ++c)
        for (int i = 0; i < n; ++i) y(c, c * n + i) = 1.0;
    return y;
}

void check_shapes(const DufmParams& params, const DufmDims& dims) {
    dims.validate();
    const int L = dims.layers;
    if (static_cast<int>(params.w.size()) != L)
        throw std::invalid_argument("params: expected L weight matrices");
    if (params.h1.rows != dims.widths[0] || params.h1.cols != dims.total_samples())
        throw std::invalid_argument("params: H1 shape mismatch");
    for (int l = 0; l < L; ++l) {
        const int out = l + 1 < L ? dims.widths[l + 1] : DufmDims::num_classes;
        if (params.w[l].rows != out || params.w[l].cols != dims.widths[l])
            throw std::invalid_argument("params: W shape mismatch at layer " + std::to_string(l + 1));
    }
}

ForwardTrace forward(const DufmParams& params, const DufmDims& dims) {
    check_shapes(params, dims);
    const int L = dims.layers;
    ForwardTrace trace;
    trace.pre.reserve(L);
    trace.post.reserve(L);

    trace.pre.push_back(params.h1);
    trace.post.push_back(relu(params.h1));
    // H_2 = W_1 H_1, then H_{l+1} = W_l relu(H_l).
    trace.pre.push_back(multiply(params.w[0], params.h1));
    trace.post.push_back(relu(trace.pre.back()));
    for (int l = 2; l < L; ++l) {
        trace.pre.push_back(multiply(params.w[l - 1], trace.post.back()));
        trace.post.push_back(relu(trace.pre.back()));
    }
    trace.logits = multiply(params.w[L - 1], trace.post.back());
    return trace;
}

LossBreakdown loss(const DufmParams& params, const DufmDims& dims, const RegConfig& reg) {
    reg.validate(dims.layers);
    ForwardTrace trace = forward(params, dims);
    const Matrix y = label_matrix(dims);
    LossBreakdown out;
    out.fit = frobenius_sq(trace.logits - y) / (2.0 * dims.total_samples());
    out.reg_h1 = 0.5 * reg.lambda_h1 * frobenius_sq(params.h1);
    out.reg_w.resize(dims.layers);
    out.total = out.fit + out.reg_h1;
    for (int l = 0; l < dims.layers; ++l) {
        out.reg_w[l] = 0.5 * reg.lambda_w[l] * frobenius_sq(params.w[l]);
        out.total += out.reg_w[l];
    }
    return out;
}

namespace {

// Entrywise product with the ReLU mask of the forward trace.
Matrix apply_mask(const Matrix& grad, const Matrix& pre) {
    Matrix r = grad;
    for (size_t i = 0; i < r.data.size(); ++i)
        if (pre.data[i] <= 0.0) r.data[i] = 0.0;
    return r;
}

}  // namespace

DufmParams gradient(const DufmParams& params, const DufmDims& dims, const RegConfig& reg) {
    reg.validate(dims.layers);
    ForwardTrace trace = forward(params, dims);
    const int L = dims.layers;
    const Matrix y = label_matrix(dims);

    DufmParams grad;
    grad.w.resize(L);

    // d fit / d logits
    Matrix delta = (1.0 / dims.total_samples()) * (trace.logits - y);

    grad.w[L - 1] = multiply(delta, transpose(trace.post[L - 1])) + reg.lambda_w[L - 1] * params.w[L - 1];
    delta = apply_mask(multiply(transpose(params.w[L - 1]), delta), trace.pre[L - 1]);

    for (int l = L - 2; l >= 1; --l) {
        grad.w[l] = multiply(delta, transpose(trace.post[l])) + reg.lambda_w[l] * params.w[l];
        delta = apply_mask(multiply(transpose(params.w[l]), delta), trace.pre[l]);
    }

    // First layer sees H1 directly (no activation before W_1).
    grad.w[0] = multiply(delta, transpose(params.h1)) + reg.lambda_w[0] * params.w[0];
    grad.h1 = multiply(transpose(params.w[0]), delta) + reg.lambda_h1 * params.h1;
    return grad;
}

DufmParams init_params(const DufmDims& dims, Rng& rng) {
    dims.validate();
    DufmParams p;
    p.h1 = gaussian(rng, dims.widths[0], dims.total_samples(), 1.0);
    p.w.resize(dims.layers);
    for (int l = 0; l < dims.layers; ++l) {
        const int out = l + 1 < dims.layers ? dims.widths[l + 1] : DufmDims::num_classes;
        p.w[l] = gaussian(rng, out, dims.widths[l], 1.0 / std::sqrt(dims.widths[l]));
    }
    return p;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols; ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const int rows = static_cast<int>(j.size());
    if (rows == 0) throw std::invalid_argument("matrix json: empty");
    const int cols = static_cast<int>(j[0].size());
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(j[i].size()) != cols)
            throw std::invalid_argument("matrix json: ragged rows");
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

}  // namespace

std::string params_to_json(const DufmParams& params, const DufmDims& dims, const uint64_t* seed) {
    nlohmann::json doc;
    doc["dims"] = {{"L", dims.layers},
                   {"d", dims.widths},
                   {"K", DufmDims::num_classes},
                   {"n", dims.samples_per_class}};
    if (seed) doc["seed"] = *seed;
    nlohmann::json mats;
    mats["H1"] = matrix_to_json(params.h1);
    nlohmann::json ws = nlohmann::json::array();
    for (const Matrix& w : params.w) ws.push_back(matrix_to_json(w));
    mats["W"] = std::move(ws);
    doc["matrices"] = std::move(mats);
    return doc.dump(2);
}

ParsedParams params_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    ParsedParams out;
    out.dims.layers = doc.at("dims").at("L").get<int>();
    out.dims.widths = doc.at("dims").at("d").get<std::vector<int>>();
    out.dims.samples_per_class = doc.at("dims").at("n").get<int>();
    if (doc.at("dims").at("K").get<int>() != DufmDims::num_classes)
        throw std::invalid_argument("params json: K must be 2");
    if (doc.contains("seed")) {
        out.has_seed = true;
        out.seed = doc.at("seed").get<uint64_t>();
    }
    out.params.h1 = matrix_from_json(doc.at("matrices").at("H1"));
    for (const auto& w : doc.at("matrices").at("W"))
        out.params.w.push_back(matrix_from_json(w));
    check_shapes(out.params, out.dims);
    return out;
}

}  // namespace dufm
