// Full-batch gradient-descent driver: seeded initialization, the GD loop with
// periodic metric logging, a divergence guard, sweep execution, and run
// persistence (manifest.json / metrics.csv / params.json).

#ifndef DUFM_TRAINER_HPP
#define DUFM_TRAINER_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dufm/metrics.hpp"
#include "dufm/model.hpp"
#include "dufm/theory.hpp"

namespace dufm {

inline constexpr const char* kVersion = "dufm 0.1.0";

struct TrainConfig {
    DufmDims dims;
    RegConfig reg;
    double lr = 0.5;
    long steps = 100000;
    long log_every = 100;
    uint64_t seed = 0;
    bool save_params = false;

    void validate() const;
};

struct MetricsRecord {
    long step = 0;
    LossBreakdown loss;
    std::vector<LayerMetrics> layers;
};

struct RunResult {
    double final_loss = 0.0;
    double optimum_gap = 0.0;  // final_loss minus the theoretical optimum
    std::vector<MetricsRecord> history;
    DufmParams params;         // parameters at the final step
    std::string manifest;      // JSON document
};

// Thrown when the loss goes non-finite or exceeds 10x its initial value.
struct DivergenceError : std::runtime_error {
    long step;
    DivergenceError(long s, const std::string& what) : std::runtime_error(what), step(s) {}
};

RunResult train(const TrainConfig& config);

// Cartesian sweep over axes named among width, L, weight_decay, lr, seed.
// Run i gets sub-seed seed XOR mix64(i), so a single-combination sweep
// reproduces train() exactly.
using Sweep = std::map<std::string, std::vector<double>>;
uint64_t mix64(uint64_t x);
TrainConfig apply_sweep_point(TrainConfig base, const Sweep& sweep,
                              const std::vector<size_t>& choice, size_t run_index);
std::vector<RunResult> ablate(const TrainConfig& base, const Sweep& sweep, int jobs = 1);

std::string metrics_csv_header(int layers);
std::string metrics_csv_row(const MetricsRecord& record);

// Writes manifest.json, metrics.csv, and (when configured) params.json.
void write_run(const std::string& dir, const TrainConfig& config, const RunResult& result);

}  // namespace dufm

#endif
