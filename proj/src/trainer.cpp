#include "dufm/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace dufm {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt17(*v) : std::string("degenerate");
}

MetricsRecord record_at(long step, const DufmParams& params, const DufmDims& dims,
                        const RegConfig& reg) {
    MetricsRecord rec;
    rec.step = step;
    rec.loss = loss(params, dims, reg);
    const ForwardTrace trace = forward(params, dims);
    rec.layers = layer_metrics(params, trace, dims);
    return rec;
}

std::string build_manifest(const TrainConfig& config, const OptimumReport& opt,
                           double final_loss, double wall_seconds) {
    nlohmann::json doc;
    doc["config"] = {
        {"layers", config.dims.layers},
        {"widths", config.dims.widths},
        {"n", config.dims.samples_per_class},
        {"lambda_h1", config.reg.lambda_h1},
        {"lambda_w", config.reg.lambda_w},
        {"lr", config.lr},
        {"steps", config.steps},
        {"log_every", config.log_every},
        {"seed", config.seed},
        {"save_params", config.save_params},
    };
    doc["prng"] = Rng::kAlgorithm;
    doc["sub_seed_rule"] = "seed XOR splitmix64-mix(run index)";
    doc["version"] = kVersion;
    doc["wall_clock_seconds"] = wall_seconds;
    doc["final_loss"] = final_loss;
    doc["optimum"] = opt.optimal_loss;
    doc["optimum_gap"] = final_loss - opt.optimal_loss;
    doc["regime"] = regime_name(opt.regime);
    return doc.dump(2);
}

}  // namespace

void TrainConfig::validate() const {
    dims.validate();
    reg.validate(dims.layers);
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
    if (steps < 1) throw std::invalid_argument("steps must be positive");
    if (log_every < 1 || log_every > steps)
        throw std::invalid_argument("log_every must be in [1, steps]");
}

RunResult train(const TrainConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();

    Rng rng(config.seed);
    DufmParams params = init_params(config.dims, rng);
    const double initial_total = loss(params, config.dims, config.reg).total;

    RunResult result;
    result.history.push_back(record_at(0, params, config.dims, config.reg));

    for (long step = 1; step <= config.steps; ++step) {
        const DufmParams grad = gradient(params, config.dims, config.reg);
        params.h1 = params.h1 - config.lr * grad.h1;
        for (size_t l = 0; l < params.w.size(); ++l)
            params.w[l] = params.w[l] - config.lr * grad.w[l];

        if (step % config.log_every == 0 || step == config.steps) {
            MetricsRecord rec = record_at(step, params, config.dims, config.reg);
            if (!std::isfinite(rec.loss.total))
                throw DivergenceError(step, "loss is not finite at step " + std::to_string(step));
            if (rec.loss.total > 10.0 * initial_total)
                throw DivergenceError(step, "loss exceeded 10x its initial value at step " +
                                                std::to_string(step));
            result.history.push_back(std::move(rec));
        }
    }

    result.final_loss = result.history.back().loss.total;
    const OptimumReport opt = theoretical_optimum(config.dims, config.reg);
    result.optimum_gap = result.final_loss - opt.optimal_loss;
    result.params = std::move(params);

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.manifest = build_manifest(config, opt, result.final_loss, wall);
    return result;
}

uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

TrainConfig apply_sweep_point(TrainConfig base, const Sweep& sweep,
                              const std::vector<size_t>& choice, size_t run_index) {
    auto value_of = [&](const std::string& axis) -> const double* {
        size_t i = 0;
        for (const auto& [name, values] : sweep) {
            if (name == axis) return &values[choice[i]];
            ++i;
        }
        return nullptr;
    };

    // Structural axes first so width/regularization broadcasts see the final L.
    if (const double* v = value_of("L")) {
        base.dims.layers = static_cast<int>(*v);
        base.dims.widths.assign(base.dims.layers,
                                base.dims.widths.empty() ? 2 : base.dims.widths[0]);
        base.reg.lambda_w.assign(base.dims.layers,
                                 base.reg.lambda_w.empty() ? 0.0 : base.reg.lambda_w[0]);
    }
    if (const double* v = value_of("width"))
        base.dims.widths.assign(base.dims.layers, static_cast<int>(*v));
    if (const double* v = value_of("weight_decay")) {
        base.reg.lambda_h1 = *v;
        base.reg.lambda_w.assign(base.dims.layers, *v);
    }
    if (const double* v = value_of("lr")) base.lr = *v;
    if (const double* v = value_of("seed")) base.seed = static_cast<uint64_t>(*v);

    base.seed ^= mix64(run_index);
    return base;
}

std::vector<RunResult> ablate(const TrainConfig& base, const Sweep& sweep, int jobs) {
    if (sweep.empty()) throw std::invalid_argument("sweep must name at least one axis");
    static const std::vector<std::string> kAxes = {"L", "lr", "seed", "weight_decay", "width"};
    size_t combos = 1;
    for (const auto& [name, values] : sweep) {
        if (std::find(kAxes.begin(), kAxes.end(), name) == kAxes.end())
            throw std::invalid_argument("unknown sweep axis: " + name);
        if (values.empty()) throw std::invalid_argument("sweep axis " + name + " is empty");
        combos *= values.size();
    }

    std::vector<TrainConfig> configs;
    configs.reserve(combos);
    std::vector<size_t> choice(sweep.size(), 0);
    for (size_t index = 0; index < combos; ++index) {
        configs.push_back(apply_sweep_point(base, sweep, choice, index));
        for (size_t axis = sweep.size(); axis-- > 0;) {
            size_t limit = 0, i = 0;
            for (const auto& [name, values] : sweep)
                if (i++ == axis) limit = values.size();
            if (++choice[axis] < limit) break;
            choice[axis] = 0;
        }
    }

    std::vector<RunResult> results(combos);
    std::vector<std::exception_ptr> errors(combos);
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < combos; i = next.fetch_add(1)) {
            try {
                results[i] = train(configs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(combos)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

std::string metrics_csv_header(int layers) {
    std::ostringstream out;
    out << "step,total,fit,reg_h1";
    for (int l = 1; l <= layers; ++l) out << ",reg_w_" << l;
    for (const char* name : {"dnc1_pre_", "dnc1_post_", "dnc2_pre_", "dnc2_post_", "dnc3_"})
        for (int l = 1; l <= layers; ++l) out << "," << name << l;
    return out.str();
}

std::string metrics_csv_row(const MetricsRecord& record) {
    std::ostringstream out;
    out << record.step << "," << fmt17(record.loss.total) << "," << fmt17(record.loss.fit) << ","
        << fmt17(record.loss.reg_h1);
    for (double r : record.loss.reg_w) out << "," << fmt17(r);
    for (const auto& m : record.layers) out << "," << fmt_opt(m.dnc1_pre);
    for (const auto& m : record.layers) out << "," << fmt_opt(m.dnc1_post);
    for (const auto& m : record.layers) out << "," << fmt_opt(m.dnc2_pre);
    for (const auto& m : record.layers) out << "," << fmt_opt(m.dnc2_post);
    for (const auto& m : record.layers) out << "," << fmt17(m.dnc3);
    return out.str();
}

void write_run(const std::string& dir, const TrainConfig& config, const RunResult& result) {
    std::filesystem::create_directories(dir);

    std::ofstream manifest(dir + "/manifest.json");
    manifest << result.manifest << "\n";

    std::ofstream csv(dir + "/metrics.csv");
    csv << metrics_csv_header(config.dims.layers) << "\n";
    for (const auto& rec : result.history) csv << metrics_csv_row(rec) << "\n";

    if (config.save_params) {
        std::ofstream params(dir + "/params.json");
        params << params_to_json(result.params, config.dims, &config.seed) << "\n";
    }
}

}  // namespace dufm
