// Command-line front end: train / optimum / construct / verify / ablate.
// Exit codes: 0 success, 1 usage or config error, 2 divergence, 3 regime
// mismatch. Standard output stays machine-readable; diagnostics go to
// standard error, gated by DUFM_LOG={quiet,info,debug}.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dufm/metrics.hpp"
#include "dufm/model.hpp"
#include "dufm/oracles.hpp"
#include "dufm/theory.hpp"
#include "dufm/trainer.hpp"

namespace {

using nlohmann::json;

int log_level() {
    const char* v = std::getenv("DUFM_LOG");
    if (!v) return 0;
    const std::string s = v;
    if (s == "debug") return 2;
    if (s == "info") return 1;
    return 0;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[dufm] " << msg << "\n";
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return doc;
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown config key: " + key);
    }
}

template <typename T>
T require_field(const json& obj, const std::string& key) {
    if (!obj.contains(key)) throw ConfigError("missing config key: " + key);
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key has the wrong type: " + key);
    }
}

std::vector<int> widths_field(const json& obj, int layers) {
    const json& w = obj.at("widths");
    if (w.is_number_integer()) return std::vector<int>(layers, w.get<int>());
    if (w.is_array()) return require_field<std::vector<int>>(obj, "widths");
    throw ConfigError("config key has the wrong type: widths");
}

std::vector<double> lambda_w_field(const json& obj, int layers) {
    const json& l = obj.at("lambda_w");
    if (l.is_number()) return std::vector<double>(layers, l.get<double>());
    if (l.is_array()) return require_field<std::vector<double>>(obj, "lambda_w");
    throw ConfigError("config key has the wrong type: lambda_w");
}

dufm::TrainConfig train_config_from_json(const json& doc, bool allow_sweep) {
    std::vector<std::string> allowed = {"layers", "widths",    "n",    "lambda_h1", "lambda_w",
                                        "lr",     "log_every", "seed", "steps",     "save_params"};
    if (allow_sweep) allowed.push_back("sweep");
    reject_unknown_keys(doc, allowed);

    dufm::TrainConfig config;
    config.dims.layers = require_field<int>(doc, "layers");
    if (!doc.contains("widths")) throw ConfigError("missing config key: widths");
    config.dims.widths = widths_field(doc, config.dims.layers);
    config.dims.samples_per_class = require_field<int>(doc, "n");
    config.reg.lambda_h1 = require_field<double>(doc, "lambda_h1");
    if (!doc.contains("lambda_w")) throw ConfigError("missing config key: lambda_w");
    config.reg.lambda_w = lambda_w_field(doc, config.dims.layers);
    if (doc.contains("lr")) config.lr = require_field<double>(doc, "lr");
    if (doc.contains("steps")) config.steps = require_field<long>(doc, "steps");
    if (doc.contains("log_every")) config.log_every = require_field<long>(doc, "log_every");
    if (doc.contains("seed")) config.seed = require_field<uint64_t>(doc, "seed");
    if (doc.contains("save_params")) config.save_params = require_field<bool>(doc, "save_params");
    try {
        config.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return config;
}

json layer_metrics_json(const std::vector<dufm::LayerMetrics>& layers) {
    auto opt = [](const std::optional<double>& v) {
        return v ? json(*v) : json(nullptr);
    };
    json arr = json::array();
    for (const auto& m : layers) {
        arr.push_back({{"layer", m.layer},
                       {"dnc1_pre", opt(m.dnc1_pre)},
                       {"dnc1_post", opt(m.dnc1_post)},
                       {"dnc2_pre", opt(m.dnc2_pre)},
                       {"dnc2_post", opt(m.dnc2_post)},
                       {"dnc3", m.dnc3}});
    }
    return arr;
}

int cmd_train(const std::string& config_path, const std::string& out_dir, const uint64_t* seed) {
    dufm::TrainConfig config = train_config_from_json(load_json(config_path), false);
    if (seed) config.seed = *seed;
    log_info("training: L=" + std::to_string(config.dims.layers) +
             " steps=" + std::to_string(config.steps));
    const dufm::RunResult result = dufm::train(config);
    dufm::write_run(out_dir + "/run-0", config, result);
    log_info("final loss " + std::to_string(result.final_loss) + ", gap " +
             std::to_string(result.optimum_gap));
    return 0;
}

int cmd_optimum(int layers, int n, double lambda_h, std::vector<double> lambda_w) {
    dufm::DufmDims dims;
    dims.layers = layers;
    dims.widths.assign(std::max(layers, 1), 2);
    dims.samples_per_class = n;
    dims.validate();
    if (lambda_w.size() == 1) lambda_w.assign(layers, lambda_w[0]);
    if (static_cast<int>(lambda_w.size()) != layers)
        throw ConfigError("lambda-w needs 1 or exactly L values");
    dufm::RegConfig reg{lambda_h, std::move(lambda_w)};
    reg.validate(layers);
    std::cout << dufm::optimum_report_to_json(dufm::theoretical_optimum(dims, reg)) << "\n";
    return 0;
}

int cmd_construct(const std::string& config_path, const std::string& out_dir) {
    const json doc = load_json(config_path);
    reject_unknown_keys(doc, {"layers", "widths", "n", "lambda_h1", "lambda_w"});
    dufm::DufmDims dims;
    dims.layers = require_field<int>(doc, "layers");
    if (!doc.contains("widths")) throw ConfigError("missing config key: widths");
    dims.widths = widths_field(doc, dims.layers);
    dims.samples_per_class = require_field<int>(doc, "n");
    dufm::RegConfig reg;
    reg.lambda_h1 = require_field<double>(doc, "lambda_h1");
    if (!doc.contains("lambda_w")) throw ConfigError("missing config key: lambda_w");
    reg.lambda_w = lambda_w_field(doc, dims.layers);
    try {
        dims.validate();
        reg.validate(dims.layers);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    const dufm::OptimumReport opt = dufm::theoretical_optimum(dims, reg);
    if (opt.regime != dufm::Regime::collapse) {
        std::cerr << "error: configuration is in the " << dufm::regime_name(opt.regime)
                  << " regime; the collapsed construction needs the collapse regime\n";
        return 3;
    }

    const dufm::DufmParams params = dufm::construct_collapsed_solution(dims, reg);
    const dufm::LossBreakdown bd = dufm::loss(params, dims, reg);
    const dufm::ForwardTrace trace = dufm::forward(params, dims);
    const auto layers = dufm::layer_metrics(params, trace, dims);

    const double gap = bd.total - opt.optimal_loss;
    const double rel_gap = std::abs(gap) / opt.optimal_loss;
    bool metrics_ok = true;
    for (const auto& m : layers) {
        if (m.layer >= 2 && m.dnc3 > 1e-8) metrics_ok = false;
        if (m.dnc1_post && *m.dnc1_post > 1e-6) metrics_ok = false;
        if (m.layer >= 2 && m.dnc2_post && std::abs(*m.dnc2_post - 1.0) > 1e-6)
            metrics_ok = false;
    }

    std::filesystem::create_directories(out_dir);
    std::ofstream params_out(out_dir + "/params.json");
    params_out << dufm::params_to_json(params, dims) << "\n";
    json report = {{"loss", bd.total},
                   {"optimum", opt.optimal_loss},
                   {"gap", gap},
                   {"relative_gap", rel_gap},
                   {"regime", dufm::regime_name(opt.regime)},
                   {"dnc", layer_metrics_json(layers)}};
    std::ofstream report_out(out_dir + "/report.json");
    report_out << report.dump(2) << "\n";
    std::cout << report.dump(2) << "\n";

    return (rel_gap < 1e-8 && metrics_ok) ? 0 : 1;
}

int cmd_verify(const std::string& lemma, int trials, uint64_t seed, double tol) {
    using Verifier = dufm::VerificationReport (*)(int, uint64_t, double);
    const std::vector<std::pair<std::string, Verifier>> table = {
        {"ridge", dufm::verify_ridge},       {"key", dufm::verify_key_lemma},
        {"rowkkt", dufm::verify_row_kkt},    {"schatten", dufm::verify_schatten},
        {"variational", dufm::verify_variational}, {"sigma", dufm::verify_sigma_opt},
    };

    bool all_passed = true;
    bool matched = false;
    for (const auto& [name, fn] : table) {
        if (lemma != "all" && lemma != name) continue;
        matched = true;
        log_info("verifying " + name);
        const dufm::VerificationReport report = fn(trials, seed, tol);
        std::cout << report.to_json() << "\n";
        all_passed = all_passed && report.passed;
    }
    if (lemma == "all" || lemma == "counterexample") {
        matched = true;
        const dufm::VerificationReport report = dufm::verify_counterexample();
        std::cout << report.to_json() << "\n";
        all_passed = all_passed && report.passed;
    }
    if (!matched) throw ConfigError("unknown lemma name: " + lemma);
    return all_passed ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir, int jobs) {
    const json doc = load_json(config_path);
    if (!doc.contains("sweep")) throw ConfigError("missing config key: sweep");
    const json& sweep_doc = doc.at("sweep");
    if (!sweep_doc.is_object() || sweep_doc.empty())
        throw ConfigError("sweep must be a non-empty object of axis -> value list");
    dufm::Sweep sweep;
    for (const auto& [axis, values] : sweep_doc.items()) {
        try {
            sweep[axis] = values.get<std::vector<double>>();
        } catch (const json::exception&) {
            throw ConfigError("sweep axis must map to a list of numbers: " + axis);
        }
    }
    const dufm::TrainConfig base = train_config_from_json(doc, true);

    std::vector<dufm::RunResult> results;
    try {
        results = dufm::ablate(base, sweep, jobs);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    std::filesystem::create_directories(out_dir);
    std::ofstream index(out_dir + "/index.csv");
    index << "run";
    for (const auto& [axis, values] : sweep) index << "," << axis;
    index << ",final_loss,optimum_gap\n";
    std::vector<size_t> choice(sweep.size(), 0);
    for (size_t i = 0; i < results.size(); ++i) {
        const dufm::TrainConfig config = dufm::apply_sweep_point(base, sweep, choice, i);
        dufm::write_run(out_dir + "/run-" + std::to_string(i), config, results[i]);
        index << i;
        size_t axis_i = 0;
        for (const auto& [axis, values] : sweep) index << "," << values[choice[axis_i++]];
        char buf[64];
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", results[i].final_loss,
                      results[i].optimum_gap);
        index << buf << "\n";
        for (size_t axis = sweep.size(); axis-- > 0;) {
            size_t limit = 0, k = 0;
            for (const auto& [name, values] : sweep)
                if (k++ == axis) limit = values.size();
            if (++choice[axis] < limit) break;
            choice[axis] = 0;
        }
        log_info("run " + std::to_string(i + 1) + "/" + std::to_string(results.size()) + " done");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for the deep unconstrained features model"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    uint64_t seed_override = 0;
    bool have_seed = false;

    auto* train_cmd = app.add_subcommand("train", "run full-batch gradient descent");
    train_cmd->add_option("--config", config_path)->required();
    train_cmd->add_option("--out", out_path)->required();
    train_cmd->add_option("--seed", seed_override)->each([&](const std::string&) {
        have_seed = true;
    });

    int opt_layers = 2, opt_n = 1;
    double opt_lambda_h = 0.0;
    std::vector<double> opt_lambda_w;
    auto* optimum_cmd = app.add_subcommand("optimum", "closed-form global optimum");
    optimum_cmd->add_option("--layers", opt_layers)->required();
    optimum_cmd->add_option("--n", opt_n)->required();
    optimum_cmd->add_option("--lambda-h", opt_lambda_h)->required();
    optimum_cmd->add_option("--lambda-w", opt_lambda_w)->required()->delimiter(',');

    auto* construct_cmd = app.add_subcommand("construct", "explicit collapsed optimum");
    construct_cmd->add_option("--config", config_path)->required();
    construct_cmd->add_option("--out", out_path)->required();

    std::string lemma = "all";
    int trials = 50;
    uint64_t verify_seed = 0;
    double tol = 1e-3;
    auto* verify_cmd = app.add_subcommand("verify", "numerical lemma verification");
    verify_cmd->add_option("--lemma", lemma);
    verify_cmd->add_option("--trials", trials);
    verify_cmd->add_option("--seed", verify_seed);
    verify_cmd->add_option("--tol", tol);

    int jobs = 1;
    auto* ablate_cmd = app.add_subcommand("ablate", "hyperparameter sweep");
    ablate_cmd->add_option("--config", config_path)->required();
    ablate_cmd->add_option("--out", out_path)->required();
    ablate_cmd->add_option("--jobs", jobs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(config_path, out_path, have_seed ? &seed_override : nullptr);
        if (optimum_cmd->parsed())
            return cmd_optimum(opt_layers, opt_n, opt_lambda_h, opt_lambda_w);
        if (construct_cmd->parsed()) return cmd_construct(config_path, out_path);
        if (verify_cmd->parsed()) return cmd_verify(lemma, trials, verify_seed, tol);
        if (ablate_cmd->parsed()) return cmd_ablate(config_path, out_path, jobs);
    } catch (const dufm::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
