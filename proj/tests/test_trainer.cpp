#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dufm/trainer.hpp"

using namespace dufm;

namespace {

TrainConfig small_config() {
    TrainConfig config;
    config.dims.layers = 2;
    config.dims.widths = {4, 4};
    config.dims.samples_per_class = 2;
    config.reg.lambda_h1 = 1e-3;
    config.reg.lambda_w = {1e-3, 1e-3};
    config.lr = 0.1;
    config.steps = 200;
    config.log_every = 50;
    config.seed = 5;
    return config;
}

}  // namespace

TEST_CASE("config validation rejects bad fields") {
    TrainConfig config = small_config();
    config.lr = -1.0;
    CHECK_THROWS(config.validate());
    config = small_config();
    config.log_every = 1000;
    CHECK_THROWS(config.validate());
    config = small_config();
    config.steps = 0;
    CHECK_THROWS(config.validate());
}

TEST_CASE("zero learning rate leaves the initial loss untouched") {
    TrainConfig config = small_config();
    config.lr = 0.0;
    const RunResult result = train(config);
    CHECK(result.final_loss == result.history.front().loss.total);
    CHECK(result.history.size() == 200 / 50 + 1);
}

TEST_CASE("training is bitwise deterministic in the seed") {
    const TrainConfig config = small_config();
    const RunResult a = train(config);
    const RunResult b = train(config);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i)
        CHECK(a.history[i].loss.total == b.history[i].loss.total);
    CHECK(a.params.h1.data == b.params.h1.data);

    TrainConfig other = config;
    other.seed = 6;
    CHECK(train(other).final_loss != a.final_loss);
}

TEST_CASE("logged loss is non-increasing at a small learning rate") {
    TrainConfig config = small_config();
    config.lr = 1e-3;
    config.steps = 2000;
    config.log_every = 100;
    const RunResult result = train(config);
    for (size_t i = 1; i < result.history.size(); ++i)
        CHECK(result.history[i].loss.total <=
              result.history[i - 1].loss.total + 1e-9);
}

TEST_CASE("above-threshold training decays toward the constant optimum") {
    TrainConfig config = small_config();
    config.reg.lambda_h1 = 0.3;
    config.reg.lambda_w = {0.3, 0.3};
    config.lr = 0.3;
    config.steps = 3000;
    config.log_every = 3000;
    const RunResult result = train(config);
    CHECK(std::abs(result.final_loss - 0.5) < 1e-3);
    CHECK(std::abs(result.optimum_gap) < 1e-3);
}

TEST_CASE("divergent runs abort naming the step") {
    TrainConfig config = small_config();
    config.dims.widths = {64, 64};
    config.lr = 50.0;
    config.steps = 500;
    config.log_every = 1;
    try {
        train(config);
        FAIL("expected a divergence abort");
    } catch (const DivergenceError& e) {
        CHECK(e.step >= 1);
        CHECK(std::string(e.what()).find(std::to_string(e.step)) != std::string::npos);
    }
}

TEST_CASE("logged totals match a recomputation from the saved parameters") {
    TrainConfig config = small_config();
    config.save_params = true;
    const RunResult result = train(config);
    const double recomputed = loss(result.params, config.dims, config.reg).total;
    CHECK(recomputed == doctest::Approx(result.history.back().loss.total).epsilon(1e-10));
}

TEST_CASE("run index mixing keeps run zero at the base seed") {
    CHECK(mix64(0) == 0);
    CHECK(mix64(1) != 1);
    CHECK(mix64(1) != mix64(2));
}

TEST_CASE("a single-point sweep reproduces a plain training run") {
    const TrainConfig base = small_config();
    const Sweep sweep = {{"lr", {0.1}}};
    const std::vector<RunResult> runs = ablate(base, sweep, 1);
    REQUIRE(runs.size() == 1);
    const RunResult direct = train(base);
    CHECK(runs[0].final_loss == direct.final_loss);
    CHECK(runs[0].params.h1.data == direct.params.h1.data);
}

TEST_CASE("sweeps enumerate the cartesian product with distinct sub-seeds") {
    TrainConfig base = small_config();
    base.steps = 10;
    base.log_every = 10;
    const Sweep sweep = {{"width", {2, 3}}, {"seed", {1, 2, 3}}};
    const std::vector<RunResult> runs = ablate(base, sweep, 1);
    REQUIRE(runs.size() == 6);
    for (size_t i = 0; i < runs.size(); ++i)
        for (size_t j = i + 1; j < runs.size(); ++j)
            CHECK(runs[i].final_loss != runs[j].final_loss);
    CHECK_THROWS(ablate(base, Sweep{}, 1));
    CHECK_THROWS(ablate(base, Sweep{{"depth", {2}}}, 1));
}

TEST_CASE("sweep points apply structural axes before broadcasts") {
    TrainConfig base = small_config();
    const Sweep sweep = {{"L", {3}}, {"weight_decay", {2e-3}}, {"width", {5}}};
    const TrainConfig point = apply_sweep_point(base, sweep, {0, 0, 0}, 0);
    CHECK(point.dims.layers == 3);
    CHECK(point.dims.widths == std::vector<int>{5, 5, 5});
    CHECK(point.reg.lambda_w == std::vector<double>{2e-3, 2e-3, 2e-3});
    CHECK(point.reg.lambda_h1 == 2e-3);
    CHECK(point.seed == base.seed);  // run index 0 keeps the base seed
}

TEST_CASE("csv header and rows have the documented layout") {
    CHECK(metrics_csv_header(2) ==
          "step,total,fit,reg_h1,reg_w_1,reg_w_2,dnc1_pre_1,dnc1_pre_2,dnc1_post_1,"
          "dnc1_post_2,dnc2_pre_1,dnc2_pre_2,dnc2_post_1,dnc2_post_2,dnc3_1,dnc3_2");

    MetricsRecord rec;
    rec.step = 7;
    rec.loss.total = 0.125;
    rec.loss.fit = 0.0625;
    rec.loss.reg_h1 = 0.03125;
    rec.loss.reg_w = {0.015625, 0.015625};
    rec.layers.resize(2);
    rec.layers[0].layer = 1;
    rec.layers[1].layer = 2;
    rec.layers[1].dnc1_pre = 0.25;  // everything else stays degenerate/zero
    const std::string row = metrics_csv_row(rec);
    CHECK(row.find("7,0.125,0.0625,") == 0);
    CHECK(row.find("degenerate") != std::string::npos);
    const std::string header = metrics_csv_header(2);
    CHECK(std::count(row.begin(), row.end(), ',') ==
          std::count(header.begin(), header.end(), ','));
}

TEST_CASE("run persistence writes manifest, metrics, and parameters") {
    const std::string dir = (std::filesystem::temp_directory_path() / "dufm-run-test").string();
    std::filesystem::remove_all(dir);
    TrainConfig config = small_config();
    config.save_params = true;
    const RunResult result = train(config);
    write_run(dir, config, result);

    const nlohmann::json manifest =
        nlohmann::json::parse(std::ifstream(dir + "/manifest.json"));
    CHECK(manifest.at("config").at("seed") == 5);
    CHECK(manifest.at("prng") == std::string(Rng::kAlgorithm));
    CHECK(manifest.at("final_loss").get<double>() == result.final_loss);
    CHECK(manifest.at("regime").is_string());
    CHECK(manifest.at("version").is_string());
    CHECK(manifest.at("wall_clock_seconds").get<double>() >= 0.0);

    std::ifstream csv(dir + "/metrics.csv");
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == static_cast<int>(result.history.size()) + 1);

    const ParsedParams parsed = [&] {
        std::ifstream in(dir + "/params.json");
        std::stringstream buf;
        buf << in.rdbuf();
        return params_from_json(buf.str());
    }();
    CHECK(parsed.params.h1.data == result.params.h1.data);
    std::filesystem::remove_all(dir);
}
