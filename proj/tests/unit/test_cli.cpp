#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "drf/config.hpp"
#include "drf/metrics.hpp"
#include "drf/pipeline.hpp"

using namespace drf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "drf_unit_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return RunConfig::parse(in, "test.ini");
}

std::vector<std::vector<double>> read_rows(const fs::path& p, std::string* header = nullptr) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    if (header) *header = line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

// Tiny pipeline run in its own directory.
const char* kTinyConfig = R"(
[data]
seed = 3
n_tracks = 6
points_per_track = 100
[model]
spatial_depth = 2
bottleneck = 4
hidden = 24
spatial_lengthscale = 0.2
[train]
learning_rate = 0.01
batch_size = 32
epochs = 2
[uq]
members = 2
[tune]
n_init = 2
n_iter = 1
members = 2
grid_n0 = 8
grid_n1 = 8
[predict]
n0 = 6
n1 = 5
times = 0.2,0.5,0.9
)";

}  // namespace

TEST_CASE("config defaults and parsing") {
    const RunConfig d;
    CHECK(d.get_size("model", "bottleneck") == 128);
    CHECK(d.get_size("model", "hidden") == 1000);
    CHECK(d.get_double("train", "learning_rate") == 0.001);
    CHECK(d.get_size("train", "batch_size") == 1024);
    CHECK(d.get_size("uq", "members") == 10);

    const RunConfig c = parse("# comment\n[model]\nhidden = 50\n; other\n[train]\nloss = huber\n");
    CHECK(c.get_size("model", "hidden") == 50);
    CHECK(c.get("train", "loss") == "huber");

    CHECK_THROWS_WITH_AS(parse("[model]\nwidth = 3\n"), doctest::Contains("test.ini:2"), ConfigError);
    CHECK_THROWS_AS(parse("[nope]\n"), ConfigError);
    CHECK_THROWS_AS(parse("hidden = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse("[model]\nhidden\n"), ConfigError);
    CHECK_THROWS_AS(parse("[model]\nhidden = many\n").get_size("model", "hidden"), ConfigError);
    CHECK_THROWS_AS(parse("[model]\nskip_connections = maybe\n").get_bool("model", "skip_connections"),
                    ConfigError);
}

TEST_CASE("overrides") {
    RunConfig c;
    c.apply_override("train.epochs=7");
    CHECK(c.get_size("train", "epochs") == 7);
    CHECK_THROWS_AS(c.apply_override("epochs=7"), ConfigError);
    CHECK_THROWS_AS(c.apply_override("train.nothing=1"), ConfigError);
}

TEST_CASE("resolved config round-trips through text") {
    RunConfig c = parse("[model]\nhidden = 77\n[tune]\nalpha = 0.9\n");
    std::ostringstream out;
    c.write(out);
    std::istringstream in(out.str());
    const RunConfig back = RunConfig::parse(in, "echo");
    std::ostringstream again;
    back.write(again);
    CHECK(again.str() == out.str());
}

TEST_CASE("builders") {
    RunConfig c = parse(
        "[model]\nspatial_kernel = se\nspatial_lengthscale = 0.3\nskip_kernel = matern\nskip_nu = 2.5\n"
        "[train]\nnoise_std = 0.02\nloss = huber\nhuber_delta = 0.2\n");
    const NetworkSpec s = network_spec(c);
    CHECK(s.spatial_kernel == KernelSpec::squared_exponential(0.3));
    CHECK(s.skip_kernel.nu == 2.5);
    CHECK(s.spatial_depth == 2);

    const TrainConfig t = train_config(c, 400);
    CHECK(t.weight_decay == doctest::Approx(0.0004 / 400));
    CHECK(t.loss.kind == LossKind::Huber);
    CHECK(t.loss.huber_delta == 0.2);

    c.set("data", "coords", "lonlat");
    c.set("model", "spatial_kernel", "sphere_matern");
    const NetworkSpec sph = network_spec(c);
    CHECK(sph.space == InputSpace::Sphere);
    CHECK(sph.spatial_kernel.truncation == 30);

    const HyperSpace h = hyper_space(RunConfig{});
    REQUIRE(h.size() == 2);
    CHECK(h.dims[0].name == "model.spatial_lengthscale");
    CHECK(h.dims[0].lower == 0.1);
    CHECK(h.dims[0].upper == 10.0);
    RunConfig tuned;
    apply_hyperparameters(tuned, h, {0.5, 2.0});
    CHECK(tuned.get_double("model", "spatial_lengthscale") == 0.5);
    CHECK(tuned.get_double("model", "temporal_lengthscale") == 2.0);
}

TEST_CASE("missing config file") {
    std::ostringstream log, err;
    const int code = run_command("train", "/nonexistent/run.ini", {}, log, err);
    CHECK(code == kExitConfig);
    CHECK(err.str().find("/nonexistent/run.ini") != std::string::npos);
}

TEST_CASE("exit codes by failure category") {
    const fs::path dir = fresh_dir("codes");
    const fs::path ini = dir / "run.ini";
    std::ofstream(ini) << kTinyConfig;
    std::ostringstream log, err;
    CHECK(run_command("train", ini, {"model.hidden=abc"}, log, err) == kExitConfig);
    CHECK(run_command("bogus", ini, {}, log, err) == kExitConfig);
    // No observations yet.
    CHECK(run_command("train", ini, {"data.workdir=" + (dir / "w").string()}, log, err) == kExitData);
    // A diverging learning rate trips the NaN guard.
    const std::string wd = "data.workdir=" + (dir / "nan").string();
    REQUIRE(run_command("synth", ini, {wd}, log, err) == kExitOk);
    CHECK(run_command("train", ini, {wd, "train.learning_rate=1e300", "train.epochs=3"}, log, err) == kExitNumeric);
}

TEST_CASE("synth, train, predict and eval") {
    const fs::path dir = fresh_dir("pipeline");
    const fs::path ini = dir / "run.ini";
    std::ofstream(ini) << kTinyConfig;
    const std::vector<std::string> ov{"data.workdir=" + (dir / "work").string()};
    std::ostringstream log, err;
    for (const char* cmd : {"synth", "train", "predict", "eval"}) {
        INFO(cmd << ": " << err.str());
        REQUIRE(run_command(cmd, ini, ov, log, err) == kExitOk);
    }
    const fs::path w = dir / "work";
    for (const char* f : {"observations.csv", "truth_grid.csv", "model_00.drf", "model_01.drf", "loss_history_00.csv",
                          "predictions.csv", "metrics.csv", "manifest_synth.txt", "manifest_train.txt",
                          "manifest_predict.txt", "manifest_eval.txt"})
        CHECK(fs::exists(w / f));

    std::string header;
    const auto pred = read_rows(w / "predictions.csv", &header);
    CHECK(header == "x,y,t,mean,variance,predictive_variance");
    CHECK(pred.size() == 6 * 5 * 3);
    for (const auto& r : pred) {
        for (double v : r) CHECK(std::isfinite(v));
        CHECK(r[5] == doctest::Approx(r[4] + 1e-4));
    }

    // Offline recomputation of the grid RMSE from the emitted CSVs.
    const auto truth = read_rows(w / "truth_grid.csv");
    std::vector<double> mu, y;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mu.push_back(pred[i][3]);
        y.push_back(truth[i][3]);
    }
    double reported = NAN;
    std::ifstream m(w / "metrics.csv");
    for (std::string line; std::getline(m, line);)
        if (line.rfind("grid_rmse,", 0) == 0) reported = std::stod(line.substr(10));
    CHECK(std::abs(reported - rmse(mu, y)) < 1e-9);

    std::ifstream manifest(w / "manifest_train.txt");
    std::stringstream text;
    text << manifest.rdbuf();
    CHECK(text.str().find(kVersionTag) != std::string::npos);
    CHECK(text.str().find("hidden = 24") != std::string::npos);
}

TEST_CASE("dropout and variational methods run end to end") {
    for (const char* method : {"dropout", "vi"}) {
        const fs::path dir = fresh_dir(std::string("method_") + method);
        const fs::path ini = dir / "run.ini";
        std::ofstream(ini) << kTinyConfig;
        const std::vector<std::string> ov{"data.workdir=" + (dir / "work").string(), std::string("uq.method=") + method,
                                          "model.dropout=0.1", "uq.n_samples=8"};
        std::ostringstream log, err;
        for (const char* cmd : {"synth", "train", "predict", "eval"}) {
            INFO(method << " " << cmd << ": " << err.str());
            REQUIRE(run_command(cmd, ini, ov, log, err) == kExitOk);
        }
    }
}

TEST_CASE("tune writes a trace and the chosen hyperparameters") {
    const fs::path dir = fresh_dir("tune");
    const fs::path ini = dir / "run.ini";
    std::ofstream(ini) << kTinyConfig;
    const std::vector<std::string> ov{"data.workdir=" + (dir / "work").string(), "tune.alpha=0.5"};
    std::ostringstream log, err;
    REQUIRE(run_command("synth", ini, ov, log, err) == kExitOk);
    REQUIRE(run_command("tune", ini, ov, log, err) == kExitOk);
    std::string header;
    const auto rows = read_rows(dir / "work" / "bo_trace.csv", &header);
    CHECK(header == "iter,model.spatial_lengthscale,model.temporal_lengthscale,objective,incumbent");
    CHECK(rows.size() == 3);
    CHECK(fs::exists(dir / "work" / "best_lambda.txt"));
    CHECK(fs::exists(dir / "work" / "model_00.drf"));
}
