#include "drf/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "drf/hyperopt.hpp"
#include "drf/metrics.hpp"
#include "drf/serialize.hpp"
#include "drf/simd/kernels.hpp"

namespace drf {
namespace fs = std::filesystem;

namespace {

constexpr const char* kBestLambdaFile = "best_lambda.txt";

std::string member_file(const char* stem, std::size_t j, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%02zu%s", stem, j, ext);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    return out;
}

void write_manifest(const fs::path& path, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ofstream out = open_out(path);
    out << "# run manifest\n";
    out << "version = " << kVersionTag << '\n';
    out << "command = " << command << '\n';
    out << "simd = " << simd::isa_name(simd::active_isa()) << '\n';
    for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
    out << '\n';
    cfg.write(out);
}

void write_history(const fs::path& path, const std::vector<double>& history) {
    std::ofstream out = open_out(path);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < history.size(); ++e) out << e + 1 << ',' << format_double(history[e]) << '\n';
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path, const std::string& header_a,
                                                  const std::string& header_b, bool& second_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == header_a) {
        second_header = false;
    } else if (line == header_b) {
        second_header = true;
    } else {
        throw DataError(path.string() + ":1: expected header \"" + header_a + "\" or \"" + header_b + "\"");
    }
    const std::size_t cols = static_cast<std::size_t>(std::count(header_a.begin(), header_a.end(), ',')) + 1;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        const char* p = line.data();
        const char* end = p + line.size();
        while (true) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            const auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": cannot parse \"" +
                                std::string(p, comma) + "\"");
            }
            row.push_back(v);
            if (comma == end) break;
            p = comma + 1;
        }
        if (row.size() != cols) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                            " columns");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::pair<std::string, std::string>> normalization_entries(const Normalization& n) {
    return {{"norm.x_offset", format_double(n.x_offset)}, {"norm.x_scale", format_double(n.x_scale)},
            {"norm.y_offset", format_double(n.y_offset)}, {"norm.y_scale", format_double(n.y_scale)},
            {"norm.t_offset", format_double(n.t_offset)}, {"norm.t_scale", format_double(n.t_scale)}};
}

TrainingSet training_set(const Dataset& d, const Normalization& norm) {
    if (d.size() == 0) throw DataError("a data split is empty; use more observations or other split ratios");
    return to_training_set(d, norm);
}

const std::string& uq_method(const RunConfig& cfg) {
    const std::string& m = cfg.get("uq", "method");
    if (m != "ensemble" && m != "dropout" && m != "vi") {
        throw ConfigError("uq.method: expected ensemble, dropout or vi, got \"" + m + "\"");
    }
    return m;
}

struct TrainOutput {
    Ensemble ensemble;                   // ensemble and dropout methods
    std::optional<DrfVIResult> vi;       // vi method
    std::vector<std::vector<double>> histories;
};

TrainOutput fit_models(const RunConfig& cfg, const TrainingSet& ts) {
    const std::string& method = uq_method(cfg);
    const NetworkSpec spec = network_spec(cfg);
    const TrainConfig tc = train_config(cfg, ts.size());
    TrainOutput out;
    if (method == "ensemble") {
        const std::size_t J = cfg.get_size("uq", "members");
        if (J == 0) throw ConfigError("uq.members must be at least 1");
        auto trained = train_ensemble(spec, ts, tc, J, tc.seed, std::max<std::size_t>(1, cfg.get_size("train", "threads")));
        out.ensemble = std::move(trained.ensemble);
        out.histories = std::move(trained.histories);
    } else if (method == "dropout") {
        if (!(spec.dropout_rate > 0.0)) throw ConfigError("uq.method = dropout needs model.dropout > 0");
        auto trained = train_ensemble(spec, ts, tc, 1, tc.seed, 1);
        out.ensemble = std::move(trained.ensemble);
        out.histories = std::move(trained.histories);
    } else {
        VIConfig vi;
        vi.n_samples = std::max<std::size_t>(1, cfg.get_size("uq", "vi_samples"));
        vi.init_log_variance = cfg.get_double("uq", "vi_init_log_variance");
        out.vi = train_vi(spec, ts, tc, vi);
        out.histories = {out.vi->history};
    }
    return out;
}

void apply_tuned_file(RunConfig& cfg, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        const std::string key = trim(line.substr(0, eq));
        const auto dot = key.find('.');
        if (dot == std::string::npos) continue;
        cfg.set(key.substr(0, dot), key.substr(dot + 1), trim(line.substr(eq + 1)),
                path.string() + ":" + std::to_string(lineno));
    }
}

std::vector<double> predict_times(const RunConfig& cfg) {
    if (cfg.get("predict", "times") == "auto") {
        return {0.5 * (cfg.get_double("data", "t0") + cfg.get_double("data", "t1"))};
    }
    auto t = cfg.get_doubles("predict", "times");
    if (t.empty()) throw ConfigError("predict.times: needs at least one time or auto");
    return t;
}

// Trains and writes model files, histories and the train manifest.
void train_and_save(const RunConfig& cfg, std::ostream& log, const std::string& command) {
    const Splits s = load_splits(cfg);
    const Normalization norm = run_normalization(cfg);
    const TrainingSet ts = training_set(s.train, norm);
    log << command << ": training on " << ts.size() << " observations\n";
    const TrainOutput out = fit_models(cfg, ts);
    const fs::path dir = workdir(cfg);
    std::size_t count = 0;
    if (out.vi) {
        save_model(dir / member_file("model", 0, ".drf"), out.vi->model_template, &out.vi->posterior.log_variance);
        count = 1;
    } else {
        for (std::size_t j = 0; j < out.ensemble.size(); ++j) {
            save_model(dir / member_file("model", j, ".drf"), out.ensemble.members[j]);
        }
        count = out.ensemble.size();
    }
    for (std::size_t j = 0; j < out.histories.size(); ++j) {
        write_history(dir / member_file("loss_history", j, ".csv"), out.histories[j]);
        if (!out.histories[j].empty()) {
            log << command << ": model " << j << " final loss " << format_double(out.histories[j].back()) << '\n';
        }
    }
    auto extra = normalization_entries(norm);
    extra.push_back({"models", std::to_string(count)});
    extra.push_back({"n_train", std::to_string(s.train.size())});
    extra.push_back({"n_validation", std::to_string(s.validation.size())});
    extra.push_back({"n_test", std::to_string(s.test.size())});
    write_manifest(dir / "manifest_train.txt", command, cfg, extra);
}

}  // namespace

fs::path workdir(const RunConfig& cfg) {
    const fs::path dir = cfg.get("data", "workdir");
    if (dir.empty()) throw ConfigError("data.workdir is empty");
    return dir;
}

RunConfig resolve_tuned(const RunConfig& cfg) {
    RunConfig out = cfg;
    const fs::path tuned = workdir(cfg) / kBestLambdaFile;
    if (cfg.get_bool("train", "use_tuned") && fs::exists(tuned)) apply_tuned_file(out, tuned);
    return out;
}

std::vector<TrackPoint> prediction_grid(const RunConfig& cfg) {
    const Domain dom = data_domain(cfg);
    const std::size_t n0 = cfg.get_size("predict", "n0");
    const std::size_t n1 = cfg.get_size("predict", "n1");
    if (n0 < 2 || n1 < 2) throw ConfigError("predict.n0 and predict.n1 must be at least 2");
    std::vector<TrackPoint> pts;
    pts.reserve(n0 * n1);
    for (double t : predict_times(cfg)) {
        for (std::size_t j = 0; j < n1; ++j) {
            for (std::size_t i = 0; i < n0; ++i) {
                const double fi = static_cast<double>(i), fj = static_cast<double>(j);
                if (dom.kind == CoordKind::Planar) {
                    pts.push_back({dom.x0 + (dom.x1 - dom.x0) * fi / static_cast<double>(n0 - 1),
                                   dom.y0 + (dom.y1 - dom.y0) * fj / static_cast<double>(n1 - 1), t});
                } else {
                    pts.push_back({-180.0 + 360.0 * fi / static_cast<double>(n0),
                                   -90.0 + 180.0 * fj / static_cast<double>(n1 - 1), t});
                }
            }
        }
    }
    return pts;
}

Splits load_splits(const RunConfig& cfg) {
    Dataset d = read_csv(workdir(cfg) / cfg.get("data", "observations"));
    if (d.kind != coord_kind(cfg)) throw DataError("observation file coordinates do not match data.coords");
    const std::vector<double> ratios = cfg.get_doubles("data", "split");
    if (ratios.empty() || ratios.size() > 3) throw ConfigError("data.split: expected 1 to 3 ratios");
    try {
        d = split(std::move(d), ratios, cfg.get_seed("data", "seed"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data.split: ") + e.what());
    }
    Splits s;
    s.train = d.subset(0);
    if (ratios.size() > 1) s.validation = d.subset(1);
    if (ratios.size() > 2) s.test = d.subset(2);
    return s;
}

Normalization run_normalization(const RunConfig& cfg) {
    return fit_normalization(data_domain(cfg), cfg.get_double("data", "t0"), cfg.get_double("data", "t1"));
}

namespace {

ModelFile load_model_file(const fs::path& path) {
    try {
        return load_model(path);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
}

}  // namespace

Predictor load_predictor(const RunConfig& cfg) {
    const std::string method = uq_method(cfg);
    const fs::path dir = workdir(cfg);
    const double noise = cfg.get_double("train", "noise_std");
    const std::uint64_t seed = cfg.get_seed("uq", "seed");
    const std::size_t n_samples = cfg.get_size("uq", "n_samples");
    if (method == "ensemble") {
        auto ens = std::make_shared<Ensemble>();
        const std::size_t J = cfg.get_size("uq", "members");
        for (std::size_t j = 0; j < J; ++j) ens->members.push_back(load_model_file(dir / member_file("model", j, ".drf")).model);
        ens->noise_std = noise;
        ens->validate();
        const std::size_t threads = std::max<std::size_t>(1, cfg.get_size("train", "threads"));
        return [ens, threads](std::span<const SpaceTimePoint> pts) { return ensemble_predict(*ens, pts, threads); };
    }
    ModelFile file = load_model_file(dir / member_file("model", 0, ".drf"));
    auto model = std::make_shared<DrfModel>(std::move(file.model));
    if (n_samples < 2) throw ConfigError("uq.n_samples must be at least 2");
    if (method == "dropout") {
        return [model, n_samples, seed, noise](std::span<const SpaceTimePoint> pts) {
            return dropout_predict(*model, pts, model->spec().dropout_rate, n_samples, seed, noise);
        };
    }
    if (!file.log_variance) throw DataError("model file holds no variational posterior");
    auto q = std::make_shared<VIPosterior>();
    q->mean.assign(model->weights().begin(), model->weights().end());
    q->log_variance = std::move(*file.log_variance);
    return [model, q, n_samples, seed, noise](std::span<const SpaceTimePoint> pts) {
        return vi_predict(*q, *model, pts, n_samples, seed, noise);
    };
}

// ---------------------------------------------------------------------------

void run_synth(const RunConfig& cfg, std::ostream& log) {
    const fs::path dir = workdir(cfg);
    fs::create_directories(dir);
    const std::uint64_t seed = cfg.get_seed("data", "seed");
    const Domain dom = data_domain(cfg);
    const SyntheticField field = synthetic_field(seed, field_config(cfg));
    const double t0 = cfg.get_double("data", "t0"), t1 = cfg.get_double("data", "t1");
    const auto tracks = make_tracks(dom, cfg.get_size("data", "n_tracks"), cfg.get_size("data", "points_per_track"), t0,
                                    t1, seed);
    const Dataset obs = observe(field, tracks, cfg.get_double("data", "noise_std"), seed);
    write_csv(dir / cfg.get("data", "observations"), obs);

    Dataset truth;
    truth.kind = dom.kind;
    for (const auto& p : prediction_grid(cfg)) truth.rows.push_back({p.c0, p.c1, p.t, field.at(p.c0, p.c1, p.t)});
    write_csv(dir / cfg.get("data", "truth_grid"), truth);
    write_manifest(dir / "manifest_synth.txt", "synth", cfg,
                   {{"n_observations", std::to_string(obs.size())}, {"n_truth", std::to_string(truth.size())}});
    log << "synth: wrote " << obs.size() << " observations and " << truth.size() << " truth nodes to "
        << dir.string() << '\n';
}

void run_train(const RunConfig& cfg, std::ostream& log) {
    const RunConfig resolved = resolve_tuned(cfg);
    fs::create_directories(workdir(resolved));
    train_and_save(resolved, log, "train");
}

void run_tune(const RunConfig& cfg, std::ostream& log) {
    const fs::path dir = workdir(cfg);
    fs::create_directories(dir);
    const HyperSpace space = hyper_space(cfg);
    const Splits s = load_splits(cfg);
    if (s.validation.size() == 0) throw ConfigError("tune needs a validation split (data.split with 2 or 3 ratios)");
    const Normalization norm = run_normalization(cfg);
    const TrainingSet ts = training_set(s.train, norm);
    const TrainingSet vs = training_set(s.validation, norm);
    const double alpha = cfg.get_double("tune", "alpha");
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("tune.alpha must be in [0, 1)");
    const std::size_t g0 = cfg.get_size("tune", "grid_n0"), g1 = cfg.get_size("tune", "grid_n1");
    if (g0 < 2 || g1 < 2) throw ConfigError("tune.grid_n0 and tune.grid_n1 must be at least 2");
    // The regularizer integrates over the normalized domain at the mid-time slice.
    const RegGrid grid = coord_kind(cfg) == CoordKind::Planar ? RegGrid::planar(0.0, 1.0, g0, 0.0, 1.0, g1, 0.5)
                                                              : RegGrid::sphere(g0, g1, 0.5);

    RunConfig budget = cfg;
    budget.set("train", "epochs", cfg.get("tune", "epochs"));
    budget.set("uq", "method", "ensemble");
    budget.set("uq", "members", cfg.get("tune", "members"));
    std::size_t evaluation = 0;
    const Objective objective = [&](const std::vector<double>& lambda) {
        RunConfig c = budget;
        apply_hyperparameters(c, space, lambda);
        const TrainOutput out = fit_models(c, ts);
        const double value = combined_objective(out.ensemble, vs, train_config(c, ts.size()).loss, grid, alpha);
        log << "tune: evaluation " << evaluation++ << " objective " << format_double(value) << '\n';
        return value;
    };
    const BoResult bo = bo_loop(objective, space, cfg.get_size("tune", "n_init"), cfg.get_size("tune", "n_iter"),
                                cfg.get_seed("tune", "seed"));
    {
        std::ofstream out = open_out(dir / "bo_trace.csv");
        write_bo_trace(out, space, bo.state);
    }
    {
        std::ofstream out = open_out(dir / kBestLambdaFile);
        out << "# best hyperparameters found by tune\n";
        for (std::size_t i = 0; i < space.size(); ++i) out << space.dims[i].name << " = " << format_double(bo.best_lambda[i]) << '\n';
        out << "objective = " << format_double(bo.state.best().objective) << '\n';
    }
    if (!std::isfinite(bo.state.best().objective)) throw NumericError("every tuning evaluation failed", 0, 0);

    RunConfig final_cfg = cfg;
    apply_hyperparameters(final_cfg, space, bo.best_lambda);
    train_and_save(final_cfg, log, "tune");
    write_manifest(dir / "manifest_tune.txt", "tune", final_cfg,
                   {{"evaluations", std::to_string(bo.state.evaluations.size())},
                    {"best_objective", format_double(bo.state.best().objective)}});
}

void run_predict(const RunConfig& cfg, std::ostream& log) {
    const RunConfig resolved = resolve_tuned(cfg);
    const fs::path dir = workdir(resolved);
    const Normalization norm = run_normalization(resolved);
    const auto grid = prediction_grid(resolved);
    std::vector<SpaceTimePoint> pts;
    pts.reserve(grid.size());
    for (const auto& p : grid) pts.push_back(norm.to_model(p.c0, p.c1, p.t));
    const PredictiveSummary s = load_predictor(resolved)(pts);
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
        if (!std::isfinite(s.mean[i]) || !std::isfinite(s.predictive_variance[i])) {
            throw NumericError("prediction is not finite at grid node " + std::to_string(i), 0, 0);
        }
    }
    std::ofstream out = open_out(dir / "predictions.csv");
    out << (norm.kind == CoordKind::Planar ? "x,y" : "lon,lat") << ",t,mean,variance,predictive_variance\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out << format_double(grid[i].c0) << ',' << format_double(grid[i].c1) << ',' << format_double(grid[i].t) << ','
            << format_double(s.mean[i]) << ',' << format_double(s.variance[i]) << ','
            << format_double(s.predictive_variance[i]) << '\n';
    }
    if (!out) throw DataError("failed writing predictions.csv");
    write_manifest(dir / "manifest_predict.txt", "predict", resolved, {{"nodes", std::to_string(grid.size())}});
    log << "predict: wrote " << grid.size() << " nodes\n";
}

namespace {

void add_scores(MetricReport& report, const std::string& prefix, std::span<const EvalRecord> records, bool truth) {
    const Reference ref = truth ? Reference::Truth : Reference::Target;
    report.push_back({prefix + "rmse", rmse_rmae(records, ResidualMode::RMSE, ref)});
    report.push_back({prefix + "rmae", rmse_rmae(records, ResidualMode::RMAE, ref)});
    if (truth) {
        double nll;
        try {
            nll = nll_gaussian(records);
        } catch (const std::domain_error&) {
            nll = std::nan("");
        }
        report.push_back({prefix + "nll", nll});
    }
    report.push_back({prefix + "nlpd", nlpd(records, NlpdMode::Conjugate)});
    report.push_back({prefix + "crps", crps(records, CrpsMode::Gaussian)});
    double mean_var = 0.0;
    for (const auto& r : records) mean_var += r.variance;
    report.push_back({prefix + "mean_variance", mean_var / static_cast<double>(records.size())});
}

}  // namespace

void run_eval(const RunConfig& cfg, std::ostream& log) {
    const RunConfig resolved = resolve_tuned(cfg);
    const fs::path dir = workdir(resolved);
    const double noise = resolved.get_double("train", "noise_std");
    MetricReport report;

    bool lonlat = false;
    const auto pred = read_numeric_csv(dir / "predictions.csv", "x,y,t,mean,variance,predictive_variance",
                                       "lon,lat,t,mean,variance,predictive_variance", lonlat);
    const fs::path truth_path = dir / resolved.get("data", "truth_grid");
    if (fs::exists(truth_path)) {
        const Dataset truth = read_csv(truth_path);
        if (truth.size() != pred.size()) throw DataError("truth grid and predictions have different node counts");
        std::vector<EvalRecord> records(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const auto& p = pred[i];
            const auto& r = truth.rows[i];
            if (p[0] != r.c0 || p[1] != r.c1 || p[2] != r.t) {
                throw DataError("truth grid and predictions disagree at row " + std::to_string(i + 2));
            }
            records[i] = {p[3], p[4], noise, r.value, r.value};
        }
        add_scores(report, "grid_", records, true);
    }

    const Splits s = load_splits(resolved);
    const Dataset& held = s.test.size() ? s.test : s.validation;
    if (held.size()) {
        const Normalization norm = run_normalization(resolved);
        const auto pts = to_model_points(held, norm);
        const PredictiveSummary ps = load_predictor(resolved)(pts);
        std::vector<EvalRecord> records(held.size());
        for (std::size_t i = 0; i < held.size(); ++i) {
            records[i] = {ps.mean[i], ps.variance[i], noise, held.rows[i].value, std::nullopt};
        }
        add_scores(report, "heldout_", records, false);
        report.push_back({"heldout_count", static_cast<double>(held.size())});
    }
    if (report.empty()) throw DataError("nothing to evaluate: no truth grid and no held-out split");
    std::ofstream out = open_out(dir / "metrics.csv");
    write_metric_report(out, report);
    write_manifest(dir / "manifest_eval.txt", "eval", resolved, {});
    for (const auto& [k, v] : report) log << "eval: " << k << " = " << format_double(v) << '\n';
}

// ---------------------------------------------------------------------------

// Surface bad values as config errors before any file is touched.
static void validate_config(const RunConfig& cfg) {
    network_spec(cfg);
    train_config(cfg, 1);
    hyper_space(cfg);
    field_config(cfg);
    data_domain(cfg);
    uq_method(cfg);
    predict_times(cfg);
}

int run_command(const std::string& subcommand, const fs::path& config_path, const std::vector<std::string>& overrides,
                std::ostream& log, std::ostream& err) {
    try {
        RunConfig cfg = RunConfig::load(config_path);
        for (const auto& o : overrides) cfg.apply_override(o);
        validate_config(cfg);
        if (subcommand == "synth") {
            run_synth(cfg, log);
        } else if (subcommand == "train") {
            run_train(cfg, log);
        } else if (subcommand == "tune") {
            run_tune(cfg, log);
        } else if (subcommand == "predict") {
            run_predict(cfg, log);
        } else if (subcommand == "eval") {
            run_eval(cfg, log);
        } else {
            throw ConfigError("unknown subcommand \"" + subcommand + "\" (expected synth, train, tune, predict or eval)");
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace drf
