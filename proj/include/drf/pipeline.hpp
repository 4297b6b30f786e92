#pragma once
// The synth / train / tune / predict / eval commands behind the CLI. Each
// command reads the resolved config and owns config.data.workdir.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "drf/config.hpp"
#include "drf/data.hpp"
#include "drf/uq.hpp"

namespace drf {

inline constexpr const char* kVersionTag = "drf 1.0.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

std::filesystem::path workdir(const RunConfig& cfg);

// Applies best_lambda.txt from the workdir when train.use_tuned is set
// and the file exists.
RunConfig resolve_tuned(const RunConfig& cfg);

// Prediction grid in data coordinates: times outer, then c1, then c0.
std::vector<TrackPoint> prediction_grid(const RunConfig& cfg);

// Training / validation / test partitions of the observations file.
struct Splits {
    Dataset train;
    Dataset validation;
    Dataset test;
};
Splits load_splits(const RunConfig& cfg);

Normalization run_normalization(const RunConfig& cfg);

// Loaded models of a finished train step, evaluated as predictive summaries.
using Predictor = std::function<PredictiveSummary(std::span<const SpaceTimePoint>)>;
Predictor load_predictor(const RunConfig& cfg);

void run_synth(const RunConfig& cfg, std::ostream& log);
void run_train(const RunConfig& cfg, std::ostream& log);
void run_tune(const RunConfig& cfg, std::ostream& log);
void run_predict(const RunConfig& cfg, std::ostream& log);
void run_eval(const RunConfig& cfg, std::ostream& log);

// Loads the config, applies "section.key=value" overrides, runs the
// subcommand and maps failures to exit codes with a one-line diagnostic.
int run_command(const std::string& subcommand, const std::filesystem::path& config_path,
                const std::vector<std::string>& overrides, std::ostream& log, std::ostream& err);

}  // namespace drf
