#pragma once
// Gaussian predictive summaries from deep ensembles, test-time dropout and
// samples of a variational posterior.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drf/network.hpp"
#include "drf/training.hpp"

namespace drf {

struct Ensemble {
    std::vector<DrfModel> members;
    TrainConfig config;
    double noise_std = 0.01;
    std::uint64_t base_seed = 0;

    std::size_t size() const { return members.size(); }
    const NetworkSpec& spec() const;
    void validate() const;
};

struct EnsembleTraining {
    Ensemble ensemble;
    std::vector<std::vector<double>> histories;  // one loss history per member
};

// Member j is initialized and trained with seed base_seed + j. threads > 1
// trains members concurrently; results are identical to the sequential run.
EnsembleTraining train_ensemble(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& config,
                                std::size_t members, std::uint64_t base_seed, std::size_t threads = 1);

// Per-query summaries, each array queries x O.
struct PredictiveSummary {
    std::size_t outputs = 1;
    std::vector<double> mean;
    std::vector<double> variance;             // epistemic
    std::vector<double> predictive_variance;  // epistemic + sigma_y^2
    // Set when the variance is zero by convention (a single member or draw).
    bool degenerate_variance = false;

    std::size_t size() const { return outputs ? mean.size() / outputs : 0; }
};

// Member outputs, members x queries x O.
std::vector<double> member_predictions(const Ensemble& ensemble, std::span<const SpaceTimePoint> points,
                                       std::size_t threads = 1);

// Summarizes draws laid out draws x queries x O: mean and unbiased variance.
PredictiveSummary summarize_draws(std::span<const double> draws, std::size_t n_draws, std::size_t outputs,
                                  double noise_std);

PredictiveSummary ensemble_predict(const Ensemble& ensemble, std::span<const SpaceTimePoint> points,
                                   std::size_t threads = 1);

// Monte-Carlo dropout with drop probability rate; the model's own dropout
// rate is ignored.
PredictiveSummary dropout_predict(const DrfModel& model, std::span<const SpaceTimePoint> points, double rate,
                                  std::size_t n_samples, std::uint64_t seed, double noise_std = 0.0);

// Samples weights from q and runs the template's frozen layers with them.
PredictiveSummary vi_predict(const VIPosterior& posterior, const DrfModel& model_template,
                             std::span<const SpaceTimePoint> points, std::size_t n_samples, std::uint64_t seed,
                             double noise_std = 0.0);

}  // namespace drf
