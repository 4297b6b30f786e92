#pragma once
// Mini-batched training of the trainable mixing weights: regularized
// empirical risk with MSE or Huber loss minimized by Adam, and mean-field
// variational inference over the same weights.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drf/network.hpp"

namespace drf {

enum class LossKind { MSE, Huber };

struct Loss {
    LossKind kind = LossKind::MSE;
    double huber_delta = 0.1;
};

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  // d value / d prediction
};

// MSE: |p - y|^2. Huber: per component r^2/2 for |r| <= delta, else
// delta (|r| - delta / 2).
LossValue loss_and_grad(const Loss& loss, std::span<const double> prediction,
                        std::span<const double> target);
// Same, writing the gradient into grad (prediction.size() entries).
double loss_and_grad(const Loss& loss, std::span<const double> prediction,
                     std::span<const double> target, double* grad);

struct TrainConfig {
    Loss loss;
    double weight_decay = 0.0;  // beta
    double learning_rate = 1e-3;
    // Learning rate is multiplied by this after every epoch.
    double lr_decay = 1.0;
    std::size_t batch_size = 1024;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    bool shuffle = true;
    // Observation noise; scales the likelihood in variational inference
    // and feeds predictive variances.
    double noise_std = 0.01;

    void validate() const;
};

// beta = sigma_y^2 / N: weight decay for which the regularized risk is a
// scaled negative log posterior under a N(0, I) prior.
double weight_decay_for_noise(double noise_std, std::size_t n);

struct TrainingSet {
    std::size_t outputs = 1;
    std::vector<SpaceTimePoint> inputs;
    std::vector<double> targets;  // size() x outputs

    std::size_t size() const { return inputs.size(); }
    std::span<const double> target(std::size_t i) const {
        return std::span<const double>(targets).subspan(i * outputs, outputs);
    }
};

// Thrown when the objective becomes NaN or infinite.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t epoch, std::size_t batch)
        : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
    std::size_t epoch() const { return epoch_; }
    std::size_t batch() const { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

// Mean per-sample loss over the samples plus beta |Theta|^2.
double regularized_objective(const DrfModel& model, const TrainingSet& data,
                             std::span<const std::size_t> indices, const TrainConfig& config);
double regularized_objective(const DrfModel& model, const TrainingSet& data,
                             const TrainConfig& config);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    explicit AdamState(std::size_t n = 0) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

// One bias-corrected Adam update of params in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr);

// One optimizer step sees a batch of sample indices and a seed for any
// randomness (dropout masks). The callback returns the summed per-sample
// loss over the batch and adds the summed gradient into grad_sum.
struct BatchContext {
    std::span<const std::size_t> indices;
    std::uint64_t seed = 0;
};
using BatchLossGrad =
    std::function<double(std::span<const double> params, const BatchContext& batch, std::span<double> grad_sum)>;

// Minimizes (1/n) sum loss + beta |params|^2 over shuffled mini-batches.
// Returns the per-epoch mean objective.
std::vector<double> fit_regularized(std::span<double> params, std::size_t num_samples,
                                    const BatchLossGrad& batch_loss, const TrainConfig& config);

struct TrainResult {
    DrfModel model;
    std::vector<double> history;
};

// Trains only the mixing weights; feature layers are never touched.
TrainResult train(DrfModel model, const TrainingSet& data, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Variational inference, q(Theta) = N(mean, diag(exp(log_variance))),
// prior N(0, I).

struct VIPosterior {
    std::vector<double> mean;
    std::vector<double> log_variance;

    void validate() const;
};

struct VIConfig {
    std::size_t n_samples = 1;
    // When false the expected log-likelihood is dropped and only the KL
    // term is optimized (one step per epoch).
    bool use_likelihood = true;
    double init_log_variance = -9.0;
};

double kl_to_standard_normal(const VIPosterior& q);

// Per-sample negative log-likelihood used by the ELBO: loss / (2 sigma_y^2).
// For MSE this is the Gaussian likelihood without its constant.
double vi_likelihood_scale(const TrainConfig& config);

// Monte-Carlo ELBO: (N / n) * mean over draws of sum_batch -nll - KL, with
// N = dataset_size (defaults to the batch size).
double kl_and_elbo(const VIPosterior& q, const DrfModel& model_template, const TrainingSet& batch,
                   const TrainConfig& config, std::size_t n_samples, std::uint64_t seed,
                   std::size_t dataset_size = 0);

// Generic ELBO estimate for any batch loss (already scaled as a nll).
double elbo_estimate(const VIPosterior& q, std::size_t num_samples, const BatchLossGrad& batch_nll,
                     std::span<const std::size_t> indices, std::size_t n_draws, std::uint64_t seed);

struct VIResult {
    VIPosterior posterior;
    std::vector<double> history;  // negative ELBO per epoch
};

// Maximizes the ELBO by Adam on (mean, log_variance).
VIResult fit_variational(std::vector<double> init_mean, std::size_t num_samples,
                         const BatchLossGrad& batch_nll, const TrainConfig& config, const VIConfig& vi);

struct DrfVIResult {
    DrfModel model_template;  // frozen layers; weights hold the posterior mean
    VIPosterior posterior;
    std::vector<double> history;
};

DrfVIResult train_vi(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& config,
                     const VIConfig& vi = {});

// Batch loss of a DRF model evaluated at arbitrary weights; each summed
// per-sample loss is multiplied by loss_scale.
BatchLossGrad drf_batch_loss(const DrfModel& model, const TrainingSet& data, const Loss& loss,
                             double loss_scale = 1.0);

}  // namespace drf
