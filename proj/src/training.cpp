#include "drf/training.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "drf/rng.hpp"

namespace drf {

double loss_and_grad(const Loss& loss, std::span<const double> prediction,
                     std::span<const double> target, double* grad) {
    if (prediction.size() != target.size()) throw std::invalid_argument("prediction and target sizes differ");
    double value = 0.0;
    if (loss.kind == LossKind::MSE) {
        for (std::size_t i = 0; i < prediction.size(); ++i) {
            const double r = prediction[i] - target[i];
            value += r * r;
            grad[i] = 2.0 * r;
        }
        return value;
    }
    const double d = loss.huber_delta;
    if (!(d > 0.0)) throw std::invalid_argument("Huber delta must be positive");
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double r = prediction[i] - target[i];
        if (std::abs(r) <= d) {
            value += 0.5 * r * r;
            grad[i] = r;
        } else {
            value += d * (std::abs(r) - 0.5 * d);
            grad[i] = r > 0.0 ? d : -d;
        }
    }
    return value;
}

LossValue loss_and_grad(const Loss& loss, std::span<const double> prediction,
                        std::span<const double> target) {
    LossValue v;
    v.grad.resize(prediction.size());
    v.value = loss_and_grad(loss, prediction, target, v.grad.data());
    return v;
}

void TrainConfig::validate() const {
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must be in (0, 1]");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(noise_std > 0.0)) throw std::invalid_argument("noise_std must be positive");
    if (loss.kind == LossKind::Huber && !(loss.huber_delta > 0.0)) {
        throw std::invalid_argument("huber_delta must be positive");
    }
}

double weight_decay_for_noise(double noise_std, std::size_t n) {
    if (n == 0) throw std::invalid_argument("dataset is empty");
    return noise_std * noise_std / static_cast<double>(n);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr) {
    const std::size_t n = params.size();
    if (grad.size() != n) throw std::invalid_argument("gradient size mismatch");
    if (state.first_moment.empty()) {
        state.first_moment.assign(n, 0.0);
        state.second_moment.assign(n, 0.0);
        state.step = 0;
    } else if (state.first_moment.size() != n || state.second_moment.size() != n) {
        throw std::invalid_argument("optimizer state size mismatch");
    }
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = b1 * m + (1.0 - b1) * grad[i];
        v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    }
}

namespace {

double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

// Index batches of one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, bool shuffle, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        Rng rng(derive_seed(derive_seed(seed, "shuffle"), epoch));
        std::shuffle(order.begin(), order.end(), rng.engine());
    }
    return order;
}

void check_finite(double value, const char* what, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(value)) {
        throw NumericError(std::string(what) + " became non-finite at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch),
                           epoch, batch);
    }
}

void check_data(const TrainingSet& data) {
    if (data.size() == 0) throw std::invalid_argument("training set is empty");
    if (data.targets.size() != data.size() * data.outputs) {
        throw std::invalid_argument("training targets do not match the inputs");
    }
}

}  // namespace

BatchLossGrad drf_batch_loss(const DrfModel& model, const TrainingSet& data, const Loss& loss,
                             double loss_scale) {
    check_data(data);
    if (data.outputs != model.spec().outputs) throw std::invalid_argument("training set output count mismatch");
    // Scratch shared by calls of the returned closure; one closure per thread.
    struct Scratch {
        NetworkEvaluator eval;
        std::vector<double> cache, out, dout, mask;
        std::vector<std::uint8_t> keep;
    };
    auto scratch = std::make_shared<Scratch>(Scratch{NetworkEvaluator(model.spec()), {}, {}, {}, {}, {}});
    scratch->cache.resize(scratch->eval.cache_stride());
    scratch->out.resize(model.spec().outputs);
    scratch->dout.resize(model.spec().outputs);
    const DrfModel* m = &model;
    const TrainingSet* d = &data;
    return [m, d, loss, loss_scale, scratch](std::span<const double> params, const BatchContext& batch,
                                           std::span<double> grad_sum) {
        Scratch& s = *scratch;
        const NetworkSpec& spec = m->spec();
        const bool dropout = spec.dropout_rate > 0.0;
        const std::size_t ms = spec.mask_size();
        if (dropout) {
            s.keep = sample_dropout_mask(spec, batch.indices.size(), batch.seed);
            s.mask = mask_factors(spec, s.keep);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < batch.indices.size(); ++k) {
            const std::size_t n = batch.indices[k];
            const double* mf = dropout ? s.mask.data() + k * ms : nullptr;
            s.eval.forward_with(*m, params, d->inputs[n], mf, s.cache.data(), s.out.data());
            total += loss_and_grad(loss, s.out, d->target(n), s.dout.data());
            if (!grad_sum.empty()) {
                for (double& g : s.dout) g *= loss_scale;
                s.eval.backward_with(*m, params, s.cache.data(), mf, s.dout.data(), grad_sum.data());
            }
        }
        return loss_scale * total;
    };
}

double regularized_objective(const DrfModel& model, const TrainingSet& data,
                             std::span<const std::size_t> indices, const TrainConfig& config) {
    if (indices.empty()) throw std::invalid_argument("objective needs at least one sample");
    Loss loss = config.loss;
    // Dropout is a training-time perturbation; the objective uses the full network.
    NetworkEvaluator eval(model.spec());
    std::vector<double> cache(eval.cache_stride()), out(model.spec().outputs), g(model.spec().outputs);
    double total = 0.0;
    for (std::size_t n : indices) {
        if (n >= data.size()) throw std::out_of_range("sample index out of range");
        eval.forward(model, data.inputs[n], nullptr, cache.data(), out.data());
        total += loss_and_grad(loss, out, data.target(n), g.data());
    }
    return total / static_cast<double>(indices.size()) + config.weight_decay * squared_norm(model.weights());
}

double regularized_objective(const DrfModel& model, const TrainingSet& data, const TrainConfig& config) {
    check_data(data);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return regularized_objective(model, data, all, config);
}

std::vector<double> fit_regularized(std::span<double> params, std::size_t num_samples,
                                    const BatchLossGrad& batch_loss, const TrainConfig& config) {
    config.validate();
    if (num_samples == 0) throw std::invalid_argument("training set is empty");
    const std::size_t P = params.size();
    AdamState adam(P);
    std::vector<double> grad(P);
    std::vector<double> history;
    history.reserve(config.epochs);
    double lr = config.learning_rate;
    const std::size_t bs = std::min(config.batch_size, num_samples);
    const std::uint64_t mask_seed = derive_seed(config.seed, "dropout");
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(num_samples, config.shuffle, config.seed, epoch);
        double weighted = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < num_samples; start += bs, ++batch_index, ++step) {
            const std::size_t n = std::min(bs, num_samples - start);
            std::fill(grad.begin(), grad.end(), 0.0);
            BatchContext ctx{std::span<const std::size_t>(order).subspan(start, n), derive_seed(mask_seed, step)};
            const double loss_sum = batch_loss(params, ctx, grad);
            const double inv_n = 1.0 / static_cast<double>(n);
            const double objective = loss_sum * inv_n + config.weight_decay * squared_norm(params);
            check_finite(objective, "training objective", epoch, batch_index);
            for (std::size_t i = 0; i < P; ++i) grad[i] = grad[i] * inv_n + 2.0 * config.weight_decay * params[i];
            adam_step(adam, params, grad, lr);
            weighted += objective * static_cast<double>(n);
        }
        history.push_back(weighted / static_cast<double>(num_samples));
        lr *= config.lr_decay;
    }
    return history;
}

TrainResult train(DrfModel model, const TrainingSet& data, const TrainConfig& config) {
    check_data(data);
    std::vector<double> params(model.weights().begin(), model.weights().end());
    const BatchLossGrad loss = drf_batch_loss(model, data, config.loss);
    std::vector<double> history = fit_regularized(params, data.size(), loss, config);
    auto w = model.mutable_weights();
    std::copy(params.begin(), params.end(), w.begin());
    return TrainResult{std::move(model), std::move(history)};
}

// ---------------------------------------------------------------------------

void VIPosterior::validate() const {
    if (mean.size() != log_variance.size()) throw std::invalid_argument("posterior mean/variance size mismatch");
    for (std::size_t i = 0; i < mean.size(); ++i) {
        if (!std::isfinite(mean[i]) || !std::isfinite(log_variance[i])) {
            throw std::invalid_argument("posterior parameters must be finite");
        }
    }
}

double kl_to_standard_normal(const VIPosterior& q) {
    q.validate();
    double kl = 0.0;
    for (std::size_t i = 0; i < q.mean.size(); ++i) {
        const double lv = q.log_variance[i];
        kl += std::exp(lv) + q.mean[i] * q.mean[i] - 1.0 - lv;
    }
    return 0.5 * kl;
}

double vi_likelihood_scale(const TrainConfig& config) {
    return 1.0 / (2.0 * config.noise_std * config.noise_std);
}

double elbo_estimate(const VIPosterior& q, std::size_t num_samples, const BatchLossGrad& batch_nll,
                     std::span<const std::size_t> indices, std::size_t n_draws, std::uint64_t seed) {
    q.validate();
    if (indices.empty() || n_draws == 0) throw std::invalid_argument("ELBO needs samples and draws");
    const std::size_t P = q.mean.size();
    Rng rng(seed);
    std::vector<double> theta(P);
    double expected = 0.0;
    for (std::size_t s = 0; s < n_draws; ++s) {
        for (std::size_t i = 0; i < P; ++i) theta[i] = q.mean[i] + std::exp(0.5 * q.log_variance[i]) * rng.normal();
        expected += batch_nll(theta, BatchContext{indices, derive_seed(seed, s)}, {});
    }
    const double scale = static_cast<double>(num_samples) / static_cast<double>(indices.size());
    return -scale * expected / static_cast<double>(n_draws) - kl_to_standard_normal(q);
}

double kl_and_elbo(const VIPosterior& q, const DrfModel& model_template, const TrainingSet& batch,
                   const TrainConfig& config, std::size_t n_samples, std::uint64_t seed,
                   std::size_t dataset_size) {
    check_data(batch);
    if (q.mean.size() != model_template.num_weights()) throw std::invalid_argument("posterior size mismatch");
    const BatchLossGrad nll = drf_batch_loss(model_template, batch, config.loss, vi_likelihood_scale(config));
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return elbo_estimate(q, dataset_size ? dataset_size : batch.size(), nll, all, n_samples, seed);
}

VIResult fit_variational(std::vector<double> init_mean, std::size_t num_samples,
                         const BatchLossGrad& batch_nll, const TrainConfig& config, const VIConfig& vi) {
    config.validate();
    if (vi.n_samples == 0) throw std::invalid_argument("VI needs at least one Monte-Carlo draw");
    if (vi.use_likelihood && num_samples == 0) throw std::invalid_argument("training set is empty");
    const std::size_t P = init_mean.size();
    VIResult result;
    result.posterior.mean = std::move(init_mean);
    result.posterior.log_variance.assign(P, vi.init_log_variance);

    // Adam runs on the concatenation [mean, log_variance].
    std::vector<double> params(2 * P), grad(2 * P), theta(P), eps(P), g_theta(P);
    std::copy(result.posterior.mean.begin(), result.posterior.mean.end(), params.begin());
    std::copy(result.posterior.log_variance.begin(), result.posterior.log_variance.end(), params.begin() + P);
    AdamState adam(2 * P);
    double lr = config.learning_rate;
    const std::size_t bs = vi.use_likelihood ? std::min(config.batch_size, num_samples) : 1;
    const std::size_t steps_per_epoch = vi.use_likelihood ? (num_samples + bs - 1) / bs : 1;
    Rng noise(derive_seed(config.seed, "vi-noise"));
    const std::uint64_t mask_seed = derive_seed(config.seed, "dropout");
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = vi.use_likelihood ? epoch_order(num_samples, config.shuffle, config.seed, epoch)
                                             : std::vector<std::size_t>{};
        double epoch_total = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const double* m = params.data();
            const double* lv = params.data() + P;
            double kl = 0.0;
            for (std::size_t i = 0; i < P; ++i) kl += 0.5 * (std::exp(lv[i]) + m[i] * m[i] - 1.0 - lv[i]);
            // KL gradient.
            for (std::size_t i = 0; i < P; ++i) {
                grad[i] = m[i];
                grad[P + i] = 0.5 * (std::exp(lv[i]) - 1.0);
            }
            double expected_nll = 0.0;
            if (vi.use_likelihood) {
                const std::size_t start = b * bs;
                const std::size_t n = std::min(bs, num_samples - start);
                const std::span<const std::size_t> idx = std::span<const std::size_t>(order).subspan(start, n);
                const double scale = static_cast<double>(num_samples) / static_cast<double>(n);
                const double inv_s = 1.0 / static_cast<double>(vi.n_samples);
                for (std::size_t s = 0; s < vi.n_samples; ++s) {
                    for (std::size_t i = 0; i < P; ++i) {
                        eps[i] = noise.normal();
                        theta[i] = m[i] + std::exp(0.5 * lv[i]) * eps[i];
                    }
                    std::fill(g_theta.begin(), g_theta.end(), 0.0);
                    const double nll = batch_nll(theta, BatchContext{idx, derive_seed(mask_seed, step)}, g_theta);
                    expected_nll += scale * nll * inv_s;
                    for (std::size_t i = 0; i < P; ++i) {
                        const double g = scale * g_theta[i] * inv_s;
                        grad[i] += g;
                        grad[P + i] += g * eps[i] * 0.5 * std::exp(0.5 * lv[i]);
                    }
                }
            }
            const double neg_elbo = expected_nll + kl;
            check_finite(neg_elbo, "negative ELBO", epoch, b);
            adam_step(adam, params, grad, lr);
            epoch_total += neg_elbo;
        }
        result.history.push_back(epoch_total / static_cast<double>(steps_per_epoch));
        lr *= config.lr_decay;
    }
    std::copy(params.begin(), params.begin() + P, result.posterior.mean.begin());
    std::copy(params.begin() + P, params.end(), result.posterior.log_variance.begin());
    return result;
}

DrfVIResult train_vi(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& config,
                     const VIConfig& vi) {
    DrfModel model = init_model(spec, config.seed);
    std::vector<double> init(model.weights().begin(), model.weights().end());
    BatchLossGrad nll;
    std::size_t n = 0;
    if (vi.use_likelihood) {
        nll = drf_batch_loss(model, data, config.loss, vi_likelihood_scale(config));
        n = data.size();
    }
    VIResult fit = fit_variational(std::move(init), n, nll, config, vi);
    auto w = model.mutable_weights();
    std::copy(fit.posterior.mean.begin(), fit.posterior.mean.end(), w.begin());
    return DrfVIResult{std::move(model), std::move(fit.posterior), std::move(fit.history)};
}

}  // namespace drf
