#include "drf/uq.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "drf/rng.hpp"

namespace drf {

const NetworkSpec& Ensemble::spec() const {
    if (members.empty()) throw std::invalid_argument("ensemble is empty");
    return members.front().spec();
}

void Ensemble::validate() const {
    if (members.empty()) throw std::invalid_argument("ensemble is empty");
    for (const auto& m : members) {
        if (!(m.spec() == members.front().spec())) throw std::invalid_argument("ensemble members have different specs");
    }
    if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");
}

namespace {

// Runs job(i) for i in [0, n) on up to `threads` workers. The first
// exception (lowest index) is rethrown after all workers finish.
template <typename Job>
void run_indexed(std::size_t n, std::size_t threads, Job job) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    std::vector<std::exception_ptr> errors(n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += threads) {
                    try {
                        job(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

EnsembleTraining train_ensemble(const NetworkSpec& spec, const TrainingSet& data, const TrainConfig& config,
                                std::size_t members, std::uint64_t base_seed, std::size_t threads) {
    if (members == 0) throw std::invalid_argument("ensemble needs at least one member");
    spec.validate();
    config.validate();
    std::vector<std::optional<DrfModel>> trained(members);
    std::vector<std::vector<double>> histories(members);
    run_indexed(members, threads, [&](std::size_t j) {
        const std::uint64_t seed = base_seed + j;
        TrainConfig c = config;
        c.seed = seed;
        try {
            TrainResult r = train(init_model(spec, seed), data, c);
            trained[j].emplace(std::move(r.model));
            histories[j] = std::move(r.history);
        } catch (const NumericError& e) {
            throw NumericError("ensemble member " + std::to_string(j) + ": " + e.what(), e.epoch(), e.batch());
        } catch (const std::exception& e) {
            throw std::runtime_error("ensemble member " + std::to_string(j) + ": " + e.what());
        }
    });
    EnsembleTraining out;
    out.ensemble.config = config;
    out.ensemble.noise_std = config.noise_std;
    out.ensemble.base_seed = base_seed;
    for (auto& m : trained) out.ensemble.members.push_back(std::move(*m));
    out.histories = std::move(histories);
    return out;
}

std::vector<double> member_predictions(const Ensemble& ensemble, std::span<const SpaceTimePoint> points,
                                       std::size_t threads) {
    ensemble.validate();
    const std::size_t block = points.size() * ensemble.spec().outputs;
    std::vector<double> out(ensemble.size() * block);
    run_indexed(ensemble.size(), threads, [&](std::size_t j) {
        const std::vector<double> p = predict_batch(ensemble.members[j], points);
        std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(j * block));
    });
    return out;
}

PredictiveSummary summarize_draws(std::span<const double> draws, std::size_t n_draws, std::size_t outputs,
                                  double noise_std) {
    if (n_draws == 0) throw std::invalid_argument("no draws to summarize");
    if (draws.size() % n_draws != 0) throw std::invalid_argument("draws have the wrong shape");
    const std::size_t block = draws.size() / n_draws;
    PredictiveSummary s;
    s.outputs = outputs;
    s.mean.assign(block, 0.0);
    s.variance.assign(block, 0.0);
    s.degenerate_variance = n_draws == 1;
    for (std::size_t d = 0; d < n_draws; ++d) {
        for (std::size_t i = 0; i < block; ++i) s.mean[i] += draws[d * block + i];
    }
    for (double& m : s.mean) m /= static_cast<double>(n_draws);
    if (n_draws > 1) {
        for (std::size_t d = 0; d < n_draws; ++d) {
            for (std::size_t i = 0; i < block; ++i) {
                const double r = draws[d * block + i] - s.mean[i];
                s.variance[i] += r * r;
            }
        }
        for (double& v : s.variance) v /= static_cast<double>(n_draws - 1);
    }
    const double noise_var = noise_std * noise_std;
    s.predictive_variance.resize(block);
    for (std::size_t i = 0; i < block; ++i) s.predictive_variance[i] = s.variance[i] + noise_var;
    return s;
}

PredictiveSummary ensemble_predict(const Ensemble& ensemble, std::span<const SpaceTimePoint> points,
                                   std::size_t threads) {
    const std::vector<double> draws = member_predictions(ensemble, points, threads);
    return summarize_draws(draws, ensemble.size(), ensemble.spec().outputs, ensemble.noise_std);
}

namespace {

// Welford accumulation over draws, one slot per query output.
struct Accumulator {
    std::vector<double> mean, m2;
    std::size_t count = 0;

    explicit Accumulator(std::size_t n) : mean(n, 0.0), m2(n, 0.0) {}
    void add(std::span<const double> x) {
        ++count;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - mean[i];
            mean[i] += d / static_cast<double>(count);
            m2[i] += d * (x[i] - mean[i]);
        }
    }
    PredictiveSummary finish(std::size_t outputs, double noise_std) const {
        PredictiveSummary s;
        s.outputs = outputs;
        s.mean = mean;
        s.variance.assign(mean.size(), 0.0);
        s.degenerate_variance = count < 2;
        if (count > 1) {
            for (std::size_t i = 0; i < m2.size(); ++i) s.variance[i] = std::max(0.0, m2[i] / static_cast<double>(count - 1));
        }
        s.predictive_variance.resize(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) s.predictive_variance[i] = s.variance[i] + noise_std * noise_std;
        return s;
    }
};

}  // namespace

PredictiveSummary dropout_predict(const DrfModel& model, std::span<const SpaceTimePoint> points, double rate,
                                  std::size_t n_samples, std::uint64_t seed, double noise_std) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (n_samples == 0) throw std::invalid_argument("dropout prediction needs at least one sample");
    NetworkSpec spec = model.spec();
    spec.dropout_rate = rate;
    const std::size_t O = spec.outputs;
    const std::size_t ms = spec.mask_size();
    NetworkEvaluator eval(spec);
    std::vector<double> cache(eval.cache_stride()), factors(ms);
    std::vector<double> draw(points.size() * O);
    Accumulator acc(points.size() * O);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t s = 0; s < n_samples; ++s) {
        Rng rng(derive_seed(seed, s));
        for (std::size_t n = 0; n < points.size(); ++n) {
            for (double& f : factors) f = rng.uniform() >= rate ? keep_scale : 0.0;
            eval.forward(model, points[n], factors.data(), cache.data(), draw.data() + n * O);
        }
        acc.add(draw);
    }
    return acc.finish(O, noise_std);
}

PredictiveSummary vi_predict(const VIPosterior& posterior, const DrfModel& model_template,
                             std::span<const SpaceTimePoint> points, std::size_t n_samples, std::uint64_t seed,
                             double noise_std) {
    posterior.validate();
    if (posterior.mean.size() != model_template.num_weights()) {
        throw std::invalid_argument("posterior does not match the model template");
    }
    if (n_samples == 0) throw std::invalid_argument("VI prediction needs at least one sample");
    const std::size_t O = model_template.spec().outputs;
    const std::size_t P = posterior.mean.size();
    NetworkEvaluator eval(model_template.spec());
    std::vector<double> cache(eval.cache_stride()), theta(P), draw(points.size() * O);
    Accumulator acc(points.size() * O);
    Rng rng(seed);
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t i = 0; i < P; ++i) {
            theta[i] = posterior.mean[i] + std::exp(0.5 * posterior.log_variance[i]) * rng.normal();
        }
        for (std::size_t n = 0; n < points.size(); ++n) {
            eval.forward_with(model_template, theta, points[n], nullptr, cache.data(), draw.data() + n * O);
        }
        acc.add(draw);
    }
    return acc.finish(O, noise_std);
}

}  // namespace drf
