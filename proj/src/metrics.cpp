#include "drf/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace drf {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double std_normal(NormalFn kind, double z) {
    if (!std::isfinite(z)) throw std::invalid_argument("std_normal needs a finite argument");
    return kind == NormalFn::Pdf ? normal_pdf(z) : normal_cdf(z);
}

namespace {

void require_records(std::span<const EvalRecord> records) {
    if (records.empty()) throw std::invalid_argument("no records to score");
    for (const auto& r : records) {
        if (!(r.variance >= 0.0) || !(r.noise_std >= 0.0)) throw std::invalid_argument("variances must be non-negative");
    }
}

double residual_mean(std::span<const double> residuals, ResidualMode mode) {
    if (residuals.empty()) throw std::invalid_argument("no residuals to score");
    double s = 0.0;
    for (double r : residuals) s += mode == ResidualMode::RMSE ? r * r : std::abs(r);
    return std::sqrt(s / static_cast<double>(residuals.size()));
}

}  // namespace

double rmse_rmae(std::span<const EvalRecord> records, ResidualMode mode, Reference ref) {
    require_records(records);
    std::vector<double> r(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (ref == Reference::Truth && !rec.truth) throw std::invalid_argument("record has no ground truth");
        r[i] = rec.mean - (ref == Reference::Truth ? *rec.truth : rec.target);
    }
    return residual_mean(r, mode);
}

double rmse(std::span<const double> prediction, std::span<const double> target) {
    if (prediction.size() != target.size()) throw std::invalid_argument("prediction and target sizes differ");
    std::vector<double> r(prediction.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = prediction[i] - target[i];
    return residual_mean(r, ResidualMode::RMSE);
}

double rmae(std::span<const double> prediction, std::span<const double> target) {
    if (prediction.size() != target.size()) throw std::invalid_argument("prediction and target sizes differ");
    std::vector<double> r(prediction.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = prediction[i] - target[i];
    return residual_mean(r, ResidualMode::RMAE);
}

double gaussian_nll(double residual, double variance) {
    if (!(variance >= 0.0)) throw std::invalid_argument("variance must be non-negative");
    if (variance == 0.0) {
        if (residual != 0.0) return std::numeric_limits<double>::infinity();
        throw std::domain_error("NLL is undefined for a point mass at the observed value");
    }
    return 0.5 * std::log(2.0 * std::numbers::pi * variance) + 0.5 * residual * residual / variance;
}

double nll_gaussian(std::span<const EvalRecord> records) {
    require_records(records);
    double s = 0.0;
    for (const auto& r : records) {
        if (!r.truth) throw std::invalid_argument("NLL needs ground-truth values");
        s += gaussian_nll(*r.truth - r.mean, r.variance);
    }
    return s / static_cast<double>(records.size());
}

double nlpd(std::span<const EvalRecord> records, NlpdMode mode, std::span<const double> member_means) {
    require_records(records);
    const std::size_t n = records.size();
    double s = 0.0;
    if (mode == NlpdMode::Conjugate) {
        for (const auto& r : records) s += gaussian_nll(r.target - r.mean, r.predictive_variance());
        return s / static_cast<double>(n);
    }
    if (member_means.empty() || member_means.size() % n != 0) {
        throw std::invalid_argument("Jensen NLPD needs per-member means for every record");
    }
    const std::size_t J = member_means.size() / n;
    for (std::size_t i = 0; i < n; ++i) {
        const double var = records[i].noise_std * records[i].noise_std;
        double m = 0.0;
        for (std::size_t j = 0; j < J; ++j) m += gaussian_nll(records[i].target - member_means[i * J + j], var);
        s += m / static_cast<double>(J);
    }
    return s / static_cast<double>(n);
}

double crps_gaussian(double mu, double sigma, double y) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("CRPS needs a non-negative standard deviation");
    if (sigma == 0.0) return std::abs(y - mu);
    const double z = (y - mu) / sigma;
    return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

double crps_empirical(std::span<const double> samples, double y) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("empirical CRPS needs at least two samples");
    double spread = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        err += std::abs(samples[i] - y);
        spread += std::abs(samples[i] - samples[(i + 1) % n]);
    }
    return (err - 0.5 * spread) / static_cast<double>(n);
}

double crps(std::span<const EvalRecord> records, CrpsMode mode, std::span<const double> samples) {
    require_records(records);
    const std::size_t n = records.size();
    double s = 0.0;
    if (mode == CrpsMode::Gaussian) {
        for (const auto& r : records) s += crps_gaussian(r.mean, std::sqrt(r.predictive_variance()), r.target);
        return s / static_cast<double>(n);
    }
    if (samples.empty() || samples.size() % n != 0) throw std::invalid_argument("empirical CRPS needs samples per record");
    const std::size_t S = samples.size() / n;
    for (std::size_t i = 0; i < n; ++i) s += crps_empirical(samples.subspan(i * S, S), records[i].target);
    return s / static_cast<double>(n);
}

void write_metric_report(std::ostream& out, const MetricReport& report) {
    out << "metric,value\n";
    char buf[64];
    for (const auto& [name, value] : report) {
        std::snprintf(buf, sizeof(buf), "%.17g", value);
        out << name << ',' << buf << '\n';
    }
}

}  // namespace drf
