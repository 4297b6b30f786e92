#pragma once
// Point and probabilistic scores for Gaussian predictive summaries.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace drf {

struct EvalRecord {
    double mean = 0.0;
    double variance = 0.0;  // epistemic
    double noise_std = 0.0;
    double target = 0.0;
    std::optional<double> truth;

    double predictive_variance() const { return variance + noise_std * noise_std; }
};

enum class NormalFn { Pdf, Cdf };
double std_normal(NormalFn kind, double z);
double normal_pdf(double z);
double normal_cdf(double z);

enum class ResidualMode { RMSE, RMAE };
enum class Reference { Target, Truth };

// RMSE = sqrt(mean r^2); RMAE = sqrt(mean |r|).
double rmse_rmae(std::span<const EvalRecord> records, ResidualMode mode, Reference ref = Reference::Target);
double rmse(std::span<const double> prediction, std::span<const double> target);
double rmae(std::span<const double> prediction, std::span<const double> target);

// Pointwise Gaussian negative log-likelihood with the log(2 pi) / 2 constant.
// Zero variance gives +inf for a nonzero residual and throws
// std::domain_error for a zero residual.
double gaussian_nll(double residual, double variance);

// Mean NLL of the ground truth under N(mean, variance).
double nll_gaussian(std::span<const EvalRecord> records);

enum class NlpdMode { Conjugate, Jensen };
// Conjugate: NLL of the target under N(mean, variance + sigma_y^2).
// Jensen: mean over members of the NLL of the target under
// N(member mean, sigma_y^2), an upper bound on the mixture NLPD.
// member_means is records x J, required for Jensen mode.
double nlpd(std::span<const EvalRecord> records, NlpdMode mode, std::span<const double> member_means = {});

// Closed form sigma (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)), z = (y - mu) / sigma.
double crps_gaussian(double mu, double sigma, double y);
// E|X - y| - E|X - X'| / 2 with X' the next sample cyclically.
double crps_empirical(std::span<const double> samples, double y);

enum class CrpsMode { Gaussian, Empirical };
// Gaussian: mean closed-form CRPS of the target under the predictive
// distribution. Empirical: samples is records x S.
double crps(std::span<const EvalRecord> records, CrpsMode mode, std::span<const double> samples = {});

using MetricReport = std::vector<std::pair<std::string, double>>;
// Plain-text rows "metric,value".
void write_metric_report(std::ostream& out, const MetricReport& report);

}  // namespace drf
