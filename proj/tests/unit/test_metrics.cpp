#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "drf/metrics.hpp"

using namespace drf;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2 * std::numbers::pi);

EvalRecord record(double mean, double var, double noise, double target) {
    EvalRecord r;
    r.mean = mean;
    r.variance = var;
    r.noise_std = noise;
    r.target = target;
    r.truth = target;
    return r;
}

}  // namespace

TEST_CASE("standard normal") {
    CHECK(std_normal(NormalFn::Cdf, 0.0) == 0.5);
    CHECK(std_normal(NormalFn::Pdf, 0.0) == doctest::Approx(0.39894228).epsilon(1e-8));
    CHECK(std::abs(normal_cdf(1.96) - 0.97500) < 1e-5);
    CHECK(std::abs(normal_cdf(1.959963984540054) - 0.975) < 1e-12);
    CHECK(normal_cdf(-40.0) >= 0.0);
    CHECK(normal_cdf(-8.0) == doctest::Approx(6.22096057427178e-16).epsilon(1e-8));
}

TEST_CASE("residual scores") {
    std::vector<EvalRecord> r{record(0.0, 0, 0, 0.0)};
    CHECK(rmse_rmae(r, ResidualMode::RMSE) == 0.0);
    CHECK(rmse_rmae(r, ResidualMode::RMAE) == 0.0);
    r = {record(-3.0, 0, 0, 0.0)};
    CHECK(rmse_rmae(r, ResidualMode::RMSE) == doctest::Approx(3.0));
    CHECK(rmse_rmae(r, ResidualMode::RMAE) == doctest::Approx(1.7321).epsilon(1e-4));
    r = {record(1.0, 0, 0, 0.0), record(0.0, 0, 0, 4.0)};
    CHECK(rmse_rmae(r, ResidualMode::RMAE) == doctest::Approx(1.5811).epsilon(1e-4));
    CHECK(rmse(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 4.0}) == doctest::Approx(std::sqrt(8.5)));
    CHECK(rmae(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 4.0}) == doctest::Approx(std::sqrt(2.5)));

    EvalRecord t = record(1.0, 0, 0, 5.0);
    t.truth = 2.0;
    CHECK(rmse_rmae(std::vector<EvalRecord>{t}, ResidualMode::RMSE, Reference::Truth) == doctest::Approx(1.0));
    t.truth.reset();
    CHECK_THROWS_AS(rmse_rmae(std::vector<EvalRecord>{t}, ResidualMode::RMSE, Reference::Truth),
                    std::invalid_argument);
    CHECK_THROWS_AS(rmse_rmae(std::vector<EvalRecord>{}, ResidualMode::RMSE), std::invalid_argument);
}

TEST_CASE("gaussian negative log-likelihood") {
    CHECK(std::abs(gaussian_nll(0.0, 1.0) - 0.91894) < 1e-5);
    CHECK(std::abs(gaussian_nll(0.0, 1.0) - kHalfLog2Pi) < 1e-12);
    CHECK(gaussian_nll(1.0, 1.0) == doctest::Approx(1.41894).epsilon(1e-5));
    CHECK(gaussian_nll(0.0, 4.0) - gaussian_nll(0.0, 1.0) == doctest::Approx(std::log(2.0)));
    CHECK(gaussian_nll(0.5, 0.0) == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(gaussian_nll(0.0, 0.0), std::domain_error);

    const std::vector<EvalRecord> r{record(0.0, 1.0, 0.0, 0.0), record(1.0, 1.0, 0.0, 0.0)};
    CHECK(nll_gaussian(r) == doctest::Approx(0.5 * (0.91894 + 1.41894)).epsilon(1e-5));
}

TEST_CASE("negative log predictive density") {
    CHECK(nlpd(std::vector<EvalRecord>{record(0.0, 3.0, 1.0, 0.0)}, NlpdMode::Conjugate) ==
          doctest::Approx(1.61209).epsilon(1e-5));
    // Zero epistemic variance reduces to the noise-only likelihood.
    const auto r = record(0.3, 0.0, 0.2, 0.1);
    CHECK(nlpd(std::vector<EvalRecord>{r}, NlpdMode::Conjugate) == doctest::Approx(gaussian_nll(0.2, 0.04)));
    // Only the total variance matters.
    CHECK(nlpd(std::vector<EvalRecord>{record(0.0, 0.5, 1.0, 0.4)}, NlpdMode::Conjugate) ==
          doctest::Approx(nlpd(std::vector<EvalRecord>{record(0.0, 1.25, std::sqrt(0.25), 0.4)},
                               NlpdMode::Conjugate)));
    CHECK_THROWS_AS(nlpd(std::vector<EvalRecord>{r}, NlpdMode::Jensen), std::invalid_argument);
}

TEST_CASE("Jensen bound dominates the moment-matched density") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u(0.05, 2.0);
    const std::size_t J = 5;
    int violations = 0;
    for (int c = 0; c < 1000; ++c) {
        std::vector<double> members(J);
        double m = 0;
        for (auto& f : members) m += (f = nd(rng));
        m /= J;
        double v = 0;
        for (double f : members) v += (f - m) * (f - m);
        v /= J;  // population variance matches the mixture moments
        const auto rec = record(m, v, u(rng), m + 2 * nd(rng));
        const std::vector<EvalRecord> one{rec};
        if (nlpd(one, NlpdMode::Jensen, members) < nlpd(one, NlpdMode::Conjugate) - 1e-12) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("CRPS") {
    CHECK(crps_gaussian(0.0, 1.0, 0.0) == doctest::Approx(0.23370).epsilon(1e-4));
    CHECK(crps_gaussian(1.0, 0.0, 1.0) == 0.0);
    CHECK(crps_gaussian(1.0, 0.0, 3.5) == doctest::Approx(2.5));
    CHECK(crps_gaussian(1.0, 1e-9, 3.5) == doctest::Approx(2.5));
    CHECK_THROWS_AS(crps_gaussian(0.0, -1.0, 0.0), std::invalid_argument);

    // Minimized over mu at the observation.
    const double at = crps_gaussian(0.4, 0.7, 0.4);
    for (double mu = -1.0; mu <= 2.0; mu += 0.05)
        if (std::abs(mu - 0.4) > 1e-9) CHECK(crps_gaussian(mu, 0.7, 0.4) > at);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.3, 1.2);
    std::vector<double> s(100000);
    for (auto& x : s) x = nd(rng);
    CHECK(std::abs(crps_empirical(s, -0.5) - crps_gaussian(0.3, 1.2, -0.5)) < 0.01);
    CHECK_THROWS_AS(crps_empirical(std::vector<double>{1.0}, 0.0), std::invalid_argument);

    const std::vector<EvalRecord> recs{record(0.0, 0.75, 0.5, 0.0), record(1.0, 0.0, 1.0, 0.0)};
    CHECK(crps(recs, CrpsMode::Gaussian) ==
          doctest::Approx(0.5 * (crps_gaussian(0, 1, 0) + crps_gaussian(1, 1, 0))));
    const std::vector<double> samples{0.0, 1.0, 2.0, 3.0};
    CHECK(crps(std::vector<EvalRecord>{record(0, 0, 0, 1.5)}, CrpsMode::Empirical, samples) ==
          doctest::Approx(crps_empirical(samples, 1.5)));
}

TEST_CASE("metrics do not depend on record order") {
    std::vector<EvalRecord> a{record(0.1, 0.2, 0.1, 0.5), record(-1.0, 0.4, 0.1, 0.2), record(2.0, 0.1, 0.3, 1.0)};
    std::vector<EvalRecord> b{a[2], a[0], a[1]};
    CHECK(rmse_rmae(a, ResidualMode::RMSE) == doctest::Approx(rmse_rmae(b, ResidualMode::RMSE)));
    CHECK(nlpd(a, NlpdMode::Conjugate) == doctest::Approx(nlpd(b, NlpdMode::Conjugate)));
    CHECK(crps(a, CrpsMode::Gaussian) == doctest::Approx(crps(b, CrpsMode::Gaussian)));
}

TEST_CASE("metric report format") {
    std::ostringstream out;
    write_metric_report(out, {{"rmse", 0.125}, {"nll", -1.5}});
    CHECK(out.str() == "metric,value\nrmse,0.125\nnll,-1.5\n");
}
