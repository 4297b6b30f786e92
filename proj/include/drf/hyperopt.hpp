#pragma once
// Bayesian optimization of kernel hyperparameters against a validation
// loss, optionally blended with a gradient-energy penalty on the ensemble
// mean.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "drf/network.hpp"
#include "drf/training.hpp"
#include "drf/uq.hpp"

namespace drf {

struct HyperDim {
    std::string name;
    double lower = 0.1;
    double upper = 10.0;
    bool log_scale = true;
};

struct HyperSpace {
    std::vector<HyperDim> dims;

    std::size_t size() const { return dims.size(); }
    void validate() const;
    // Maps a point to the unit cube (log coordinates for log dims) and back.
    std::vector<double> to_unit(std::span<const double> lambda) const;
    std::vector<double> from_unit(std::span<const double> u) const;
};

struct Evaluation {
    std::vector<double> lambda;
    double objective = 0.0;  // +inf for failed evaluations
};

struct BoState {
    std::vector<Evaluation> evaluations;
    std::vector<double> incumbent;  // running minimum after each evaluation
    std::size_t best_index = 0;

    const Evaluation& best() const { return evaluations.at(best_index); }
};

// ---------------------------------------------------------------------------
// Validation objective and regularizer.

// Mean over points of the mean over members of the per-sample loss.
double validation_loss(const Ensemble& ensemble, const TrainingSet& val, const Loss& loss);

struct RegGrid {
    enum class Kind { Planar, Sphere };
    Kind kind = Kind::Planar;
    // Planar: x and y node coordinates (model units). Sphere: latitude and
    // longitude nodes in radians; longitude is periodic and must not repeat
    // its first node.
    std::vector<double> axis0;
    std::vector<double> axis1;
    double time = 0.5;
    // Sphere only: rows closer than this to a pole are excluded (radians).
    double polar_exclusion = 3.14159265358979323846 / 180.0;

    static RegGrid planar(double x0, double x1, std::size_t nx, double y0, double y1, std::size_t ny, double time);
    // n_lat rows from -90 to 90 degrees inclusive, n_lon columns over [-180, 180).
    static RegGrid sphere(std::size_t n_lat, std::size_t n_lon, double time);
    void validate() const;
    std::vector<SpaceTimePoint> nodes() const;  // row-major, axis0 outer
};

// Evaluates a scalar field at a batch of points.
using FieldFn = std::function<void(std::span<const SpaceTimePoint> points, std::span<double> values)>;

// Planar: trapezoid rule of |grad f|^2 with central differences (one-sided
// at edges). Sphere: trapezoid rule of (f_theta^2 + f_phi^2 / cos^2 theta) cos theta
// over the lat/lon lattice.
double functional_reg(const FieldFn& mean_fn, const RegGrid& grid);

// f-bar(x) = mean over members.
FieldFn ensemble_mean_fn(const Ensemble& ensemble);

// (1 - alpha) validation_loss + alpha functional_reg(f-bar).
double combined_objective(const Ensemble& ensemble, const TrainingSet& val, const Loss& loss, const RegGrid& grid,
                          double alpha);

// ---------------------------------------------------------------------------
// Search machinery.

// n points, one per stratum in every dimension (log-space strata for log dims).
std::vector<std::vector<double>> latin_hypercube(std::size_t n, const HyperSpace& space, std::uint64_t seed);

struct SurrogatePrediction {
    double mean = 0.0;
    double std = 0.0;
};

// Zero-mean GP on unit-cube inputs and standardized outputs, Matern-5/2
// covariance, jitter 1e-6 (escalated if the factorization fails),
// lengthscale chosen from {0.1, 0.2, 0.5, 1.0} by leave-one-out error.
class GpSurrogate {
public:
    GpSurrogate(const HyperSpace& space, std::span<const Evaluation> evals);

    SurrogatePrediction predict(std::span<const double> lambda) const;
    SurrogatePrediction predict_unit(std::span<const double> u) const;
    double lengthscale() const { return lengthscale_; }
    double jitter() const { return jitter_; }

private:
    std::size_t d_ = 0;
    std::vector<std::vector<double>> x_;
    std::vector<double> alpha_;
    std::vector<double> chol_;  // lower triangular, row-major n x n
    double y_mean_ = 0.0;
    double y_std_ = 1.0;
    double lengthscale_ = 0.5;
    double jitter_ = 1e-6;
    HyperSpace space_;
};

SurrogatePrediction surrogate_fit_predict(const HyperSpace& space, std::span<const Evaluation> evals,
                                          std::span<const double> query);

// Minimization form: (best - mu) Phi(z) + sigma phi(z), z = (best - mu) / sigma.
double expected_improvement(double mu, double sigma, double best);

using Objective = std::function<double(const std::vector<double>& lambda)>;

struct BoResult {
    std::vector<double> best_lambda;
    BoState state;
};

// n_init LHS points, then n_iter candidates maximizing EI (100 random
// restarts with local search in the unit cube). Exceptions and NaN from
// the objective are recorded as +inf.
BoResult bo_loop(const Objective& objective, const HyperSpace& space, std::size_t n_init, std::size_t n_iter,
                 std::uint64_t seed);

// Rows "iter,<dim names...>,objective,incumbent".
void write_bo_trace(std::ostream& out, const HyperSpace& space, const BoState& state);

}  // namespace drf
