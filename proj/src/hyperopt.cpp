#include "drf/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "drf/data.hpp"
#include "drf/metrics.hpp"
#include "drf/rng.hpp"

namespace drf {

void HyperSpace::validate() const {
    if (dims.empty()) throw std::invalid_argument("hyperparameter space has no dimensions");
    for (const auto& d : dims) {
        if (!(d.lower < d.upper) || !std::isfinite(d.lower) || !std::isfinite(d.upper)) {
            throw std::invalid_argument("dimension " + d.name + " needs finite lower < upper");
        }
        if (d.log_scale && !(d.lower > 0.0)) {
            throw std::invalid_argument("log-scaled dimension " + d.name + " needs positive bounds");
        }
    }
}

std::vector<double> HyperSpace::to_unit(std::span<const double> lambda) const {
    if (lambda.size() != dims.size()) throw std::invalid_argument("point has the wrong dimension");
    std::vector<double> u(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto& d = dims[i];
        u[i] = d.log_scale ? std::log(lambda[i] / d.lower) / std::log(d.upper / d.lower)
                           : (lambda[i] - d.lower) / (d.upper - d.lower);
    }
    return u;
}

std::vector<double> HyperSpace::from_unit(std::span<const double> u) const {
    if (u.size() != dims.size()) throw std::invalid_argument("point has the wrong dimension");
    std::vector<double> lambda(dims.size());
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto& d = dims[i];
        lambda[i] = d.log_scale ? d.lower * std::pow(d.upper / d.lower, u[i]) : d.lower + u[i] * (d.upper - d.lower);
    }
    return lambda;
}

// ---------------------------------------------------------------------------

double validation_loss(const Ensemble& ensemble, const TrainingSet& val, const Loss& loss) {
    if (val.size() == 0) throw std::invalid_argument("validation set is empty");
    const std::size_t O = ensemble.spec().outputs;
    if (val.outputs != O) throw std::invalid_argument("validation set output count mismatch");
    const std::vector<double> preds = member_predictions(ensemble, val.inputs);
    const std::size_t n = val.size(), J = ensemble.size();
    std::vector<double> grad(O);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double per_point = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            per_point += loss_and_grad(loss, std::span<const double>(preds).subspan((j * n + i) * O, O), val.target(i),
                                       grad.data());
        }
        total += per_point / static_cast<double>(J);
    }
    return total / static_cast<double>(n);
}

RegGrid RegGrid::planar(double x0, double x1, std::size_t nx, double y0, double y1, std::size_t ny, double time) {
    if (nx < 2 || ny < 2) throw std::invalid_argument("grid needs at least two nodes per axis");
    RegGrid g;
    g.kind = Kind::Planar;
    g.time = time;
    for (std::size_t i = 0; i < nx; ++i) g.axis0.push_back(x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(nx - 1));
    for (std::size_t j = 0; j < ny; ++j) g.axis1.push_back(y0 + (y1 - y0) * static_cast<double>(j) / static_cast<double>(ny - 1));
    g.validate();
    return g;
}

RegGrid RegGrid::sphere(std::size_t n_lat, std::size_t n_lon, double time) {
    if (n_lat < 2 || n_lon < 2) throw std::invalid_argument("grid needs at least two nodes per axis");
    RegGrid g;
    g.kind = Kind::Sphere;
    g.time = time;
    const double pi = std::numbers::pi;
    for (std::size_t i = 0; i < n_lat; ++i) {
        g.axis0.push_back(-0.5 * pi + pi * static_cast<double>(i) / static_cast<double>(n_lat - 1));
    }
    for (std::size_t j = 0; j < n_lon; ++j) {
        g.axis1.push_back(-pi + 2.0 * pi * static_cast<double>(j) / static_cast<double>(n_lon));
    }
    g.validate();
    return g;
}

void RegGrid::validate() const {
    if (axis0.size() < 2 || axis1.size() < 2) throw std::invalid_argument("grid needs at least two nodes per axis");
    for (const auto* axis : {&axis0, &axis1}) {
        for (std::size_t i = 1; i < axis->size(); ++i) {
            if (!((*axis)[i] > (*axis)[i - 1])) throw std::invalid_argument("grid coordinates must be strictly increasing");
        }
    }
    if (kind == Kind::Sphere) {
        const double half_pi = 0.5 * std::numbers::pi;
        if (axis0.front() < -half_pi - 1e-12 || axis0.back() > half_pi + 1e-12) {
            throw std::invalid_argument("latitudes must lie in [-pi/2, pi/2]");
        }
        if (axis1.back() - axis1.front() >= 2.0 * std::numbers::pi) {
            throw std::invalid_argument("longitudes must span less than one period");
        }
    }
}

std::vector<SpaceTimePoint> RegGrid::nodes() const {
    std::vector<SpaceTimePoint> pts;
    pts.reserve(axis0.size() * axis1.size());
    for (double a : axis0) {
        for (double b : axis1) {
            SpaceTimePoint p;
            p.t = time;
            if (kind == Kind::Planar) {
                p.x = {a, b, 0.0};
            } else {
                p.x = {std::cos(a) * std::cos(b), std::cos(a) * std::sin(b), std::sin(a)};
            }
            pts.push_back(p);
        }
    }
    return pts;
}

namespace {

// Trapezoid weights of a strictly increasing axis restricted to [lo, hi).
std::vector<double> trapezoid_weights(const std::vector<double>& axis, std::size_t lo, std::size_t hi) {
    std::vector<double> w(axis.size(), 0.0);
    for (std::size_t i = lo; i + 1 < hi; ++i) {
        const double h = axis[i + 1] - axis[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

// Central difference along an axis, one-sided at the ends.
double axis_derivative(const std::vector<double>& axis, std::size_t i, double f_prev, double f_here, double f_next) {
    const std::size_t n = axis.size();
    if (i == 0) return (f_next - f_here) / (axis[1] - axis[0]);
    if (i + 1 == n) return (f_here - f_prev) / (axis[n - 1] - axis[n - 2]);
    return (f_next - f_prev) / (axis[i + 1] - axis[i - 1]);
}

}  // namespace

double functional_reg(const FieldFn& mean_fn, const RegGrid& grid) {
    grid.validate();
    const std::size_t n0 = grid.axis0.size(), n1 = grid.axis1.size();
    const std::vector<SpaceTimePoint> pts = grid.nodes();
    std::vector<double> f(pts.size());
    mean_fn(pts, f);
    auto at = [&](std::size_t i, std::size_t j) { return f[i * n1 + j]; };

    if (grid.kind == RegGrid::Kind::Planar) {
        const auto w0 = trapezoid_weights(grid.axis0, 0, n0);
        const auto w1 = trapezoid_weights(grid.axis1, 0, n1);
        double total = 0.0;
        for (std::size_t i = 0; i < n0; ++i) {
            for (std::size_t j = 0; j < n1; ++j) {
                const double fx = axis_derivative(grid.axis0, i, i > 0 ? at(i - 1, j) : 0.0, at(i, j),
                                                  i + 1 < n0 ? at(i + 1, j) : 0.0);
                const double fy = axis_derivative(grid.axis1, j, j > 0 ? at(i, j - 1) : 0.0, at(i, j),
                                                  j + 1 < n1 ? at(i, j + 1) : 0.0);
                total += w0[i] * w1[j] * (fx * fx + fy * fy);
            }
        }
        return total;
    }

    // Sphere: rows near the poles are excluded from the quadrature but
    // still feed the latitude differences of their neighbours.
    const double limit = 0.5 * std::numbers::pi - grid.polar_exclusion;
    std::size_t lo = 0, hi = n0;
    while (lo < n0 && grid.axis0[lo] < -limit) ++lo;
    while (hi > lo && grid.axis0[hi - 1] > limit) --hi;
    if (hi - lo < 2) throw std::invalid_argument("grid has fewer than two rows away from the poles");
    const auto w0 = trapezoid_weights(grid.axis0, lo, hi);
    const double dphi = 2.0 * std::numbers::pi / static_cast<double>(n1);
    double total = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        const double c = std::cos(grid.axis0[i]);
        double row = 0.0;
        for (std::size_t j = 0; j < n1; ++j) {
            const double ft = axis_derivative(grid.axis0, i, i > 0 ? at(i - 1, j) : 0.0, at(i, j),
                                              i + 1 < n0 ? at(i + 1, j) : 0.0);
            const double fp = (at(i, (j + 1) % n1) - at(i, (j + n1 - 1) % n1)) / (2.0 * dphi);
            row += ft * ft + fp * fp / (c * c);
        }
        total += w0[i] * c * row * dphi;
    }
    return total;
}

FieldFn ensemble_mean_fn(const Ensemble& ensemble) {
    ensemble.validate();
    if (ensemble.spec().outputs != 1) throw std::invalid_argument("the regularizer needs a scalar-output model");
    return [&ensemble](std::span<const SpaceTimePoint> points, std::span<double> values) {
        const PredictiveSummary s = ensemble_predict(ensemble, points);
        std::copy(s.mean.begin(), s.mean.end(), values.begin());
    };
}

double combined_objective(const Ensemble& ensemble, const TrainingSet& val, const Loss& loss, const RegGrid& grid,
                          double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in [0, 1)");
    const double lv = validation_loss(ensemble, val, loss);
    if (alpha == 0.0) return lv;
    return (1.0 - alpha) * lv + alpha * functional_reg(ensemble_mean_fn(ensemble), grid);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> latin_hypercube(std::size_t n, const HyperSpace& space, std::uint64_t seed) {
    space.validate();
    if (n == 0) throw std::invalid_argument("design needs at least one point");
    Rng rng(derive_seed(seed, "lhs"));
    const std::size_t d = space.size();
    std::vector<std::vector<double>> unit(n, std::vector<double>(d));
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < d; ++k) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        for (std::size_t i = 0; i < n; ++i) {
            unit[i][k] = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
        }
    }
    std::vector<std::vector<double>> out;
    out.reserve(n);
    for (const auto& u : unit) out.push_back(space.from_unit(u));
    return out;
}

namespace {

double matern52(std::span<const double> a, std::span<const double> b, double ell) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    const double r = std::sqrt(d2) / ell;
    const double s5 = std::sqrt(5.0) * r;
    return (1.0 + s5 + 5.0 * r * r / 3.0) * std::exp(-s5);
}

// In-place lower Cholesky of a row-major n x n matrix; false if not PD.
bool cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0)) return false;
        const double l = std::sqrt(d);
        a[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / l;
        }
        for (std::size_t k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
    }
    return true;
}

void forward_solve(const std::vector<double>& L, std::size_t n, std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= L[i * n + k] * b[k];
        b[i] = s / L[i * n + i];
    }
}

void backward_solve(const std::vector<double>& L, std::size_t n, std::vector<double>& b) {
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= L[k * n + i] * b[k];
        b[i] = s / L[i * n + i];
    }
}

struct Factorization {
    std::vector<double> chol;
    double jitter = 0.0;
};

Factorization factor(const std::vector<std::vector<double>>& x, double ell) {
    const std::size_t n = x.size();
    for (double jitter = 1e-6; jitter <= 1e-2 * (1.0 + 1e-9); jitter *= 10.0) {
        std::vector<double> K(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) K[i * n + j] = matern52(x[i], x[j], ell);
            K[i * n + i] += jitter;
        }
        if (cholesky(K, n)) return {std::move(K), jitter};
    }
    throw std::runtime_error("surrogate covariance is singular even after jitter escalation");
}

}  // namespace

GpSurrogate::GpSurrogate(const HyperSpace& space, std::span<const Evaluation> evals) : space_(space) {
    space.validate();
    if (evals.size() < 2) throw std::invalid_argument("surrogate needs at least two evaluations");
    d_ = space.size();
    const std::size_t n = evals.size();

    // Failed evaluations take the worst finite value so the design stays intact.
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& e : evals) {
        if (std::isfinite(e.objective)) worst = std::max(worst, e.objective);
    }
    if (!std::isfinite(worst)) worst = 0.0;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::isfinite(evals[i].objective) ? evals[i].objective : worst;
        x_.push_back(space.to_unit(evals[i].lambda));
    }
    y_mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : y) ss += (v - y_mean_) * (v - y_mean_);
    y_std_ = std::sqrt(ss / static_cast<double>(n));
    if (!(y_std_ > 0.0)) y_std_ = 1.0;
    for (double& v : y) v = (v - y_mean_) / y_std_;

    // Leave-one-out residuals: r_i = [K^-1 y]_i / [K^-1]_ii.
    double best_err = std::numeric_limits<double>::infinity();
    for (double ell : {0.1, 0.2, 0.5, 1.0}) {
        Factorization f;
        try {
            f = factor(x_, ell);
        } catch (const std::runtime_error&) {
            continue;
        }
        std::vector<double> a = y;
        forward_solve(f.chol, n, a);
        backward_solve(f.chol, n, a);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> e(n, 0.0);
            e[i] = 1.0;
            forward_solve(f.chol, n, e);
            backward_solve(f.chol, n, e);
            const double r = a[i] / e[i];
            err += r * r;
        }
        if (err < best_err) {
            best_err = err;
            lengthscale_ = ell;
            jitter_ = f.jitter;
            chol_ = std::move(f.chol);
            alpha_ = std::move(a);
        }
    }
    if (chol_.empty()) throw std::runtime_error("surrogate covariance is singular even after jitter escalation");
}

SurrogatePrediction GpSurrogate::predict_unit(std::span<const double> u) const {
    if (u.size() != d_) throw std::invalid_argument("query has the wrong dimension");
    const std::size_t n = x_.size();
    std::vector<double> k(n);
    for (std::size_t i = 0; i < n; ++i) k[i] = matern52(u, x_[i], lengthscale_);
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += k[i] * alpha_[i];
    forward_solve(chol_, n, k);
    double var = 1.0;
    for (double v : k) var -= v * v;
    var = std::max(var, 0.0);
    return {y_mean_ + y_std_ * mu, y_std_ * std::sqrt(var)};
}

SurrogatePrediction GpSurrogate::predict(std::span<const double> lambda) const {
    return predict_unit(space_.to_unit(lambda));
}

SurrogatePrediction surrogate_fit_predict(const HyperSpace& space, std::span<const Evaluation> evals,
                                          std::span<const double> query) {
    return GpSurrogate(space, evals).predict(query);
}

double expected_improvement(double mu, double sigma, double best) {
    if (!(sigma > 0.0)) return std::max(best - mu, 0.0);
    const double z = (best - mu) / sigma;
    return std::max(0.0, (best - mu) * normal_cdf(z) + sigma * normal_pdf(z));
}

namespace {

constexpr std::size_t kRestarts = 100;
constexpr std::size_t kLocalSteps = 20;

std::vector<double> propose(const GpSurrogate& gp, double best, std::size_t d, Rng& rng) {
    std::vector<double> best_u;
    double best_ei = -1.0;
    std::vector<double> u(d), cand(d);
    for (std::size_t r = 0; r < kRestarts; ++r) {
        for (double& c : u) c = rng.uniform();
        auto p = gp.predict_unit(u);
        double ei = expected_improvement(p.mean, p.std, best);
        double step = 0.1;
        for (std::size_t s = 0; s < kLocalSteps; ++s) {
            for (std::size_t k = 0; k < d; ++k) cand[k] = std::clamp(u[k] + step * rng.normal(), 0.0, 1.0);
            p = gp.predict_unit(cand);
            const double e = expected_improvement(p.mean, p.std, best);
            if (e > ei) {
                ei = e;
                u = cand;
            } else {
                step *= 0.7;
            }
        }
        if (ei > best_ei) {
            best_ei = ei;
            best_u = u;
        }
    }
    return best_u;
}

}  // namespace

BoResult bo_loop(const Objective& objective, const HyperSpace& space, std::size_t n_init, std::size_t n_iter,
                 std::uint64_t seed) {
    space.validate();
    if (n_init == 0) throw std::invalid_argument("BO needs at least one initial point");
    BoResult result;
    BoState& st = result.state;
    double incumbent = std::numeric_limits<double>::infinity();

    auto evaluate = [&](const std::vector<double>& lambda) {
        double y;
        try {
            y = objective(lambda);
        } catch (const std::exception&) {
            y = std::numeric_limits<double>::infinity();
        }
        if (std::isnan(y)) y = std::numeric_limits<double>::infinity();
        st.evaluations.push_back({lambda, y});
        if (y < incumbent || st.evaluations.size() == 1) {
            if (y < incumbent) incumbent = y;
            st.best_index = st.evaluations.size() - 1;
        }
        st.incumbent.push_back(incumbent);
    };

    for (const auto& lambda : latin_hypercube(n_init, space, seed)) evaluate(lambda);

    Rng rng(derive_seed(seed, "acquisition"));
    for (std::size_t it = 0; it < n_iter; ++it) {
        std::size_t finite = 0;
        for (const auto& e : st.evaluations) finite += std::isfinite(e.objective) ? 1 : 0;
        std::vector<double> u(space.size());
        bool proposed = false;
        if (st.evaluations.size() >= 2 && finite >= 1) {
            try {
                const GpSurrogate gp(space, st.evaluations);
                u = propose(gp, incumbent, space.size(), rng);
                proposed = true;
            } catch (const std::runtime_error&) {
                proposed = false;
            }
        }
        if (!proposed) {
            for (double& c : u) c = rng.uniform();
        }
        evaluate(space.from_unit(u));
    }
    result.best_lambda = st.best().lambda;
    return result;
}

void write_bo_trace(std::ostream& out, const HyperSpace& space, const BoState& state) {
    out << "iter";
    for (const auto& d : space.dims) out << ',' << d.name;
    out << ",objective,incumbent\n";
    for (std::size_t i = 0; i < state.evaluations.size(); ++i) {
        out << i;
        for (double v : state.evaluations[i].lambda) out << ',' << format_double(v);
        out << ',' << format_double(state.evaluations[i].objective) << ',' << format_double(state.incumbent[i]) << '\n';
    }
}

}  // namespace drf
