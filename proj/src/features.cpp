#include "drf/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "drf/rng.hpp"
#include "drf/simd/kernels.hpp"

namespace drf {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFourPi = 4.0 * std::numbers::pi;
constexpr double kUnitTolerance = 1e-6;

bool is_supported_half_integer(double nu) { return nu == 0.5 || nu == 1.5 || nu == 2.5; }

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 require_unit(const Vec3& s) {
    const double n = norm3(s);
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
        throw std::invalid_argument("spherical input is not a unit vector (norm " +
                                    std::to_string(n) + ")");
    }
    return {s[0] / n, s[1] / n, s[2] / n};
}

Vec3 to_vec3(std::span<const double> v) {
    if (v.size() != 3) throw std::invalid_argument("spherical kernel expects 3-vectors");
    return {v[0], v[1], v[2]};
}

// P_0..P_n at z, written into out (size n + 1).
void legendre_all(int n, double z, std::span<double> out) {
    out[0] = 1.0;
    if (n >= 1) out[1] = z;
    for (int k = 2; k <= n; ++k) {
        out[k] = ((2.0 * k - 1.0) * z * out[k - 1] - (k - 1.0) * out[k - 2]) / k;
    }
}

double legendre_unchecked(int n, double z) {
    if (n == 0) return 1.0;
    double p0 = 1.0;
    double p1 = z;
    for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

}  // namespace

KernelSpec KernelSpec::squared_exponential(double lengthscale, double amplitude) {
    KernelSpec s;
    s.family = KernelFamily::SquaredExponential;
    s.lengthscale = lengthscale;
    s.amplitude = amplitude;
    return s;
}

KernelSpec KernelSpec::matern(double nu, double lengthscale, double amplitude) {
    KernelSpec s;
    s.family = KernelFamily::Matern;
    s.nu = nu;
    s.lengthscale = lengthscale;
    s.amplitude = amplitude;
    return s;
}

KernelSpec KernelSpec::sphere_matern(double nu, double lengthscale, double amplitude,
                                     int truncation) {
    KernelSpec s;
    s.family = KernelFamily::SphereMatern;
    s.nu = nu;
    s.lengthscale = lengthscale;
    s.amplitude = amplitude;
    s.truncation = truncation;
    return s;
}

KernelSpec KernelSpec::sphere_heat(double lengthscale, double amplitude, int truncation) {
    KernelSpec s;
    s.family = KernelFamily::SphereHeat;
    s.lengthscale = lengthscale;
    s.amplitude = amplitude;
    s.truncation = truncation;
    return s;
}

void KernelSpec::validate() const {
    if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
        throw std::invalid_argument("kernel lengthscale must be positive");
    }
    // Zero amplitude switches a summand off; negative is meaningless.
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
        throw std::invalid_argument("kernel amplitude must be non-negative");
    }
    if (is_spherical()) {
        if (!truncation || *truncation < 0) {
            throw std::invalid_argument("spherical kernel needs a truncation degree >= 0");
        }
        if (family == KernelFamily::SphereMatern && !(nu > 0.0)) {
            throw std::invalid_argument("spherical Matern smoothness must be positive");
        }
    } else {
        if (truncation) throw std::invalid_argument("truncation is only valid for spherical kernels");
        if (family == KernelFamily::Matern && !is_supported_half_integer(nu)) {
            throw std::invalid_argument("planar Matern smoothness must be 1/2, 3/2 or 5/2");
        }
    }
}

// ---------------------------------------------------------------------------
// Euclidean random Fourier features

void EuclideanFeatureLayer::evaluate(std::span<const double> x, std::span<double> out,
                                     std::span<double> sin_out) const {
    if (x.size() != input_dim) {
        throw std::invalid_argument("feature input has dimension " + std::to_string(x.size()) +
                                    ", layer expects " + std::to_string(input_dim));
    }
    if (out.size() != width || (!sin_out.empty() && sin_out.size() != width)) {
        throw std::invalid_argument("feature output buffer has the wrong size");
    }
    const auto& k = simd::kernels();
    k.gemv(frequencies.data(), width, input_dim, x.data(), out.data());
    for (std::size_t h = 0; h < width; ++h) out[h] += phases[h];
    k.cos_sin(out.data(), width, scale, out.data(), sin_out.empty() ? nullptr : sin_out.data());
}

void EuclideanFeatureLayer::validate() const {
    if (input_dim == 0 || width == 0) throw std::invalid_argument("empty Euclidean feature layer");
    if (frequencies.size() != width * input_dim || phases.size() != width) {
        throw std::invalid_argument("Euclidean feature layer has inconsistent shapes");
    }
    for (double b : phases) {
        if (!(b >= 0.0 && b < kTwoPi)) throw std::invalid_argument("phase outside [0, 2pi)");
    }
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("invalid feature scale");
}

EuclideanFeatureLayer sample_frequencies(const KernelSpec& spec, std::size_t input_dim,
                                         std::size_t width, std::uint64_t seed) {
    spec.validate();
    if (spec.is_spherical()) {
        throw std::invalid_argument("sample_frequencies needs a planar kernel family");
    }
    if (input_dim == 0 || width == 0) {
        throw std::invalid_argument("sample_frequencies needs positive dimension and width");
    }
    EuclideanFeatureLayer layer;
    layer.input_dim = input_dim;
    layer.width = width;
    layer.frequencies.resize(width * input_dim);
    layer.phases.resize(width);
    layer.scale = std::sqrt(2.0 * spec.amplitude * spec.amplitude / static_cast<double>(width));

    Rng rng(seed);
    const double inv_ell = 1.0 / spec.lengthscale;
    const double dof = 2.0 * spec.nu;
    for (std::size_t h = 0; h < width; ++h) {
        // Multivariate t: a Gaussian row divided by sqrt(chi^2_dof / dof).
        double t_factor = 1.0;
        if (spec.family == KernelFamily::Matern) t_factor = 1.0 / std::sqrt(rng.chi_squared(dof) / dof);
        for (std::size_t d = 0; d < input_dim; ++d) {
            layer.frequencies[h * input_dim + d] = rng.normal() * inv_ell * t_factor;
        }
        double b = rng.uniform() * kTwoPi;
        if (b >= kTwoPi) b = 0.0;
        layer.phases[h] = b;
    }
    return layer;
}

std::vector<double> euclid_features(const EuclideanFeatureLayer& layer,
                                    std::span<const double> x) {
    std::vector<double> out(layer.width);
    layer.evaluate(x, out);
    return out;
}

// ---------------------------------------------------------------------------
// Spherical features

double legendre(int n, double z) {
    if (n < 0) throw std::invalid_argument("legendre degree must be non-negative");
    if (!(std::abs(z) <= 1.0 + 1e-12)) throw std::invalid_argument("legendre argument outside [-1, 1]");
    return legendre_unchecked(n, std::clamp(z, -1.0, 1.0));
}

double geodesic(const Vec3& a, const Vec3& b) {
    const double na = norm3(a);
    const double nb = norm3(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("geodesic of a zero vector");
    const Vec3 u{a[0] / na, a[1] / na, a[2] / na};
    const Vec3 v{b[0] / nb, b[1] / nb, b[2] / nb};
    // atan2 form of arccos(clamp(<u, v>)): same angle, no loss near 0 and pi.
    const Vec3 c{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    return std::atan2(norm3(c), std::clamp(dot3(u, v), -1.0, 1.0));
}

std::vector<double> spectral_weights(const KernelSpec& spec) {
    spec.validate();
    if (!spec.is_spherical()) throw std::invalid_argument("spectral_weights needs a spherical kernel");
    const int J = *spec.truncation;
    const double ell2 = spec.lengthscale * spec.lengthscale;
    std::vector<double> logw(J + 1);
    for (int j = 0; j <= J; ++j) {
        const double lambda = static_cast<double>(j) * (j + 1);
        logw[j] = spec.family == KernelFamily::SphereMatern
                      ? -(spec.nu + 1.0) * std::log(2.0 * spec.nu / ell2 + lambda)
                      : -0.5 * ell2 * lambda;
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    std::vector<double> w(J + 1);
    double total = 0.0;
    for (int j = 0; j <= J; ++j) total += (w[j] = std::exp(logw[j] - top));
    for (double& x : w) x /= total;
    return w;
}

double spherical_scale_constant(const KernelSpec& spec, int degree) {
    const double m = 2.0 * degree + 1.0;
    return spec.amplitude * spec.amplitude * m * m / kFourPi;
}

void SphericalFeatureLayer::evaluate_unit(const Vec3& s, std::span<double> out) const {
    if (out.size() != width()) throw std::invalid_argument("feature output buffer has the wrong size");
    for (std::size_t m = 0; m < degrees.size(); ++m) {
        const double z = std::clamp(dot3(s, anchors[m]), -1.0, 1.0);
        out[m] = scales[m] * legendre_unchecked(degrees[m], z);
    }
}

void SphericalFeatureLayer::validate() const {
    const std::size_t M = degrees.size();
    if (M == 0) throw std::invalid_argument("empty spherical feature layer");
    if (anchors.size() != M || scales.size() != M) {
        throw std::invalid_argument("spherical feature layer has inconsistent shapes");
    }
    for (std::size_t m = 0; m < M; ++m) {
        if (degrees[m] < 0 || degrees[m] > max_degree) throw std::invalid_argument("degree out of range");
        if (std::abs(norm3(anchors[m]) - 1.0) > 1e-9) throw std::invalid_argument("anchor not unit norm");
        if (!(scales[m] >= 0.0) || !std::isfinite(scales[m])) throw std::invalid_argument("invalid scale");
    }
}

SphericalFeatureLayer sample_spherical_layer(const KernelSpec& spec, std::size_t width,
                                             std::uint64_t seed) {
    if (width == 0) throw std::invalid_argument("spherical layer width must be positive");
    const std::vector<double> w = spectral_weights(spec);
    SphericalFeatureLayer layer;
    layer.max_degree = *spec.truncation;
    layer.degrees.resize(width);
    layer.anchors.resize(width);
    layer.scales.resize(width);

    Rng rng(seed);
    std::discrete_distribution<int> degree_dist(w.begin(), w.end());
    for (std::size_t m = 0; m < width; ++m) {
        const int deg = degree_dist(rng.engine());
        Vec3 g{};
        double n = 0.0;
        while (n < 1e-12) {
            g = {rng.normal(), rng.normal(), rng.normal()};
            n = norm3(g);
        }
        layer.degrees[m] = deg;
        layer.anchors[m] = {g[0] / n, g[1] / n, g[2] / n};
        layer.scales[m] = std::sqrt(spherical_scale_constant(spec, deg) / static_cast<double>(width));
    }
    return layer;
}

std::vector<double> spherical_features(const SphericalFeatureLayer& layer, const Vec3& s) {
    std::vector<double> out(layer.width());
    layer.evaluate_unit(require_unit(s), out);
    return out;
}

// ---------------------------------------------------------------------------
// Additive features

void AdditiveFeatureLayer::evaluate_unit(std::span<const double> h, const Vec3& s,
                                         std::span<double> out, std::span<double> sin_out) const {
    euclidean.evaluate(h, out, sin_out);
    const std::size_t M = spherical.width();
    for (std::size_t m = 0; m < M; ++m) {
        const double z = std::clamp(dot3(s, spherical.anchors[m]), -1.0, 1.0);
        out[m] += spherical.scales[m] * legendre_unchecked(spherical.degrees[m], z);
    }
}

void AdditiveFeatureLayer::validate() const {
    euclidean.validate();
    spherical.validate();
    if (euclidean.width != spherical.width()) {
        throw std::invalid_argument("additive layer parts have different widths");
    }
}

AdditiveFeatureLayer sample_additive_layer(const KernelSpec& euclidean_spec,
                                           const KernelSpec& spherical_spec,
                                           std::size_t input_dim, std::size_t width,
                                           std::uint64_t seed) {
    AdditiveFeatureLayer layer;
    layer.euclidean = sample_frequencies(euclidean_spec, input_dim, width, derive_seed(seed, 1));
    layer.spherical = sample_spherical_layer(spherical_spec, width, derive_seed(seed, 2));
    return layer;
}

std::vector<double> additive_features(const AdditiveFeatureLayer& layer,
                                      std::span<const double> h, const Vec3& s) {
    std::vector<double> out(layer.width());
    layer.evaluate_unit(h, require_unit(s), out);
    return out;
}

// ---------------------------------------------------------------------------
// Kernel oracles

double sphere_mercer_sum(const KernelSpec& spec, double cos_angle) {
    const std::vector<double> p = spectral_weights(spec);
    const int J = static_cast<int>(p.size()) - 1;
    std::vector<double> P(J + 1);
    legendre_all(J, std::clamp(cos_angle, -1.0, 1.0), P);
    double sum = 0.0;
    for (int j = 0; j <= J; ++j) sum += p[j] * (2.0 * j + 1.0) / kFourPi * P[j];
    return spec.amplitude * spec.amplitude * sum;
}

double sphere_feature_variance(const KernelSpec& spec) { return sphere_mercer_sum(spec, 1.0); }

double kernel_oracle(const KernelSpec& spec, std::span<const double> a,
                     std::span<const double> b) {
    spec.validate();
    const double var = spec.amplitude * spec.amplitude;
    if (spec.is_spherical()) {
        const Vec3 u = to_vec3(a);
        const Vec3 v = to_vec3(b);
        const double c = std::cos(geodesic(u, v));
        if (var == 0.0) return 0.0;
        return var * sphere_mercer_sum(spec, c) / sphere_mercer_sum(spec, 1.0);
    }
    if (a.size() != b.size()) throw std::invalid_argument("kernel_oracle dimension mismatch");
    double r2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) r2 += (a[i] - b[i]) * (a[i] - b[i]);
    const double ell = spec.lengthscale;
    if (spec.family == KernelFamily::SquaredExponential) return var * std::exp(-0.5 * r2 / (ell * ell));
    const double r = std::sqrt(r2) / ell;
    if (spec.nu == 0.5) return var * std::exp(-r);
    if (spec.nu == 1.5) {
        const double q = std::sqrt(3.0) * r;
        return var * (1.0 + q) * std::exp(-q);
    }
    const double q = std::sqrt(5.0) * r;
    return var * (1.0 + q + q * q / 3.0) * std::exp(-q);
}

}  // namespace drf
