#pragma once
// Random feature maps whose inner products approximate stationary kernels
// on R^D (random Fourier features) and on the two-sphere (Legendre
// features with multinomially sampled degrees), plus exact kernel values
// used as test oracles.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace drf {

using Vec3 = std::array<double, 3>;

inline constexpr int kDefaultTruncation = 30;

enum class KernelFamily { SquaredExponential, Matern, SphereMatern, SphereHeat };

struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    // Smoothness; half-integer {1/2, 3/2, 5/2} for planar Matern, any
    // positive value for the spherical Matern.
    double nu = 1.5;
    double lengthscale = 1.0;
    double amplitude = 1.0;
    // Maximum Legendre degree, spherical families only.
    std::optional<int> truncation;

    static KernelSpec squared_exponential(double lengthscale, double amplitude = 1.0);
    static KernelSpec matern(double nu, double lengthscale, double amplitude = 1.0);
    static KernelSpec sphere_matern(double nu, double lengthscale, double amplitude = 1.0,
                                    int truncation = kDefaultTruncation);
    static KernelSpec sphere_heat(double lengthscale, double amplitude = 1.0,
                                  int truncation = kDefaultTruncation);

    bool is_spherical() const {
        return family == KernelFamily::SphereMatern || family == KernelFamily::SphereHeat;
    }
    // Throws std::invalid_argument when an invariant is violated.
    void validate() const;

    bool operator==(const KernelSpec&) const = default;
};

struct EuclideanFeatureLayer {
    std::size_t input_dim = 0;
    std::size_t width = 0;
    std::vector<double> frequencies;  // width x input_dim, row-major
    std::vector<double> phases;       // in [0, 2pi)
    double scale = 0.0;               // sqrt(2 sigma^2 / width)

    // out[h] = scale * cos(w_h . x + b_h). When sin_out is non-empty it
    // receives scale * sin(w_h . x + b_h), which backprop needs.
    void evaluate(std::span<const double> x, std::span<double> out,
                  std::span<double> sin_out = {}) const;

    void validate() const;
    bool operator==(const EuclideanFeatureLayer&) const = default;
};

struct SphericalFeatureLayer {
    int max_degree = 0;
    std::vector<int> degrees;
    std::vector<Vec3> anchors;   // unit vectors
    std::vector<double> scales;  // sqrt(c_degree / width)

    std::size_t width() const { return degrees.size(); }
    // out[m] = scales[m] * P_{degrees[m]}(<s, anchors[m]>); s must already
    // be a unit vector.
    void evaluate_unit(const Vec3& s, std::span<double> out) const;

    void validate() const;
    bool operator==(const SphericalFeatureLayer&) const = default;
};

// Features of the sum kernel k_R^B(h, h') + k_S2(s, s').
struct AdditiveFeatureLayer {
    EuclideanFeatureLayer euclidean;
    SphericalFeatureLayer spherical;

    std::size_t width() const { return euclidean.width; }
    void evaluate_unit(std::span<const double> h, const Vec3& s, std::span<double> out,
                       std::span<double> sin_out = {}) const;

    void validate() const;
    bool operator==(const AdditiveFeatureLayer&) const = default;
};

EuclideanFeatureLayer sample_frequencies(const KernelSpec& spec, std::size_t input_dim,
                                         std::size_t width, std::uint64_t seed);

std::vector<double> euclid_features(const EuclideanFeatureLayer& layer,
                                    std::span<const double> x);

// Legendre polynomial P_n(z) by the three-term recurrence.
double legendre(int n, double z);

// Great-circle angle in [0, pi]; inputs are renormalized.
double geodesic(const Vec3& a, const Vec3& b);

// Probability of each degree 0..J under the spectral measure.
std::vector<double> spectral_weights(const KernelSpec& spec);

// c_w = sigma^2 (2w + 1)^2 / (4 pi)
double spherical_scale_constant(const KernelSpec& spec, int degree);

SphericalFeatureLayer sample_spherical_layer(const KernelSpec& spec, std::size_t width,
                                             std::uint64_t seed);

// Throws std::invalid_argument unless | |s| - 1 | <= 1e-6.
std::vector<double> spherical_features(const SphericalFeatureLayer& layer, const Vec3& s);

AdditiveFeatureLayer sample_additive_layer(const KernelSpec& euclidean_spec,
                                           const KernelSpec& spherical_spec,
                                           std::size_t input_dim, std::size_t width,
                                           std::uint64_t seed);

std::vector<double> additive_features(const AdditiveFeatureLayer& layer,
                                      std::span<const double> h, const Vec3& s);

// Truncated Mercer sum sigma^2 sum_j p_j (2j+1)/(4pi) P_j(cos_angle), which
// is exactly the expectation of the random spherical feature inner product.
double sphere_mercer_sum(const KernelSpec& spec, double cos_angle);

// E |phi(s)|^2 of the raw spherical features, i.e. sphere_mercer_sum at
// cos_angle = 1. Dividing feature inner products by this and multiplying
// by sigma^2 normalizes the spherical kernel to k(s, s) = sigma^2.
double sphere_feature_variance(const KernelSpec& spec);

// Exact kernel value. Planar families take points of equal dimension;
// spherical families take 3-vectors and return the Mercer sum normalized
// so that k(s, s) = sigma^2.
double kernel_oracle(const KernelSpec& spec, std::span<const double> a,
                     std::span<const double> b);

}  // namespace drf
