#pragma once
// Deep random-feature network: frozen random-feature layers alternating
// with trainable Gaussian-initialized mixing matrices. A spatial tower
// and a temporal tower each map to a B-dimensional bottleneck; a linear
// combiner maps the concatenated 2B-vector to the O outputs.

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "drf/features.hpp"

namespace drf {

enum class InputSpace { Planar, Sphere };

struct NetworkSpec {
    InputSpace space = InputSpace::Planar;
    std::size_t input_dim = 2;  // planar only, 1..3
    std::size_t spatial_depth = 1;
    std::size_t temporal_depth = 1;
    std::size_t bottleneck = 128;
    std::size_t hidden = 1000;
    std::size_t outputs = 1;
    // First spatial layer; also the spherical summand of additive layers.
    KernelSpec spatial_kernel = KernelSpec::matern(1.5, 1.0);
    // Euclidean part of spatial layers 2..L_x.
    KernelSpec skip_kernel = KernelSpec::matern(1.5, 1.0);
    KernelSpec temporal_kernel = KernelSpec::matern(1.5, 1.0);
    bool skip_connections = true;
    double dropout_rate = 0.0;

    std::size_t spatial_input_dim() const { return space == InputSpace::Sphere ? 3 : input_dim; }
    // Bottleneck coordinates covered by one dropout mask.
    std::size_t mask_size() const { return (spatial_depth + temporal_depth) * bottleneck; }
    void validate() const;

    bool operator==(const NetworkSpec&) const = default;
};

// Planar points use x[0..input_dim); spherical points are unit 3-vectors.
struct SpaceTimePoint {
    Vec3 x{};
    double t = 0.0;
};

using FeatureLayer = std::variant<EuclideanFeatureLayer, SphericalFeatureLayer, AdditiveFeatureLayer>;

// Location of one trainable matrix inside the flat weight vector.
struct MatrixRef {
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
};

class DrfModel {
public:
    // Validates every shape against the spec.
    DrfModel(NetworkSpec spec, std::uint64_t seed, std::vector<FeatureLayer> spatial_layers,
             std::vector<FeatureLayer> temporal_layers, std::vector<double> weights);

    const NetworkSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<FeatureLayer>& spatial_layers() const { return spatial_layers_; }
    const std::vector<FeatureLayer>& temporal_layers() const { return temporal_layers_; }

    // All trainable arrays, laid out as spatial mixing 1..L_x, temporal
    // mixing 1..L_t, output combiner (O x 2B).
    std::span<const double> weights() const { return weights_; }
    // Invalidates traces produced before the call.
    std::span<double> mutable_weights();
    std::size_t num_weights() const { return weights_.size(); }

    MatrixRef spatial_mixing(std::size_t layer) const { return spatial_refs_.at(layer); }
    MatrixRef temporal_mixing(std::size_t layer) const { return temporal_refs_.at(layer); }
    MatrixRef output_weights() const { return output_ref_; }

    std::uint64_t version() const { return version_; }

private:
    NetworkSpec spec_;
    std::uint64_t seed_;
    std::vector<FeatureLayer> spatial_layers_;
    std::vector<FeatureLayer> temporal_layers_;
    std::vector<double> weights_;
    std::vector<MatrixRef> spatial_refs_;
    std::vector<MatrixRef> temporal_refs_;
    MatrixRef output_ref_;
    std::uint64_t version_;
};

// Layout of the flat weight vector for a spec.
std::size_t weight_count(const NetworkSpec& spec);

DrfModel init_model(const NetworkSpec& spec, std::uint64_t seed);

// Cached per-sample activations of one batch, consumed by backward().
class ForwardTrace {
public:
    std::size_t samples() const { return samples_; }
    std::uint64_t model_version() const { return model_version_; }

private:
    friend class NetworkEvaluator;
    std::uint64_t model_version_ = 0;
    std::size_t samples_ = 0;
    std::size_t stride_ = 0;
    bool masked_ = false;
    std::vector<double> cache_;
    std::vector<double> mask_factors_;
};

struct ForwardResult {
    std::vector<double> output;  // samples x O
    ForwardTrace trace;
};

// keep: optional dropout flags, samples x spec.mask_size(); kept
// coordinates are scaled by 1 / (1 - p), dropped ones are zeroed.
ForwardResult forward(const DrfModel& model, std::span<const SpaceTimePoint> points,
                      std::span<const std::uint8_t> keep = {});
ForwardResult forward(const DrfModel& model, const SpaceTimePoint& point,
                      std::span<const std::uint8_t> keep = {});

// Gradient of sum_n <dl_dout[n], f(X_n)> with respect to every trainable
// weight, in the layout of DrfModel::weights(). dl_dout is samples x O.
// Throws std::logic_error if the model changed since the forward pass.
std::vector<double> backward(const DrfModel& model, const ForwardTrace& trace,
                             std::span<const double> dl_dout);

// Outputs without retaining a trace, samples x O, order preserving.
std::vector<double> predict_batch(const DrfModel& model, std::span<const SpaceTimePoint> points);

// Reusable single-sample forward/backward with fixed scratch buffers.
// Used by the trainers; not thread safe.
class NetworkEvaluator {
public:
    explicit NetworkEvaluator(const NetworkSpec& spec);

    std::size_t cache_stride() const { return stride_; }

    // Evaluates one point; out has O entries. cache (cache_stride entries)
    // may be null when no backward pass follows. mask_factors, when
    // non-null, has spec.mask_size() entries.
    void forward(const DrfModel& model, const SpaceTimePoint& point, const double* mask_factors,
                 double* cache, double* out);

    // Accumulates d<dout, f>/dweights into grad.
    void backward(const DrfModel& model, const double* cache, const double* mask_factors,
                  const double* dout, double* grad);

    // Forward using an explicit weight vector (same layout) instead of
    // model.weights(); used for sampled weights.
    void forward_with(const DrfModel& model, std::span<const double> weights,
                      const SpaceTimePoint& point, const double* mask_factors, double* cache,
                      double* out);
    void backward_with(const DrfModel& model, std::span<const double> weights, const double* cache,
                       const double* mask_factors, const double* dout, double* grad);

    static ForwardTrace make_trace(const DrfModel& model, std::size_t samples, bool masked);
    static double* trace_cache(ForwardTrace& trace, std::size_t sample);
    static double* trace_mask(ForwardTrace& trace, std::size_t sample);
    static const double* trace_cache(const ForwardTrace& trace, std::size_t sample);
    static const double* trace_mask(const ForwardTrace& trace, std::size_t sample);
    static bool trace_masked(const ForwardTrace& trace) { return trace.masked_; }

private:
    struct LayerPlan {
        std::size_t feat = 0;  // offsets into the per-sample cache
        std::size_t sin = 0;
        std::size_t act = 0;
        bool has_sin = false;
    };
    void forward_tower(const DrfModel& model, std::span<const double> weights, bool spatial,
                       const SpaceTimePoint& point, const double* mask_factors, double* cache);
    void backward_tower(const DrfModel& model, std::span<const double> weights, bool spatial,
                        const double* cache, const double* mask_factors, double* d_act,
                        double* grad);

    NetworkSpec spec_;
    std::vector<LayerPlan> spatial_plan_;
    std::vector<LayerPlan> temporal_plan_;
    std::size_t stride_ = 0;
    std::vector<double> input_;
    std::vector<double> d_feat_;
    std::vector<double> d_input_;
    std::vector<double> d_act_;
    std::vector<double> d_concat_;
    std::vector<double> concat_;
};

// Converts keep flags to the inverted-dropout factors applied in forward.
std::vector<double> mask_factors(const NetworkSpec& spec, std::span<const std::uint8_t> keep);

// Samples keep flags (1 = keep) with drop probability spec.dropout_rate.
std::vector<std::uint8_t> sample_dropout_mask(const NetworkSpec& spec, std::size_t samples,
                                              std::uint64_t seed);

}  // namespace drf
