#include "drf/network.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "drf/rng.hpp"
#include "drf/simd/kernels.hpp"

namespace drf {
namespace {

std::uint64_t next_version() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

std::size_t layer_input_dim(const NetworkSpec& spec, bool spatial, std::size_t layer) {
    if (layer == 0) return spatial ? spec.spatial_input_dim() : 1;
    if (spatial && spec.space == InputSpace::Sphere) return spec.bottleneck;
    if (!spec.skip_connections) return spec.bottleneck;
    return spec.bottleneck + (spatial ? spec.input_dim : 1);
}

std::size_t layer_width(const FeatureLayer& layer) {
    return std::visit([](const auto& l) -> std::size_t {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, EuclideanFeatureLayer>) return l.width;
        else return l.width();
    }, layer);
}

Vec3 unit_input(const Vec3& s) {
    const double n = std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
    if (!(std::abs(n - 1.0) <= 1e-6)) {
        throw std::invalid_argument("spherical model input is not a unit vector");
    }
    return {s[0] / n, s[1] / n, s[2] / n};
}

const EuclideanFeatureLayer& euclidean_part(const FeatureLayer& layer) {
    if (const auto* e = std::get_if<EuclideanFeatureLayer>(&layer)) return *e;
    return std::get<AdditiveFeatureLayer>(layer).euclidean;
}

}  // namespace

void NetworkSpec::validate() const {
    if (spatial_depth < 1 || temporal_depth < 1) throw std::invalid_argument("network depth must be >= 1");
    if (bottleneck == 0 || hidden == 0 || outputs == 0) throw std::invalid_argument("network widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    spatial_kernel.validate();
    skip_kernel.validate();
    temporal_kernel.validate();
    if (space == InputSpace::Planar) {
        if (input_dim < 1 || input_dim > 3) throw std::invalid_argument("planar input dimension must be 1..3");
        if (spatial_kernel.is_spherical()) throw std::invalid_argument("planar input needs a planar spatial kernel");
    } else if (!spatial_kernel.is_spherical()) {
        throw std::invalid_argument("spherical input needs a spherical spatial kernel");
    }
    if (skip_kernel.is_spherical() || temporal_kernel.is_spherical()) {
        throw std::invalid_argument("skip and temporal kernels must be planar families");
    }
}

std::size_t weight_count(const NetworkSpec& spec) {
    return (spec.spatial_depth + spec.temporal_depth) * spec.bottleneck * spec.hidden +
           spec.outputs * 2 * spec.bottleneck;
}

// ---------------------------------------------------------------------------

DrfModel::DrfModel(NetworkSpec spec, std::uint64_t seed, std::vector<FeatureLayer> spatial_layers,
                   std::vector<FeatureLayer> temporal_layers, std::vector<double> weights)
    : spec_(std::move(spec)),
      seed_(seed),
      spatial_layers_(std::move(spatial_layers)),
      temporal_layers_(std::move(temporal_layers)),
      weights_(std::move(weights)),
      version_(next_version()) {
    spec_.validate();
    if (spatial_layers_.size() != spec_.spatial_depth || temporal_layers_.size() != spec_.temporal_depth) {
        throw std::invalid_argument("layer count does not match the network spec");
    }
    if (weights_.size() != weight_count(spec_)) throw std::invalid_argument("weight vector has the wrong size");

    auto check_layers = [&](const std::vector<FeatureLayer>& layers, bool spatial) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const FeatureLayer& layer = layers[l];
            std::visit([](const auto& x) { x.validate(); }, layer);
            if (layer_width(layer) != spec_.hidden) throw std::invalid_argument("feature layer width mismatch");
            const bool sphere_first = spatial && l == 0 && spec_.space == InputSpace::Sphere;
            const bool additive = spatial && l > 0 && spec_.space == InputSpace::Sphere && spec_.skip_connections;
            if (sphere_first) {
                if (!std::holds_alternative<SphericalFeatureLayer>(layer)) {
                    throw std::invalid_argument("first spatial layer must be spherical");
                }
                continue;
            }
            if (additive != std::holds_alternative<AdditiveFeatureLayer>(layer)) {
                throw std::invalid_argument("skip layers on the sphere must be additive");
            }
            if (!additive && !std::holds_alternative<EuclideanFeatureLayer>(layer)) {
                throw std::invalid_argument("expected a Euclidean feature layer");
            }
            if (euclidean_part(layer).input_dim != layer_input_dim(spec_, spatial, l)) {
                throw std::invalid_argument("feature layer input dimension mismatch");
            }
        }
    };
    check_layers(spatial_layers_, true);
    check_layers(temporal_layers_, false);

    std::size_t offset = 0;
    const std::size_t bh = spec_.bottleneck * spec_.hidden;
    for (std::size_t l = 0; l < spec_.spatial_depth; ++l, offset += bh) {
        spatial_refs_.push_back({offset, spec_.bottleneck, spec_.hidden});
    }
    for (std::size_t l = 0; l < spec_.temporal_depth; ++l, offset += bh) {
        temporal_refs_.push_back({offset, spec_.bottleneck, spec_.hidden});
    }
    output_ref_ = {offset, spec_.outputs, 2 * spec_.bottleneck};
}

std::span<double> DrfModel::mutable_weights() {
    version_ = next_version();
    return weights_;
}

DrfModel init_model(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto make_tower = [&](bool spatial) {
        const std::size_t depth = spatial ? spec.spatial_depth : spec.temporal_depth;
        std::vector<FeatureLayer> layers;
        for (std::size_t l = 0; l < depth; ++l) {
            const std::uint64_t s = derive_seed(seed, (spatial ? 1000 : 2000) + l);
            const std::size_t in = layer_input_dim(spec, spatial, l);
            if (!spatial) {
                layers.emplace_back(sample_frequencies(spec.temporal_kernel, in, spec.hidden, s));
            } else if (l == 0 && spec.space == InputSpace::Sphere) {
                layers.emplace_back(sample_spherical_layer(spec.spatial_kernel, spec.hidden, s));
            } else if (l == 0) {
                layers.emplace_back(sample_frequencies(spec.spatial_kernel, in, spec.hidden, s));
            } else if (spec.space == InputSpace::Sphere && spec.skip_connections) {
                layers.emplace_back(
                    sample_additive_layer(spec.skip_kernel, spec.spatial_kernel, in, spec.hidden, s));
            } else {
                layers.emplace_back(sample_frequencies(spec.skip_kernel, in, spec.hidden, s));
            }
        }
        return layers;
    };
    std::vector<FeatureLayer> spatial = make_tower(true);
    std::vector<FeatureLayer> temporal = make_tower(false);

    std::vector<double> weights(weight_count(spec));
    Rng rng(derive_seed(seed, "mixing"));
    for (double& w : weights) w = rng.normal();
    return DrfModel(spec, seed, std::move(spatial), std::move(temporal), std::move(weights));
}

// ---------------------------------------------------------------------------

NetworkEvaluator::NetworkEvaluator(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    const std::size_t H = spec_.hidden;
    const std::size_t B = spec_.bottleneck;
    std::size_t offset = 0;
    auto plan_tower = [&](std::size_t depth) {
        std::vector<LayerPlan> plan(depth);
        for (std::size_t l = 0; l < depth; ++l) {
            plan[l].feat = offset;
            offset += H;
            plan[l].has_sin = l > 0;
            if (plan[l].has_sin) {
                plan[l].sin = offset;
                offset += H;
            }
            plan[l].act = offset;
            offset += B;
        }
        return plan;
    };
    spatial_plan_ = plan_tower(spec_.spatial_depth);
    temporal_plan_ = plan_tower(spec_.temporal_depth);
    stride_ = offset;

    const std::size_t max_in = B + 3;
    input_.resize(max_in);
    d_input_.resize(max_in);
    d_feat_.resize(H);
    d_act_.resize(B);
    d_concat_.resize(2 * B);
    concat_.resize(2 * B);
}

void NetworkEvaluator::forward_tower(const DrfModel& model, std::span<const double> weights,
                                     bool spatial, const SpaceTimePoint& point,
                                     const double* mask_factors, double* cache) {
    const auto& k = simd::kernels();
    const std::size_t H = spec_.hidden;
    const std::size_t B = spec_.bottleneck;
    const auto& layers = spatial ? model.spatial_layers() : model.temporal_layers();
    const auto& plan = spatial ? spatial_plan_ : temporal_plan_;
    const bool sphere = spatial && spec_.space == InputSpace::Sphere;
    const std::size_t raw_dim = spatial ? spec_.input_dim : 1;
    const double* raw = spatial ? point.x.data() : &point.t;
    const std::size_t mask_base = spatial ? 0 : spec_.spatial_depth * B;
    Vec3 s{};
    if (sphere) s = unit_input(point.x);

    for (std::size_t l = 0; l < layers.size(); ++l) {
        double* feat = cache + plan[l].feat;
        std::span<double> feat_span(feat, H);
        std::span<double> sin_span = plan[l].has_sin ? std::span<double>(cache + plan[l].sin, H)
                                                     : std::span<double>{};
        if (l == 0) {
            if (sphere) {
                std::get<SphericalFeatureLayer>(layers[0]).evaluate_unit(s, feat_span);
            } else {
                std::get<EuclideanFeatureLayer>(layers[0])
                    .evaluate(std::span<const double>(raw, raw_dim), feat_span);
            }
        } else {
            const double* prev = cache + plan[l - 1].act;
            std::copy(prev, prev + B, input_.begin());
            std::size_t in = B;
            if (sphere) {
                if (const auto* add = std::get_if<AdditiveFeatureLayer>(&layers[l])) {
                    add->evaluate_unit(std::span<const double>(input_.data(), B), s, feat_span, sin_span);
                } else {
                    std::get<EuclideanFeatureLayer>(layers[l])
                        .evaluate(std::span<const double>(input_.data(), B), feat_span, sin_span);
                }
            } else {
                if (spec_.skip_connections) {
                    std::copy(raw, raw + raw_dim, input_.begin() + B);
                    in += raw_dim;
                }
                std::get<EuclideanFeatureLayer>(layers[l])
                    .evaluate(std::span<const double>(input_.data(), in), feat_span, sin_span);
            }
        }
        const MatrixRef m = spatial ? model.spatial_mixing(l) : model.temporal_mixing(l);
        double* act = cache + plan[l].act;
        k.gemv(weights.data() + m.offset, m.rows, m.cols, feat, act);
        if (mask_factors) {
            const double* f = mask_factors + mask_base + l * B;
            for (std::size_t b = 0; b < B; ++b) act[b] *= f[b];
        }
    }
}

void NetworkEvaluator::forward_with(const DrfModel& model, std::span<const double> weights,
                                    const SpaceTimePoint& point, const double* mask_factors,
                                    double* cache, double* out) {
    if (weights.size() != model.num_weights()) throw std::invalid_argument("weight vector size mismatch");
    std::vector<double> local;
    if (!cache) {
        local.resize(stride_);
        cache = local.data();
    }
    forward_tower(model, weights, true, point, mask_factors, cache);
    forward_tower(model, weights, false, point, mask_factors, cache);
    const std::size_t B = spec_.bottleneck;
    const double* hx = cache + spatial_plan_.back().act;
    const double* ht = cache + temporal_plan_.back().act;
    std::copy(hx, hx + B, concat_.begin());
    std::copy(ht, ht + B, concat_.begin() + B);
    const MatrixRef o = model.output_weights();
    simd::kernels().gemv(weights.data() + o.offset, o.rows, o.cols, concat_.data(), out);
}

void NetworkEvaluator::forward(const DrfModel& model, const SpaceTimePoint& point,
                               const double* mask_factors, double* cache, double* out) {
    forward_with(model, model.weights(), point, mask_factors, cache, out);
}

void NetworkEvaluator::backward_tower(const DrfModel& model, std::span<const double> weights,
                                      bool spatial, const double* cache, const double* mask_factors,
                                      double* d_act, double* grad) {
    const auto& k = simd::kernels();
    const std::size_t H = spec_.hidden;
    const std::size_t B = spec_.bottleneck;
    const auto& layers = spatial ? model.spatial_layers() : model.temporal_layers();
    const auto& plan = spatial ? spatial_plan_ : temporal_plan_;
    const std::size_t mask_base = spatial ? 0 : spec_.spatial_depth * B;

    for (std::size_t l = layers.size(); l-- > 0;) {
        if (mask_factors) {
            const double* f = mask_factors + mask_base + l * B;
            for (std::size_t b = 0; b < B; ++b) d_act[b] *= f[b];
        }
        const MatrixRef m = spatial ? model.spatial_mixing(l) : model.temporal_mixing(l);
        const double* feat = cache + plan[l].feat;
        k.ger(1.0, d_act, m.rows, feat, m.cols, grad + m.offset);
        if (l == 0) break;

        std::fill(d_feat_.begin(), d_feat_.end(), 0.0);
        k.gemv_t_acc(weights.data() + m.offset, m.rows, m.cols, d_act, d_feat_.data());
        // d/d(arg) of scale*cos(arg) is -scale*sin(arg).
        const double* sn = cache + plan[l].sin;
        for (std::size_t h = 0; h < H; ++h) d_feat_[h] *= -sn[h];
        const EuclideanFeatureLayer& e = euclidean_part(layers[l]);
        std::fill(d_input_.begin(), d_input_.begin() + e.input_dim, 0.0);
        k.gemv_t_acc(e.frequencies.data(), e.width, e.input_dim, d_feat_.data(), d_input_.data());
        std::copy(d_input_.begin(), d_input_.begin() + B, d_act);
    }
}

void NetworkEvaluator::backward_with(const DrfModel& model, std::span<const double> weights,
                                     const double* cache, const double* mask_factors,
                                     const double* dout, double* grad) {
    const auto& k = simd::kernels();
    const std::size_t B = spec_.bottleneck;
    const double* hx = cache + spatial_plan_.back().act;
    const double* ht = cache + temporal_plan_.back().act;
    std::copy(hx, hx + B, concat_.begin());
    std::copy(ht, ht + B, concat_.begin() + B);

    const MatrixRef o = model.output_weights();
    k.ger(1.0, dout, o.rows, concat_.data(), o.cols, grad + o.offset);
    std::fill(d_concat_.begin(), d_concat_.end(), 0.0);
    k.gemv_t_acc(weights.data() + o.offset, o.rows, o.cols, dout, d_concat_.data());

    std::copy(d_concat_.begin(), d_concat_.begin() + B, d_act_.begin());
    backward_tower(model, weights, true, cache, mask_factors, d_act_.data(), grad);
    std::copy(d_concat_.begin() + B, d_concat_.end(), d_act_.begin());
    backward_tower(model, weights, false, cache, mask_factors, d_act_.data(), grad);
}

void NetworkEvaluator::backward(const DrfModel& model, const double* cache,
                                const double* mask_factors, const double* dout, double* grad) {
    backward_with(model, model.weights(), cache, mask_factors, dout, grad);
}

ForwardTrace NetworkEvaluator::make_trace(const DrfModel& model, std::size_t samples, bool masked) {
    NetworkEvaluator probe(model.spec());
    ForwardTrace trace;
    trace.model_version_ = model.version();
    trace.samples_ = samples;
    trace.stride_ = probe.cache_stride();
    trace.masked_ = masked;
    trace.cache_.resize(samples * trace.stride_);
    if (masked) trace.mask_factors_.resize(samples * model.spec().mask_size());
    return trace;
}

double* NetworkEvaluator::trace_cache(ForwardTrace& trace, std::size_t sample) {
    return trace.cache_.data() + sample * trace.stride_;
}

const double* NetworkEvaluator::trace_cache(const ForwardTrace& trace, std::size_t sample) {
    return trace.cache_.data() + sample * trace.stride_;
}

double* NetworkEvaluator::trace_mask(ForwardTrace& trace, std::size_t sample) {
    if (!trace.masked_) return nullptr;
    return trace.mask_factors_.data() + sample * (trace.mask_factors_.size() / trace.samples_);
}

const double* NetworkEvaluator::trace_mask(const ForwardTrace& trace, std::size_t sample) {
    if (!trace.masked_) return nullptr;
    return trace.mask_factors_.data() + sample * (trace.mask_factors_.size() / trace.samples_);
}

// ---------------------------------------------------------------------------

std::vector<double> mask_factors(const NetworkSpec& spec, std::span<const std::uint8_t> keep) {
    std::vector<double> f(keep.size());
    const double inv = 1.0 / (1.0 - spec.dropout_rate);
    for (std::size_t i = 0; i < keep.size(); ++i) f[i] = keep[i] ? inv : 0.0;
    return f;
}

std::vector<std::uint8_t> sample_dropout_mask(const NetworkSpec& spec, std::size_t samples,
                                              std::uint64_t seed) {
    std::vector<std::uint8_t> keep(samples * spec.mask_size(), 1);
    if (spec.dropout_rate == 0.0) return keep;
    Rng rng(seed);
    for (auto& k : keep) k = rng.uniform() >= spec.dropout_rate ? 1 : 0;
    return keep;
}

ForwardResult forward(const DrfModel& model, std::span<const SpaceTimePoint> points,
                      std::span<const std::uint8_t> keep) {
    const NetworkSpec& spec = model.spec();
    const bool masked = !keep.empty();
    if (masked && keep.size() != points.size() * spec.mask_size()) {
        throw std::invalid_argument("dropout mask has the wrong shape");
    }
    ForwardResult result;
    result.output.resize(points.size() * spec.outputs);
    result.trace = NetworkEvaluator::make_trace(model, points.size(), masked);
    NetworkEvaluator eval(spec);
    const std::size_t ms = spec.mask_size();
    for (std::size_t n = 0; n < points.size(); ++n) {
        double* mf = NetworkEvaluator::trace_mask(result.trace, n);
        if (masked) {
            const std::vector<double> f = mask_factors(spec, keep.subspan(n * ms, ms));
            std::copy(f.begin(), f.end(), mf);
        }
        eval.forward(model, points[n], mf, NetworkEvaluator::trace_cache(result.trace, n),
                     result.output.data() + n * spec.outputs);
    }
    return result;
}

ForwardResult forward(const DrfModel& model, const SpaceTimePoint& point,
                      std::span<const std::uint8_t> keep) {
    return forward(model, std::span<const SpaceTimePoint>(&point, 1), keep);
}

std::vector<double> backward(const DrfModel& model, const ForwardTrace& trace,
                             std::span<const double> dl_dout) {
    if (trace.model_version() != model.version()) {
        throw std::logic_error("stale forward trace: the model changed after the forward pass");
    }
    const std::size_t O = model.spec().outputs;
    if (dl_dout.size() != trace.samples() * O) throw std::invalid_argument("dl_dout has the wrong shape");
    std::vector<double> grad(model.num_weights(), 0.0);
    NetworkEvaluator eval(model.spec());
    for (std::size_t n = 0; n < trace.samples(); ++n) {
        eval.backward(model, NetworkEvaluator::trace_cache(trace, n),
                      NetworkEvaluator::trace_mask(trace, n), dl_dout.data() + n * O, grad.data());
    }
    return grad;
}

std::vector<double> predict_batch(const DrfModel& model, std::span<const SpaceTimePoint> points) {
    const std::size_t O = model.spec().outputs;
    std::vector<double> out(points.size() * O);
    NetworkEvaluator eval(model.spec());
    std::vector<double> cache(eval.cache_stride());
    for (std::size_t n = 0; n < points.size(); ++n) {
        eval.forward(model, points[n], nullptr, cache.data(), out.data() + n * O);
    }
    return out;
}

}  // namespace drf
