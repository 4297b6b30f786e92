#include "drf/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace drf {
namespace {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

constexpr char kMagic[8] = {'D', 'R', 'F', 'M', 'O', 'D', 'E', 'L'};

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}
    template <typename T>
    void pod(T v) {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void doubles(const std::vector<double>& v) {
        pod<std::uint64_t>(v.size());
        out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}
    template <typename T>
    T pod() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw std::runtime_error("model file is truncated");
        return v;
    }
    std::vector<double> doubles() {
        const auto n = pod<std::uint64_t>();
        if (n > (std::uint64_t{1} << 36)) throw std::runtime_error("model file array is implausibly large");
        std::vector<double> v(n);
        in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in_) throw std::runtime_error("model file is truncated");
        return v;
    }

private:
    std::istream& in_;
};

void write_kernel(Writer& w, const KernelSpec& k) {
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(k.family));
    w.pod<double>(k.nu);
    w.pod<double>(k.lengthscale);
    w.pod<double>(k.amplitude);
    w.pod<std::int32_t>(k.truncation ? *k.truncation : -1);
}

KernelSpec read_kernel(Reader& r) {
    KernelSpec k;
    const auto fam = r.pod<std::uint8_t>();
    if (fam > static_cast<std::uint8_t>(KernelFamily::SphereHeat)) throw std::runtime_error("unknown kernel family");
    k.family = static_cast<KernelFamily>(fam);
    k.nu = r.pod<double>();
    k.lengthscale = r.pod<double>();
    k.amplitude = r.pod<double>();
    const auto t = r.pod<std::int32_t>();
    if (t >= 0) k.truncation = t;
    return k;
}

void write_euclidean(Writer& w, const EuclideanFeatureLayer& l) {
    w.pod<std::uint64_t>(l.input_dim);
    w.pod<std::uint64_t>(l.width);
    w.pod<double>(l.scale);
    w.doubles(l.frequencies);
    w.doubles(l.phases);
}

EuclideanFeatureLayer read_euclidean(Reader& r) {
    EuclideanFeatureLayer l;
    l.input_dim = r.pod<std::uint64_t>();
    l.width = r.pod<std::uint64_t>();
    l.scale = r.pod<double>();
    l.frequencies = r.doubles();
    l.phases = r.doubles();
    return l;
}

void write_spherical(Writer& w, const SphericalFeatureLayer& l) {
    w.pod<std::int32_t>(l.max_degree);
    w.pod<std::uint64_t>(l.width());
    for (std::size_t m = 0; m < l.width(); ++m) {
        w.pod<std::int32_t>(l.degrees[m]);
        for (double c : l.anchors[m]) w.pod<double>(c);
        w.pod<double>(l.scales[m]);
    }
}

SphericalFeatureLayer read_spherical(Reader& r) {
    SphericalFeatureLayer l;
    l.max_degree = r.pod<std::int32_t>();
    const auto M = r.pod<std::uint64_t>();
    if (M > (std::uint64_t{1} << 32)) throw std::runtime_error("spherical layer is implausibly large");
    l.degrees.resize(M);
    l.anchors.resize(M);
    l.scales.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        l.degrees[m] = r.pod<std::int32_t>();
        for (double& c : l.anchors[m]) c = r.pod<double>();
        l.scales[m] = r.pod<double>();
    }
    return l;
}

void write_layer(Writer& w, const FeatureLayer& layer) {
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(layer.index()));
    if (const auto* e = std::get_if<EuclideanFeatureLayer>(&layer)) {
        write_euclidean(w, *e);
    } else if (const auto* s = std::get_if<SphericalFeatureLayer>(&layer)) {
        write_spherical(w, *s);
    } else {
        const auto& a = std::get<AdditiveFeatureLayer>(layer);
        write_euclidean(w, a.euclidean);
        write_spherical(w, a.spherical);
    }
}

FeatureLayer read_layer(Reader& r) {
    switch (r.pod<std::uint8_t>()) {
        case 0:
            return read_euclidean(r);
        case 1:
            return read_spherical(r);
        case 2: {
            AdditiveFeatureLayer a;
            a.euclidean = read_euclidean(r);
            a.spherical = read_spherical(r);
            return a;
        }
        default:
            throw std::runtime_error("unknown feature layer type");
    }
}

}  // namespace

void write_model(std::ostream& out, const DrfModel& model, const std::vector<double>* log_variance) {
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod<std::uint32_t>(kModelFormatVersion);
    w.pod<std::uint32_t>(log_variance ? 1u : 0u);

    const NetworkSpec& s = model.spec();
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(s.space));
    w.pod<std::uint64_t>(s.input_dim);
    w.pod<std::uint64_t>(s.spatial_depth);
    w.pod<std::uint64_t>(s.temporal_depth);
    w.pod<std::uint64_t>(s.bottleneck);
    w.pod<std::uint64_t>(s.hidden);
    w.pod<std::uint64_t>(s.outputs);
    write_kernel(w, s.spatial_kernel);
    write_kernel(w, s.skip_kernel);
    write_kernel(w, s.temporal_kernel);
    w.pod<std::uint8_t>(s.skip_connections ? 1 : 0);
    w.pod<double>(s.dropout_rate);
    w.pod<std::uint64_t>(model.seed());

    for (const auto& l : model.spatial_layers()) write_layer(w, l);
    for (const auto& l : model.temporal_layers()) write_layer(w, l);
    w.doubles(std::vector<double>(model.weights().begin(), model.weights().end()));
    if (log_variance) {
        if (log_variance->size() != model.num_weights()) {
            throw std::invalid_argument("log-variance vector does not match the model weights");
        }
        w.doubles(*log_variance);
    }
    if (!out) throw std::runtime_error("failed to write model");
}

ModelFile read_model(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw std::runtime_error("not a model file");
    Reader r(in);
    const auto version = r.pod<std::uint32_t>();
    if (version != kModelFormatVersion) {
        throw std::runtime_error("unsupported model file version " + std::to_string(version));
    }
    const auto kind = r.pod<std::uint32_t>();
    if (kind > 1) throw std::runtime_error("unknown model file kind");

    NetworkSpec s;
    const auto space = r.pod<std::uint8_t>();
    if (space > 1) throw std::runtime_error("unknown input space");
    s.space = static_cast<InputSpace>(space);
    s.input_dim = r.pod<std::uint64_t>();
    s.spatial_depth = r.pod<std::uint64_t>();
    s.temporal_depth = r.pod<std::uint64_t>();
    s.bottleneck = r.pod<std::uint64_t>();
    s.hidden = r.pod<std::uint64_t>();
    s.outputs = r.pod<std::uint64_t>();
    s.spatial_kernel = read_kernel(r);
    s.skip_kernel = read_kernel(r);
    s.temporal_kernel = read_kernel(r);
    s.skip_connections = r.pod<std::uint8_t>() != 0;
    s.dropout_rate = r.pod<double>();
    const auto seed = r.pod<std::uint64_t>();
    s.validate();
    if (s.spatial_depth > 4096 || s.temporal_depth > 4096) throw std::runtime_error("implausible depth");

    std::vector<FeatureLayer> spatial, temporal;
    for (std::size_t l = 0; l < s.spatial_depth; ++l) spatial.push_back(read_layer(r));
    for (std::size_t l = 0; l < s.temporal_depth; ++l) temporal.push_back(read_layer(r));
    std::vector<double> weights = r.doubles();
    ModelFile file{DrfModel(s, seed, std::move(spatial), std::move(temporal), std::move(weights)), std::nullopt};
    if (kind == 1) {
        file.log_variance = r.doubles();
        if (file.log_variance->size() != file.model.num_weights()) {
            throw std::runtime_error("log-variance array does not match the model weights");
        }
    }
    return file;
}

void save_model(const std::filesystem::path& path, const DrfModel& model,
                const std::vector<double>* log_variance) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_model(out, model, log_variance);
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    try {
        return read_model(in);
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace drf
