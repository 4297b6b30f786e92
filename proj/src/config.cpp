#include "drf/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

namespace drf {
namespace {

struct KeySpec {
    const char* section;
    const char* key;
    const char* value;
};

// Schema with defaults, in output order.
constexpr KeySpec kSchema[] = {
    {"data", "workdir", "drf_run"},
    {"data", "observations", "observations.csv"},
    {"data", "truth_grid", "truth_grid.csv"},
    {"data", "coords", "planar"},
    {"data", "seed", "1"},
    {"data", "x0", "0"},
    {"data", "x1", "1"},
    {"data", "y0", "0"},
    {"data", "y1", "1"},
    {"data", "t0", "0"},
    {"data", "t1", "1"},
    {"data", "n_tracks", "50"},
    {"data", "points_per_track", "2000"},
    {"data", "noise_std", "0.01"},
    {"data", "split", "0.7,0.15,0.15"},
    {"data", "low_count", "8"},
    {"data", "low_kmin", "1"},
    {"data", "low_kmax", "3"},
    {"data", "low_amplitude", "1"},
    {"data", "high_count", "24"},
    {"data", "high_kmin", "8"},
    {"data", "high_kmax", "16"},
    {"data", "high_amplitude", "0.5"},
    {"data", "rho_min", "1"},
    {"data", "rho_max", "6"},

    {"model", "spatial_depth", "2"},
    {"model", "temporal_depth", "1"},
    {"model", "bottleneck", "128"},
    {"model", "hidden", "1000"},
    {"model", "spatial_kernel", "matern"},
    {"model", "spatial_nu", "1.5"},
    {"model", "spatial_lengthscale", "1"},
    {"model", "spatial_amplitude", "1"},
    {"model", "spatial_truncation", "30"},
    {"model", "skip_kernel", "matern"},
    {"model", "skip_nu", "1.5"},
    {"model", "skip_lengthscale", "1"},
    {"model", "skip_amplitude", "1"},
    {"model", "temporal_kernel", "matern"},
    {"model", "temporal_nu", "1.5"},
    {"model", "temporal_lengthscale", "1"},
    {"model", "temporal_amplitude", "1"},
    {"model", "skip_connections", "true"},
    {"model", "dropout", "0"},

    {"train", "loss", "mse"},
    {"train", "huber_delta", "0.1"},
    {"train", "noise_std", "0.01"},
    {"train", "weight_decay", "auto"},
    {"train", "learning_rate", "0.001"},
    {"train", "lr_decay", "1"},
    {"train", "batch_size", "1024"},
    {"train", "epochs", "1"},
    {"train", "seed", "0"},
    {"train", "threads", "1"},
    {"train", "use_tuned", "true"},

    {"uq", "method", "ensemble"},
    {"uq", "members", "10"},
    {"uq", "n_samples", "100"},
    {"uq", "vi_samples", "1"},
    {"uq", "vi_init_log_variance", "-9"},
    {"uq", "seed", "0"},

    {"tune", "dims", "model.spatial_lengthscale:0.1:10,model.temporal_lengthscale:0.1:10"},
    {"tune", "alpha", "0"},
    {"tune", "n_init", "10"},
    {"tune", "n_iter", "10"},
    {"tune", "members", "2"},
    {"tune", "epochs", "1"},
    {"tune", "grid_n0", "50"},
    {"tune", "grid_n1", "50"},
    {"tune", "seed", "0"},

    {"predict", "n0", "50"},
    {"predict", "n1", "50"},
    {"predict", "times", "auto"},
};

bool known_section(const std::string& s) {
    return std::any_of(std::begin(kSchema), std::end(kSchema), [&](const KeySpec& k) { return s == k.section; });
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string qualified(const std::string& section, const std::string& key) { return section + "." + key; }

double parse_double(const std::string& text, const std::string& name) {
    double v = 0.0;
    const std::string t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ConfigError(name + ": expected a number, got \"" + text + "\"");
    }
    return v;
}

std::int64_t parse_int(const std::string& text, const std::string& name) {
    std::int64_t v = 0;
    const std::string t = trim(text);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ConfigError(name + ": expected an integer, got \"" + text + "\"");
    }
    return v;
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : kSchema) values_[k.section][k.key] = k.value;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse(in, path.string());
}

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
    RunConfig cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!known_section(section)) throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        if (section.empty()) throw ConfigError(where + ": key outside of a section");
        cfg.set(section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), where);
    }
    return cfg;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value,
                    const std::string& where) {
    auto s = values_.find(section);
    if (s == values_.end()) throw ConfigError(where + ": unknown section [" + section + "]");
    auto k = s->second.find(key);
    if (k == s->second.end()) throw ConfigError(where + ": unknown key " + qualified(section, key));
    k->second = value;
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override \"" + assignment + "\" is not of the form section.key=value");
    }
    set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
        trim(assignment.substr(eq + 1)), "override \"" + assignment + "\"");
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
}

const std::string& RunConfig::get(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    if (s != values_.end()) {
        auto k = s->second.find(key);
        if (k != s->second.end()) return k->second;
    }
    throw ConfigError("unknown key " + qualified(section, key));
}

double RunConfig::get_double(const std::string& section, const std::string& key) const {
    return parse_double(get(section, key), qualified(section, key));
}

std::int64_t RunConfig::get_int(const std::string& section, const std::string& key) const {
    return parse_int(get(section, key), qualified(section, key));
}

std::size_t RunConfig::get_size(const std::string& section, const std::string& key) const {
    const std::int64_t v = get_int(section, key);
    if (v < 0) throw ConfigError(qualified(section, key) + ": must be non-negative");
    return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::get_seed(const std::string& section, const std::string& key) const {
    const std::string t = trim(get(section, key));
    std::uint64_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ConfigError(qualified(section, key) + ": expected an unsigned integer seed");
    }
    return v;
}

bool RunConfig::get_bool(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(qualified(section, key) + ": expected true or false, got \"" + v + "\"");
}

std::vector<std::string> RunConfig::get_list(const std::string& section, const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(section, key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : get_list(section, key)) out.push_back(parse_double(item, qualified(section, key)));
    return out;
}

void RunConfig::write(std::ostream& out) const {
    std::string section;
    for (const auto& k : kSchema) {
        if (section != k.section) {
            if (!section.empty()) out << '\n';
            section = k.section;
            out << '[' << section << "]\n";
        }
        out << k.key << " = " << get(k.section, k.key) << '\n';
    }
}

// ---------------------------------------------------------------------------

CoordKind coord_kind(const RunConfig& cfg) {
    const std::string& c = cfg.get("data", "coords");
    if (c == "planar") return CoordKind::Planar;
    if (c == "lonlat") return CoordKind::LonLat;
    throw ConfigError("data.coords: expected planar or lonlat, got \"" + c + "\"");
}

Domain data_domain(const RunConfig& cfg) {
    Domain d;
    d.kind = coord_kind(cfg);
    d.x0 = cfg.get_double("data", "x0");
    d.x1 = cfg.get_double("data", "x1");
    d.y0 = cfg.get_double("data", "y0");
    d.y1 = cfg.get_double("data", "y1");
    try {
        d.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
    return d;
}

FieldConfig field_config(const RunConfig& cfg) {
    FieldConfig f;
    f.kind = coord_kind(cfg);
    f.dim = 2;
    f.low = {cfg.get_size("data", "low_count"), cfg.get_double("data", "low_kmin"), cfg.get_double("data", "low_kmax"),
             cfg.get_double("data", "low_amplitude")};
    f.high = {cfg.get_size("data", "high_count"), cfg.get_double("data", "high_kmin"),
              cfg.get_double("data", "high_kmax"), cfg.get_double("data", "high_amplitude")};
    f.rho_min = cfg.get_double("data", "rho_min");
    f.rho_max = cfg.get_double("data", "rho_max");
    try {
        f.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("data: ") + e.what());
    }
    return f;
}

namespace {

KernelSpec kernel_from(const RunConfig& cfg, const std::string& prefix, bool allow_sphere) {
    const std::string family = cfg.get("model", prefix + "_kernel");
    const double nu = cfg.get_double("model", prefix + "_nu");
    const double ell = cfg.get_double("model", prefix + "_lengthscale");
    const double amp = cfg.get_double("model", prefix + "_amplitude");
    KernelSpec k;
    if (family == "se") {
        k = KernelSpec::squared_exponential(ell, amp);
    } else if (family == "matern") {
        k = KernelSpec::matern(nu, ell, amp);
    } else if (allow_sphere && (family == "sphere_matern" || family == "sphere_heat")) {
        const auto trunc = static_cast<int>(cfg.get_int("model", prefix + "_truncation"));
        k = family == "sphere_matern" ? KernelSpec::sphere_matern(nu, ell, amp, trunc)
                                      : KernelSpec::sphere_heat(ell, amp, trunc);
    } else {
        throw ConfigError("model." + prefix + "_kernel: unsupported kernel \"" + family + "\"");
    }
    try {
        k.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("model." + prefix + "_kernel: " + e.what());
    }
    return k;
}

}  // namespace

NetworkSpec network_spec(const RunConfig& cfg) {
    NetworkSpec s;
    const CoordKind kind = coord_kind(cfg);
    s.space = kind == CoordKind::LonLat ? InputSpace::Sphere : InputSpace::Planar;
    s.input_dim = 2;
    s.spatial_depth = cfg.get_size("model", "spatial_depth");
    s.temporal_depth = cfg.get_size("model", "temporal_depth");
    s.bottleneck = cfg.get_size("model", "bottleneck");
    s.hidden = cfg.get_size("model", "hidden");
    s.outputs = 1;
    s.spatial_kernel = kernel_from(cfg, "spatial", true);
    s.skip_kernel = kernel_from(cfg, "skip", false);
    s.temporal_kernel = kernel_from(cfg, "temporal", false);
    s.skip_connections = cfg.get_bool("model", "skip_connections");
    s.dropout_rate = cfg.get_double("model", "dropout");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return s;
}

TrainConfig train_config(const RunConfig& cfg, std::size_t n_train) {
    TrainConfig c;
    const std::string& loss = cfg.get("train", "loss");
    if (loss == "mse") {
        c.loss.kind = LossKind::MSE;
    } else if (loss == "huber") {
        c.loss.kind = LossKind::Huber;
    } else {
        throw ConfigError("train.loss: expected mse or huber, got \"" + loss + "\"");
    }
    c.loss.huber_delta = cfg.get_double("train", "huber_delta");
    c.noise_std = cfg.get_double("train", "noise_std");
    if (cfg.get("train", "weight_decay") == "auto") {
        if (n_train == 0) throw ConfigError("train.weight_decay = auto needs a non-empty training set");
        if (!(c.noise_std > 0.0)) throw ConfigError("train.noise_std must be positive");
        c.weight_decay = weight_decay_for_noise(c.noise_std, n_train);
    } else {
        c.weight_decay = cfg.get_double("train", "weight_decay");
    }
    c.learning_rate = cfg.get_double("train", "learning_rate");
    c.lr_decay = cfg.get_double("train", "lr_decay");
    c.batch_size = cfg.get_size("train", "batch_size");
    c.epochs = cfg.get_size("train", "epochs");
    c.seed = cfg.get_seed("train", "seed");
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return c;
}

HyperSpace hyper_space(const RunConfig& cfg) {
    HyperSpace space;
    for (const auto& item : cfg.get_list("tune", "dims")) {
        // name:lower:upper, log-scaled.
        const auto a = item.find(':');
        const auto b = a == std::string::npos ? a : item.find(':', a + 1);
        if (b == std::string::npos) throw ConfigError("tune.dims: expected section.key:lower:upper, got \"" + item + "\"");
        HyperDim d;
        d.name = item.substr(0, a);
        d.lower = parse_double(item.substr(a + 1, b - a - 1), "tune.dims");
        d.upper = parse_double(item.substr(b + 1), "tune.dims");
        d.log_scale = true;
        const auto dot = d.name.find('.');
        if (dot == std::string::npos || !cfg.has(d.name.substr(0, dot), d.name.substr(dot + 1))) {
            throw ConfigError("tune.dims: unknown key " + d.name);
        }
        cfg.get_double(d.name.substr(0, dot), d.name.substr(dot + 1));
        space.dims.push_back(d);
    }
    try {
        space.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("tune.dims: ") + e.what());
    }
    return space;
}

void apply_hyperparameters(RunConfig& cfg, const HyperSpace& space, const std::vector<double>& lambda) {
    if (lambda.size() != space.size()) throw ConfigError("hyperparameter vector has the wrong dimension");
    for (std::size_t i = 0; i < space.size(); ++i) {
        const std::string& name = space.dims[i].name;
        const auto dot = name.find('.');
        cfg.set(name.substr(0, dot), name.substr(dot + 1), format_double(lambda[i]), "tuned value");
    }
}

}  // namespace drf
