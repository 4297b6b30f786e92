#include "drf/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string_view>

#include "drf/rng.hpp"

namespace drf {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool is_lonlat_valid(double lon, double lat) { return lon >= -180.0 && lon <= 180.0 && lat >= -90.0 && lat <= 90.0; }

}  // namespace

void Dataset::validate() const {
    if (!split.empty() && split.size() != rows.size()) throw DataError("split labels do not match the rows");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (!std::isfinite(r.c0) || !std::isfinite(r.c1) || !std::isfinite(r.t) || !std::isfinite(r.value)) {
            throw DataError("row " + std::to_string(i) + " has a non-finite value");
        }
        if (kind == CoordKind::LonLat && !is_lonlat_valid(r.c0, r.c1)) {
            throw DataError("row " + std::to_string(i) + " has lon/lat out of range");
        }
    }
}

Dataset Dataset::subset(std::uint8_t label) const {
    if (split.size() != rows.size()) throw DataError("dataset has no split labels");
    Dataset out;
    out.kind = kind;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (split[i] == label) out.rows.push_back(rows[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------

Vec3 lonlat_to_unit(double lon_deg, double lat_deg) {
    if (!is_lonlat_valid(lon_deg, lat_deg)) throw std::invalid_argument("lon/lat out of range");
    const double lon = lon_deg * kDeg, lat = lat_deg * kDeg;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

std::pair<double, double> unit_to_lonlat(const Vec3& s) {
    const double n = std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]);
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("cannot convert a zero vector to lon/lat");
    const double lat = std::asin(std::clamp(s[2] / n, -1.0, 1.0));
    const double lon = std::atan2(s[1], s[0]);
    return {lon / kDeg, lat / kDeg};
}

std::array<double, 2> stereographic(const Vec3& s, bool north) {
    const double z = north ? s[2] : -s[2];
    if (!(1.0 + z > 1e-12)) throw std::invalid_argument("the projection pole has no stereographic image");
    return {s[0] / (1.0 + z), s[1] / (1.0 + z)};
}

Vec3 inverse_stereographic(const std::array<double, 2>& p, bool north) {
    const double r2 = p[0] * p[0] + p[1] * p[1];
    const double d = 1.0 + r2;
    const double z = (1.0 - r2) / d;
    return {2.0 * p[0] / d, 2.0 * p[1] / d, north ? z : -z};
}

// ---------------------------------------------------------------------------

void FieldConfig::validate() const {
    if (kind == CoordKind::Planar && (dim < 1 || dim > 2)) throw std::invalid_argument("planar field dimension must be 1 or 2");
    for (const Band* b : {&low, &high}) {
        if (!(b->k_min >= 0.0 && b->k_max >= b->k_min)) throw std::invalid_argument("band wavenumber range is invalid");
        if (!std::isfinite(b->amplitude)) throw std::invalid_argument("band amplitude must be finite");
    }
    if (!(rho_min >= 0.0 && rho_max >= rho_min)) throw std::invalid_argument("time modulation range is invalid");
}

SyntheticField::SyntheticField(FieldConfig config, std::uint64_t seed) : config_(config), seed_(seed) {
    config_.validate();
    Rng rng(derive_seed(seed, "field"));
    for (const Band* band : {&config_.low, &config_.high}) {
        const double a = band->count ? band->amplitude / std::sqrt(static_cast<double>(band->count)) : 0.0;
        for (std::size_t i = 0; i < band->count; ++i) {
            Term term;
            const double k = kTwoPi * rng.uniform(band->k_min, band->k_max);
            if (config_.kind == CoordKind::LonLat) {
                Vec3 u{rng.normal(), rng.normal(), rng.normal()};
                const double n = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
                for (int d = 0; d < 3; ++d) term.k[d] = k * u[d] / n;
            } else if (config_.dim == 1) {
                term.k[0] = rng.uniform() < 0.5 ? -k : k;
            } else {
                const double heading = rng.uniform(0.0, kTwoPi);
                term.k[0] = k * std::cos(heading);
                term.k[1] = k * std::sin(heading);
            }
            term.phase = rng.uniform(0.0, kTwoPi);
            term.amplitude = a;
            term.rho = rng.uniform(config_.rho_min, config_.rho_max);
            terms_.push_back(term);
        }
    }
}

double SyntheticField::operator()(const SpaceTimePoint& p) const {
    double v = 0.0;
    for (const auto& term : terms_) {
        const double arg = term.k[0] * p.x[0] + term.k[1] * p.x[1] + term.k[2] * p.x[2] + term.phase;
        v += term.amplitude * std::cos(arg) * (1.0 + 0.1 * std::sin(term.rho * p.t));
    }
    return v;
}

double SyntheticField::at(double c0, double c1, double t) const {
    SpaceTimePoint p;
    p.t = t;
    if (config_.kind == CoordKind::LonLat) {
        p.x = lonlat_to_unit(c0, c1);
    } else {
        p.x = {c0, config_.dim == 2 ? c1 : 0.0, 0.0};
    }
    return (*this)(p);
}

double SyntheticField::bound() const {
    double s = 0.0;
    for (const auto& term : terms_) s += std::abs(term.amplitude);
    return 1.1 * s;
}

SyntheticField synthetic_field(std::uint64_t seed, const FieldConfig& config) { return SyntheticField(config, seed); }

// ---------------------------------------------------------------------------

void Domain::validate() const {
    if (kind == CoordKind::Planar) {
        if (!(x1 > x0) || !(y1 > y0) || !std::isfinite(x1 - x0) || !std::isfinite(y1 - y0)) {
            throw std::invalid_argument("planar domain is degenerate");
        }
    }
}

namespace {

double wrap(double v, double lo, double hi) {
    const double w = hi - lo;
    double r = std::fmod(v - lo, w);
    if (r < 0.0) r += w;
    return lo + r;
}

}  // namespace

std::vector<TrackPoint> make_tracks(const Domain& domain, std::size_t n_tracks, std::size_t points_per_track,
                                    double t0, double t1, std::uint64_t seed) {
    domain.validate();
    if (n_tracks == 0 || points_per_track == 0) throw std::invalid_argument("track counts must be positive");
    if (!(t1 > t0)) throw std::invalid_argument("time span is degenerate");
    Rng rng(derive_seed(seed, "tracks"));
    std::vector<TrackPoint> out;
    out.reserve(n_tracks * points_per_track);
    const double window = (t1 - t0) / static_cast<double>(n_tracks);
    const double P = static_cast<double>(points_per_track);

    for (std::size_t i = 0; i < n_tracks; ++i) {
        const double start_t = t0 + window * static_cast<double>(i);
        if (domain.kind == CoordKind::Planar) {
            const double w = domain.x1 - domain.x0, h = domain.y1 - domain.y0;
            const double length = std::hypot(w, h);
            const double sx = rng.uniform(domain.x0, domain.x1);
            const double sy = rng.uniform(domain.y0, domain.y1);
            const double heading = rng.uniform(0.0, kTwoPi);
            const double dx = std::cos(heading), dy = std::sin(heading);
            for (std::size_t k = 0; k < points_per_track; ++k) {
                const double s = length * static_cast<double>(k) / P;
                out.push_back({wrap(sx + s * dx, domain.x0, domain.x1), wrap(sy + s * dy, domain.y0, domain.y1),
                               start_t + window * static_cast<double>(k) / P});
            }
        } else {
            // Orthonormal pair spanning a random great circle.
            Vec3 a{rng.normal(), rng.normal(), rng.normal()};
            Vec3 b{rng.normal(), rng.normal(), rng.normal()};
            auto norm = [](Vec3& v) {
                const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                for (double& c : v) c /= n;
            };
            norm(a);
            const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            for (int c = 0; c < 3; ++c) b[c] -= d * a[c];
            norm(b);
            const double phi0 = rng.uniform(0.0, kTwoPi);
            for (std::size_t k = 0; k < points_per_track; ++k) {
                const double phi = phi0 + kTwoPi * static_cast<double>(k) / P;
                const Vec3 s{std::cos(phi) * a[0] + std::sin(phi) * b[0], std::cos(phi) * a[1] + std::sin(phi) * b[1],
                             std::cos(phi) * a[2] + std::sin(phi) * b[2]};
                const auto [lon, lat] = unit_to_lonlat(s);
                out.push_back({lon, lat, start_t + window * static_cast<double>(k) / P});
            }
        }
    }
    return out;
}

Dataset observe(const SyntheticField& field, std::span<const TrackPoint> coords, double noise_std,
                std::uint64_t seed) {
    if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");
    Dataset d;
    d.kind = field.config().kind;
    d.rows.reserve(coords.size());
    Rng rng(derive_seed(seed, "noise"));
    for (const auto& c : coords) {
        const double eps = noise_std > 0.0 ? noise_std * rng.normal() : 0.0;
        d.rows.push_back({c.c0, c.c1, c.t, field.at(c.c0, c.c1, c.t) + eps});
    }
    return d;
}

Dataset split(Dataset dataset, std::span<const double> ratios, std::uint64_t seed) {
    if (ratios.empty() || ratios.size() > 255) throw std::invalid_argument("split needs 1..255 ratios");
    double total = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw std::invalid_argument("split ratios must be positive");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    std::shuffle(order.begin(), order.end(), rng.engine());
    dataset.split.assign(n, 0);
    double cum = 0.0;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
        cum += ratios[k];
        const std::size_t end =
            k + 1 == ratios.size() ? n : std::min(n, static_cast<std::size_t>(std::llround(cum * static_cast<double>(n))));
        for (std::size_t i = begin; i < end; ++i) dataset.split[order[i]] = static_cast<std::uint8_t>(k);
        begin = std::max(begin, end);
    }
    return dataset;
}

// ---------------------------------------------------------------------------

SpaceTimePoint Normalization::to_model(double c0, double c1, double t) const {
    SpaceTimePoint p;
    p.t = (t - t_offset) / t_scale;
    if (kind == CoordKind::LonLat) {
        p.x = lonlat_to_unit(c0, c1);
    } else {
        p.x = {(c0 - x_offset) / x_scale, (c1 - y_offset) / y_scale, 0.0};
    }
    return p;
}

namespace {

void fit_axis(double lo, double hi, double& offset, double& scale) {
    offset = lo;
    scale = hi > lo ? hi - lo : 1.0;
}

}  // namespace

Normalization fit_normalization(const Dataset& data) {
    if (data.size() == 0) throw DataError("cannot normalize an empty dataset");
    Normalization n;
    n.kind = data.kind;
    double x0 = data.rows[0].c0, x1 = x0, y0 = data.rows[0].c1, y1 = y0, t0 = data.rows[0].t, t1 = t0;
    for (const auto& r : data.rows) {
        x0 = std::min(x0, r.c0), x1 = std::max(x1, r.c0);
        y0 = std::min(y0, r.c1), y1 = std::max(y1, r.c1);
        t0 = std::min(t0, r.t), t1 = std::max(t1, r.t);
    }
    if (data.kind == CoordKind::Planar) {
        fit_axis(x0, x1, n.x_offset, n.x_scale);
        fit_axis(y0, y1, n.y_offset, n.y_scale);
    }
    fit_axis(t0, t1, n.t_offset, n.t_scale);
    return n;
}

Normalization fit_normalization(const Domain& domain, double t0, double t1) {
    domain.validate();
    Normalization n;
    n.kind = domain.kind;
    if (domain.kind == CoordKind::Planar) {
        fit_axis(domain.x0, domain.x1, n.x_offset, n.x_scale);
        fit_axis(domain.y0, domain.y1, n.y_offset, n.y_scale);
    }
    fit_axis(t0, t1, n.t_offset, n.t_scale);
    return n;
}

std::vector<SpaceTimePoint> to_model_points(const Dataset& data, const Normalization& norm) {
    if (data.kind != norm.kind) throw DataError("dataset and normalization use different coordinate kinds");
    std::vector<SpaceTimePoint> pts;
    pts.reserve(data.size());
    for (const auto& r : data.rows) pts.push_back(norm.to_model(r.c0, r.c1, r.t));
    return pts;
}

TrainingSet to_training_set(const Dataset& data, const Normalization& norm) {
    TrainingSet ts;
    ts.outputs = 1;
    ts.inputs = to_model_points(data, norm);
    ts.targets.reserve(data.size());
    for (const auto& r : data.rows) ts.targets.push_back(r.value);
    return ts;
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

constexpr std::string_view kPlanarHeader = "x,y,t,value";
constexpr std::string_view kLonLatHeader = "lon,lat,t,value";

}  // namespace

void write_csv(const std::filesystem::path& path, const Dataset& data) {
    data.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << (data.kind == CoordKind::Planar ? kPlanarHeader : kLonLatHeader) << '\n';
    for (const auto& r : data.rows) {
        out << format_double(r.c0) << ',' << format_double(r.c1) << ',' << format_double(r.t) << ','
            << format_double(r.value) << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
}

Dataset read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file " + path.string());
    const std::string where = path.string();
    std::string line;
    if (!std::getline(in, line)) throw DataError(where + ": file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Dataset d;
    if (line == kPlanarHeader) {
        d.kind = CoordKind::Planar;
    } else if (line == kLonLatHeader) {
        d.kind = CoordKind::LonLat;
    } else {
        throw DataError(where + ":1: expected header \"" + std::string(kPlanarHeader) + "\" or \"" +
                        std::string(kLonLatHeader) + "\", got \"" + line + "\"");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        double v[4];
        std::size_t field = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (true) {
            if (field == 4) throw DataError(where + ":" + std::to_string(lineno) + ": too many columns");
            const char* comma = std::find(p, end, ',');
            const auto res = std::from_chars(p, comma, v[field]);
            if (res.ec != std::errc() || res.ptr != comma) {
                throw DataError(where + ":" + std::to_string(lineno) + ": cannot parse column " +
                                std::to_string(field + 1) + " \"" + std::string(p, comma) + "\"");
            }
            ++field;
            if (comma == end) break;
            p = comma + 1;
        }
        if (field != 4) throw DataError(where + ":" + std::to_string(lineno) + ": expected 4 columns");
        Observation o{v[0], v[1], v[2], v[3]};
        if (!std::isfinite(o.c0) || !std::isfinite(o.c1) || !std::isfinite(o.t) || !std::isfinite(o.value)) {
            throw DataError(where + ":" + std::to_string(lineno) + ": non-finite value");
        }
        if (d.kind == CoordKind::LonLat && !is_lonlat_valid(o.c0, o.c1)) {
            throw DataError(where + ":" + std::to_string(lineno) + ": lon/lat out of range");
        }
        d.rows.push_back(o);
    }
    return d;
}

}  // namespace drf
