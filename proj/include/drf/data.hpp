#pragma once
// Synthetic fields, simulated satellite tracks, coordinate transforms,
// CSV I/O and dataset splitting.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drf/features.hpp"
#include "drf/network.hpp"
#include "drf/training.hpp"

namespace drf {

// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CoordKind { Planar, LonLat };

// c0/c1 are x/y for planar data and lon/lat in degrees otherwise.
struct Observation {
    double c0 = 0.0;
    double c1 = 0.0;
    double t = 0.0;
    double value = 0.0;
};

struct Dataset {
    CoordKind kind = CoordKind::Planar;
    std::vector<Observation> rows;
    // Optional split label per row (empty when unsplit).
    std::vector<std::uint8_t> split;

    std::size_t size() const { return rows.size(); }
    void validate() const;
    // Rows whose split label equals label.
    Dataset subset(std::uint8_t label) const;
};

// ---------------------------------------------------------------------------
// Coordinate transforms. Degrees in files, radians inside.

Vec3 lonlat_to_unit(double lon_deg, double lat_deg);
std::pair<double, double> unit_to_lonlat(const Vec3& s);
// Polar stereographic projection from the opposite pole; north selects
// the hemisphere whose pole maps to the origin.
std::array<double, 2> stereographic(const Vec3& s, bool north = true);
Vec3 inverse_stereographic(const std::array<double, 2>& p, bool north = true);

// ---------------------------------------------------------------------------
// Synthetic two-band field.

struct Band {
    std::size_t count = 0;
    double k_min = 1.0;  // wavenumber range, cycles per unit length
    double k_max = 2.0;
    double amplitude = 1.0;  // total band amplitude, split over its terms
};

struct FieldConfig {
    CoordKind kind = CoordKind::Planar;
    // Planar field dimension (1 or 2); 1 gives a field of x alone.
    std::size_t dim = 2;
    Band low{8, 1.0, 3.0, 1.0};
    Band high{24, 8.0, 16.0, 0.5};
    // Time modulation rates, radians per unit time.
    double rho_min = 1.0;
    double rho_max = 6.0;

    void validate() const;
};

class SyntheticField {
public:
    SyntheticField(FieldConfig config, std::uint64_t seed);

    const FieldConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    // Planar: p.x holds (x, y); spherical: a unit vector.
    double operator()(const SpaceTimePoint& p) const;
    // Convenience on stored coordinates (lon/lat in degrees).
    double at(double c0, double c1, double t) const;
    // Sum of |a_i| * 1.1.
    double bound() const;

private:
    struct Term {
        Vec3 k{};
        double phase = 0.0;
        double amplitude = 0.0;
        double rho = 0.0;
    };
    FieldConfig config_;
    std::uint64_t seed_;
    std::vector<Term> terms_;
};

SyntheticField synthetic_field(std::uint64_t seed, const FieldConfig& config = {});

// ---------------------------------------------------------------------------
// Tracks and observations.

struct Domain {
    CoordKind kind = CoordKind::Planar;
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;

    void validate() const;
};

struct TrackPoint {
    double c0 = 0.0;
    double c1 = 0.0;
    double t = 0.0;
};

// Planar tracks are straight lines of one domain diagonal in length that
// wrap periodically; spherical tracks are full great circles. Each track
// occupies its own time window, with times increasing along the track.
std::vector<TrackPoint> make_tracks(const Domain& domain, std::size_t n_tracks, std::size_t points_per_track,
                                    double t0, double t1, std::uint64_t seed);

// y = f(x, t) + N(0, noise_std^2).
Dataset observe(const SyntheticField& field, std::span<const TrackPoint> coords, double noise_std,
                std::uint64_t seed);

// Assigns labels 0..k-1 uniformly at random in the given proportions.
Dataset split(Dataset dataset, std::span<const double> ratios, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Normalization between stored coordinates and model inputs.

// Planar coordinates and time are mapped affinely to [0, 1]; lon/lat map
// to unit vectors.
struct Normalization {
    CoordKind kind = CoordKind::Planar;
    double x_offset = 0.0, x_scale = 1.0;
    double y_offset = 0.0, y_scale = 1.0;
    double t_offset = 0.0, t_scale = 1.0;

    SpaceTimePoint to_model(double c0, double c1, double t) const;
};

// Fits the [0, 1] map to the bounding box of the data (or a domain).
Normalization fit_normalization(const Dataset& data);
Normalization fit_normalization(const Domain& domain, double t0, double t1);

TrainingSet to_training_set(const Dataset& data, const Normalization& norm);
std::vector<SpaceTimePoint> to_model_points(const Dataset& data, const Normalization& norm);

// ---------------------------------------------------------------------------
// CSV: header "x,y,t,value" or "lon,lat,t,value".

void write_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_csv(const std::filesystem::path& path);

// Shortest-round-trip formatting used by every CSV writer.
std::string format_double(double v);

}  // namespace drf
