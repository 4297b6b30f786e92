#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "drf/data.hpp"

using namespace drf;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "drf_unit_data";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("synthetic field basics") {
    const SyntheticField f = synthetic_field(3);
    const SpaceTimePoint p{{0.3, 0.8, 0}, 0.4};
    CHECK(f(p) == f(p));
    CHECK(f.at(0.3, 0.8, 0.4) == f(p));
    CHECK(synthetic_field(3)(p) == f(p));
    CHECK(synthetic_field(4)(p) != f(p));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 1000; ++i) CHECK(std::abs(f.at(u(rng), u(rng), u(rng))) <= f.bound());

    FieldConfig zero;
    zero.low.amplitude = 0.0;
    zero.high.amplitude = 0.0;
    const SyntheticField z = synthetic_field(3, zero);
    CHECK(z(p) == 0.0);
    CHECK(z.at(-0.4, 2.0, 7.0) == 0.0);

    FieldConfig bad;
    bad.low.k_min = 5.0;
    bad.low.k_max = 1.0;
    CHECK_THROWS_AS(synthetic_field(1, bad), std::invalid_argument);
}

TEST_CASE("spherical synthetic field") {
    FieldConfig cfg;
    cfg.kind = CoordKind::LonLat;
    const SyntheticField f = synthetic_field(2, cfg);
    const double v = f.at(30.0, -45.0, 0.2);
    CHECK(v == f(SpaceTimePoint{lonlat_to_unit(30.0, -45.0), 0.2}));
    CHECK(std::abs(v) <= f.bound());
}

TEST_CASE("field power sits in the configured bands") {
    FieldConfig cfg;
    cfg.dim = 1;
    const SyntheticField f = synthetic_field(8, cfg);
    // 1-d slice over 16 units; bin k corresponds to k / 16 cycles per unit.
    const std::size_t N = 2048;
    const double L = 16.0;
    std::vector<double> x(N);
    for (std::size_t i = 0; i < N; ++i) x[i] = f.at(L * i / N, 0.0, 0.3);
    double total = 0, inside = 0;
    for (std::size_t k = 1; k < N / 2; ++k) {
        std::complex<double> c = 0;
        for (std::size_t i = 0; i < N; ++i) c += x[i] * std::polar(1.0, -2 * pi * k * i / N);
        const double e = std::norm(c), freq = k / L;
        total += e;
        const double pad = 2.0 / L;
        if ((freq >= cfg.low.k_min - pad && freq <= cfg.low.k_max + pad) ||
            (freq >= cfg.high.k_min - pad && freq <= cfg.high.k_max + pad))
            inside += e;
    }
    CHECK(inside / total > 0.9);
}

TEST_CASE("coordinate transforms") {
    auto near = [](const Vec3& a, const Vec3& b) {
        return std::abs(a[0] - b[0]) < 1e-12 && std::abs(a[1] - b[1]) < 1e-12 && std::abs(a[2] - b[2]) < 1e-12;
    };
    CHECK(near(lonlat_to_unit(0, 0), Vec3{1, 0, 0}));
    CHECK(near(lonlat_to_unit(90, 0), Vec3{0, 1, 0}));
    CHECK(near(lonlat_to_unit(-123, 90), Vec3{0, 0, 1}));
    CHECK_THROWS_AS(lonlat_to_unit(0, 91), std::invalid_argument);
    CHECK_THROWS_AS(lonlat_to_unit(181, 0), std::invalid_argument);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> lon(-180, 180), lat(-89, 89);
    for (int i = 0; i < 200; ++i) {
        const double a = lon(rng), b = lat(rng);
        const auto [a2, b2] = unit_to_lonlat(lonlat_to_unit(a, b));
        CHECK(std::abs(a - a2) < 1e-9);
        CHECK(std::abs(b - b2) < 1e-9);
        const Vec3 s = lonlat_to_unit(a, b);
        for (bool north : {true, false}) {
            if ((north && b < -80) || (!north && b > 80)) continue;
            CHECK(near(inverse_stereographic(stereographic(s, north), north), s));
        }
    }
    const auto origin = stereographic(Vec3{0, 0, 1}, true);
    CHECK(origin[0] == doctest::Approx(0.0));
    CHECK(origin[1] == doctest::Approx(0.0));
}

TEST_CASE("tracks") {
    const Domain unit{CoordKind::Planar, 0, 1, 0, 1};
    SUBCASE("two points") {
        const auto t = make_tracks(unit, 1, 2, 0.0, 1.0, 3);
        REQUIRE(t.size() == 2);
        for (const auto& p : t) {
            CHECK(p.c0 >= 0.0);
            CHECK(p.c0 <= 1.0);
            CHECK(p.c1 >= 0.0);
            CHECK(p.c1 <= 1.0);
        }
        CHECK(t[1].t > t[0].t);
    }
    SUBCASE("spherical tracks") {
        const Domain globe{CoordKind::LonLat, -180, 180, -90, 90};
        const auto t = make_tracks(globe, 5, 100, 0.0, 10.0, 1);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Vec3 s = lonlat_to_unit(t[i].c0, t[i].c1);
            CHECK(std::abs(std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]) - 1.0) < 1e-12);
            if (i % 100) CHECK(t[i].t > t[i - 1].t);
        }
    }
    SUBCASE("coverage of the unit square") {
        int covered = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto t = make_tracks(unit, 50, 2000, 0.0, 1.0, seed);
            std::vector<int> cells(100, 0);
            for (const auto& p : t)
                ++cells[std::min(9, static_cast<int>(p.c0 * 10)) * 10 + std::min(9, static_cast<int>(p.c1 * 10))];
            covered += std::count(cells.begin(), cells.end(), 0) == 0;
        }
        CHECK(covered >= 9);
    }
    CHECK_THROWS_AS(make_tracks(Domain{CoordKind::Planar, 1, 1, 0, 1}, 1, 2, 0, 1, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_tracks(unit, 0, 2, 0, 1, 0), std::invalid_argument);
}

TEST_CASE("observations") {
    const SyntheticField f = synthetic_field(1);
    const auto coords = make_tracks(Domain{}, 20, 5000, 0.0, 1.0, 2);
    const Dataset exact = observe(f, coords, 0.0, 3);
    for (std::size_t i = 0; i < exact.size(); i += 101) CHECK(exact.rows[i].value == f.at(coords[i].c0, coords[i].c1, coords[i].t));

    const Dataset noisy = observe(f, coords, 0.01, 3);
    double ss = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) ss += std::pow(noisy.rows[i].value - exact.rows[i].value, 2);
    CHECK(std::sqrt(ss / noisy.size()) == doctest::Approx(0.01).epsilon(0.01));
    CHECK(observe(f, coords, 0.01, 3).rows[7].value == noisy.rows[7].value);
}

TEST_CASE("splitting") {
    Dataset d;
    for (int i = 0; i < 1000; ++i) d.rows.push_back({0.001 * i, 0.5, 0.0, 1.0 * i});
    const std::vector<double> r{0.8, 0.2};
    const Dataset s = split(d, r, 4);
    const auto a = s.subset(0), b = s.subset(1);
    CHECK(std::abs(static_cast<int>(a.size()) - 800) <= 1);
    CHECK(a.size() + b.size() == 1000);
    std::vector<int> seen(1000, 0);
    for (const auto& row : a.rows) ++seen[static_cast<int>(row.value)];
    for (const auto& row : b.rows) ++seen[static_cast<int>(row.value)];
    for (int c : seen) CHECK(c == 1);
    CHECK(split(d, r, 4).split == s.split);
    CHECK(split(d, r, 5).split != s.split);

    const Dataset three = split(d, std::vector<double>{0.7, 0.15, 0.15}, 1);
    CHECK(three.subset(0).size() + three.subset(1).size() + three.subset(2).size() == 1000);
    CHECK_THROWS_AS(split(d, std::vector<double>{0.5, 0.4}, 1), std::invalid_argument);
    CHECK_THROWS_AS(split(d, std::vector<double>{1.2, -0.2}, 1), std::invalid_argument);
}

TEST_CASE("normalization") {
    const Normalization n = fit_normalization(Domain{CoordKind::Planar, -2, 2, 10, 20}, 5, 7);
    const auto p = n.to_model(0.0, 20.0, 5.5);
    CHECK(p.x[0] == doctest::Approx(0.5));
    CHECK(p.x[1] == doctest::Approx(1.0));
    CHECK(p.t == doctest::Approx(0.25));

    Dataset d;
    d.kind = CoordKind::LonLat;
    d.rows.push_back({90.0, 0.0, 1.0, 0.0});
    d.rows.push_back({0.0, 0.0, 3.0, 0.0});
    const auto pts = to_model_points(d, fit_normalization(d));
    CHECK(pts[0].x[1] == doctest::Approx(1.0));
    CHECK(pts[1].t == doctest::Approx(1.0));
}

TEST_CASE("CSV round trip and errors") {
    Dataset d;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 100; ++i) d.rows.push_back({nd(rng), nd(rng), nd(rng), nd(rng) * 1e-7});
    const fs::path p = temp_file("roundtrip.csv");
    write_csv(p, d);
    const Dataset back = read_csv(p);
    REQUIRE(back.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(back.rows[i].c0 == d.rows[i].c0);
        CHECK(back.rows[i].value == d.rows[i].value);
    }

    Dataset g;
    g.kind = CoordKind::LonLat;
    g.rows.push_back({-170.5, 45.25, 0.0, 1.0});
    write_csv(p, g);
    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == "lon,lat,t,value");
    CHECK(read_csv(p).kind == CoordKind::LonLat);

    write_text(p, "x,y,t,value\n0.5,0.5,1.0,0.123\n");
    const Dataset one = read_csv(p);
    CHECK(one.rows[0].c0 == 0.5);
    CHECK(one.rows[0].t == 1.0);
    CHECK(one.rows[0].value == 0.123);

    write_text(p, "a,b,c\n1,2,3\n");
    CHECK_THROWS_WITH_AS(read_csv(p), doctest::Contains("roundtrip.csv"), DataError);
    write_text(p, "x,y,t,value\n1,2,3,4\n1,2,oops,4\n");
    CHECK_THROWS_WITH_AS(read_csv(p), doctest::Contains(":3:"), DataError);
    write_text(p, "x,y,t,value\n1,2,3\n");
    CHECK_THROWS_AS(read_csv(p), DataError);
    write_text(p, "x,y,t,value\n1,2,3,4,5\n");
    CHECK_THROWS_AS(read_csv(p), DataError);
    CHECK_THROWS_AS(read_csv(temp_file("missing.csv")), DataError);
}

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, -3.0, 1e-300, 123456.789, 0.30000000000000004}) CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(0.5) == "0.5");
}
