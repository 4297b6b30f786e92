#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "drf/simd/kernels.hpp"

using namespace drf::simd;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Restores the active table when a test switches it.
struct IsaGuard {
    Isa saved = active_isa();
    ~IsaGuard() { set_active_isa(saved); }
};

}  // namespace

TEST_CASE("scalar table is always available") {
    CHECK(isa_supported(Isa::Scalar));
    CHECK(scalar_kernels().isa == Isa::Scalar);
    IsaGuard guard;
    set_active_isa(Isa::Scalar);
    CHECK(active_isa() == Isa::Scalar);
    CHECK(&kernels() == &scalar_kernels());
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
    if (!isa_supported(Isa::Avx2)) {
        MESSAGE("AVX2 not available on this CPU; equivalence test skipped");
        return;
    }
    const KernelTable& s = scalar_kernels();
    const KernelTable& v = *avx2_kernels();
    std::mt19937_64 rng(42);

    SUBCASE("dot and axpy, odd lengths") {
        for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 17, 64, 1001}) {
            const auto a = random_vector(n, rng), b = random_vector(n, rng);
            CHECK(rel_err(s.dot(a.data(), b.data(), n), v.dot(a.data(), b.data(), n)) < 1e-13);
            auto y1 = random_vector(n, rng);
            auto y2 = y1;
            s.axpy(0.37, a.data(), y1.data(), n);
            v.axpy(0.37, a.data(), y2.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(rel_err(y1[i], y2[i]) < 1e-14);
        }
    }

    SUBCASE("gemv, transposed accumulation and rank-one update") {
        for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 5}, {4, 4}, {7, 13}, {128, 1000},
                                  {9, 130}}) {
            const auto A = random_vector(rows * cols, rng);
            const auto x = random_vector(cols, rng), xr = random_vector(rows, rng);
            std::vector<double> y1(rows), y2(rows);
            s.gemv(A.data(), rows, cols, x.data(), y1.data());
            v.gemv(A.data(), rows, cols, x.data(), y2.data());
            for (std::size_t i = 0; i < rows; ++i) CHECK(rel_err(y1[i], y2[i]) < 1e-13);

            auto z1 = random_vector(cols, rng);
            auto z2 = z1;
            s.gemv_t_acc(A.data(), rows, cols, xr.data(), z1.data());
            v.gemv_t_acc(A.data(), rows, cols, xr.data(), z2.data());
            for (std::size_t j = 0; j < cols; ++j) CHECK(rel_err(z1[j], z2[j]) < 1e-13);

            auto B1 = A;
            auto B2 = A;
            s.ger(-0.5, xr.data(), rows, x.data(), cols, B1.data());
            v.ger(-0.5, xr.data(), rows, x.data(), cols, B2.data());
            for (std::size_t k = 0; k < B1.size(); ++k) CHECK(rel_err(B1[k], B2[k]) < 1e-14);
        }
    }

    SUBCASE("cos_sin over small, moderate and huge arguments") {
        std::vector<double> arg;
        for (double x = -50.0; x <= 50.0; x += 0.0137) arg.push_back(x);
        for (double x : {0.0, -0.0, 1e-300, 1.5707963267948966, 3.141592653589793, 1e4, -1e4 - 0.3, 99999.9, 1e5 + 1,
                         1e8, -3e12, 1e300})
            arg.push_back(x);
        const std::size_t n = arg.size();
        std::vector<double> c1(n), s1(n), c2(n), s2(n);
        s.cos_sin(arg.data(), n, 1.7, c1.data(), s1.data());
        v.cos_sin(arg.data(), n, 1.7, c2.data(), s2.data());
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            worst = std::max(worst, std::abs(c1[i] - c2[i]));
            worst = std::max(worst, std::abs(s1[i] - s2[i]));
        }
        CHECK(worst < 5e-15);

        // In place, cosine only.
        std::vector<double> inplace = arg;
        v.cos_sin(inplace.data(), n, 1.0, inplace.data(), nullptr);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(inplace[i] - std::cos(arg[i])) < 5e-15);
    }

    SUBCASE("cos_sin propagates NaN") {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        double in[5] = {nan, 0.0, 1.0, 2.0, 3.0}, c[5], sn[5];
        v.cos_sin(in, 5, 1.0, c, sn);
        CHECK(std::isnan(c[0]));
        CHECK(std::isnan(sn[0]));
        CHECK(c[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("forcing an unsupported table throws") {
    if (isa_supported(Isa::Avx2)) return;
    CHECK_THROWS_AS(set_active_isa(Isa::Avx2), std::runtime_error);
}
