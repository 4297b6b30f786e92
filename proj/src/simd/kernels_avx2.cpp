// AVX2 + FMA variants of the dense kernels. This file is compiled with
// -mavx2 -mfma; nothing here may run before the dispatcher has checked
// the CPU.

#include "drf/simd/kernels.hpp"

#if defined(DRF_HAVE_AVX2_TU)

#include <immintrin.h>

#include <cmath>
#include <cstdint>

namespace drf::simd {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_avx2(const double* a, std::size_t rows, std::size_t cols, const double* x,
               double* y) {
    std::size_t r = 0;
    // Four rows per pass share every load of x.
    for (; r + 4 <= rows; r += 4) {
        const double* a0 = a + r * cols;
        const double* a1 = a0 + cols;
        const double* a2 = a1 + cols;
        const double* a3 = a2 + cols;
        __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
        __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            const __m256d vx = _mm256_loadu_pd(x + c);
            s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + c), vx, s0);
            s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + c), vx, s1);
            s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a2 + c), vx, s2);
            s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a3 + c), vx, s3);
        }
        double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
        for (; c < cols; ++c) {
            t0 += a0[c] * x[c];
            t1 += a1[c] * x[c];
            t2 += a2[c] * x[c];
            t3 += a3[c] * x[c];
        }
        y[r] = t0;
        y[r + 1] = t1;
        y[r + 2] = t2;
        y[r + 3] = t3;
    }
    for (; r < rows; ++r) y[r] = dot_avx2(a + r * cols, x, cols);
}

void gemv_t_acc_avx2(const double* a, std::size_t rows, std::size_t cols, const double* x,
                     double* y) {
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) {
        const double* a0 = a + r * cols;
        const double* a1 = a0 + cols;
        const double* a2 = a1 + cols;
        const double* a3 = a2 + cols;
        const __m256d x0 = _mm256_set1_pd(x[r]);
        const __m256d x1 = _mm256_set1_pd(x[r + 1]);
        const __m256d x2 = _mm256_set1_pd(x[r + 2]);
        const __m256d x3 = _mm256_set1_pd(x[r + 3]);
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            __m256d acc = _mm256_loadu_pd(y + c);
            acc = _mm256_fmadd_pd(x0, _mm256_loadu_pd(a0 + c), acc);
            acc = _mm256_fmadd_pd(x1, _mm256_loadu_pd(a1 + c), acc);
            acc = _mm256_fmadd_pd(x2, _mm256_loadu_pd(a2 + c), acc);
            acc = _mm256_fmadd_pd(x3, _mm256_loadu_pd(a3 + c), acc);
            _mm256_storeu_pd(y + c, acc);
        }
        for (; c < cols; ++c) {
            y[c] += x[r] * a0[c] + x[r + 1] * a1[c] + x[r + 2] * a2[c] + x[r + 3] * a3[c];
        }
    }
    for (; r < rows; ++r) axpy_avx2(x[r], a + r * cols, y, cols);
}

void ger_avx2(double alpha, const double* x, std::size_t rows, const double* y,
              std::size_t cols, double* a) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double w = alpha * x[r];
        if (w != 0.0) axpy_avx2(w, y, a + r * cols, cols);
    }
}

// Cody-Waite split of pi/2 (fdlibm constants); the first part carries 33
// significant bits so k * kPio2Hi is exact for |k| < 2^20.
constexpr double kTwoOverPi = 6.36619772367581382433e-01;
constexpr double kPio2Hi = 1.57079632673412561417e+00;
constexpr double kPio2Mid = 6.07710050630396597660e-11;
constexpr double kPio2Lo = 2.02226624871116645580e-21;
// Beyond this the reduction loses accuracy; such lanes use libm.
constexpr double kReductionLimit = 1.0e5;

void cos_sin_avx2(const double* arg, std::size_t n, double scale, double* cos_out,
                  double* sin_out) {
    const __m256d two_over_pi = _mm256_set1_pd(kTwoOverPi);
    const __m256d p1 = _mm256_set1_pd(kPio2Hi);
    const __m256d p2 = _mm256_set1_pd(kPio2Mid);
    const __m256d p3 = _mm256_set1_pd(kPio2Lo);
    const __m256d vscale = _mm256_set1_pd(scale);
    const __m256d limit = _mm256_set1_pd(kReductionLimit);
    const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d half = _mm256_set1_pd(0.5);

    // fdlibm __kernel_sin / __kernel_cos minimax coefficients on [-pi/4, pi/4].
    const __m256d s1 = _mm256_set1_pd(-1.66666666666666324348e-01);
    const __m256d s2 = _mm256_set1_pd(8.33333333332248946124e-03);
    const __m256d s3 = _mm256_set1_pd(-1.98412698298579493134e-04);
    const __m256d s4 = _mm256_set1_pd(2.75573137070700676789e-06);
    const __m256d s5 = _mm256_set1_pd(-2.50507602534068634195e-08);
    const __m256d s6 = _mm256_set1_pd(1.58969099521155010221e-10);
    const __m256d c1 = _mm256_set1_pd(4.16666666666666019037e-02);
    const __m256d c2 = _mm256_set1_pd(-1.38888888888741095749e-03);
    const __m256d c3 = _mm256_set1_pd(2.48015872894767294178e-05);
    const __m256d c4 = _mm256_set1_pd(-2.75573143513906633035e-07);
    const __m256d c5 = _mm256_set1_pd(2.08757232129817482790e-09);
    const __m256d c6 = _mm256_set1_pd(-1.13596475577881948265e-11);

    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d x = _mm256_loadu_pd(arg + i);
        const __m256d ax = _mm256_and_pd(x, abs_mask);
        // NaN compares false and therefore also takes the libm path.
        if (_mm256_movemask_pd(_mm256_cmp_pd(ax, limit, _CMP_LE_OQ)) != 0xF) {
            for (std::size_t j = i; j < i + 4; ++j) {
                const double a = arg[j];
                cos_out[j] = scale * std::cos(a);
                if (sin_out) sin_out[j] = scale * std::sin(a);
            }
            continue;
        }
        const __m256d k = _mm256_round_pd(_mm256_mul_pd(x, two_over_pi),
                                          _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
        __m256d r = _mm256_fnmadd_pd(k, p1, x);
        r = _mm256_fnmadd_pd(k, p2, r);
        r = _mm256_fnmadd_pd(k, p3, r);
        const __m256d z = _mm256_mul_pd(r, r);

        __m256d ps = _mm256_fmadd_pd(s6, z, s5);
        ps = _mm256_fmadd_pd(ps, z, s4);
        ps = _mm256_fmadd_pd(ps, z, s3);
        ps = _mm256_fmadd_pd(ps, z, s2);
        ps = _mm256_fmadd_pd(ps, z, s1);
        const __m256d sin_r = _mm256_fmadd_pd(_mm256_mul_pd(ps, z), r, r);

        __m256d pc = _mm256_fmadd_pd(c6, z, c5);
        pc = _mm256_fmadd_pd(pc, z, c4);
        pc = _mm256_fmadd_pd(pc, z, c3);
        pc = _mm256_fmadd_pd(pc, z, c2);
        pc = _mm256_fmadd_pd(pc, z, c1);
        const __m256d cos_r =
            _mm256_fmadd_pd(_mm256_mul_pd(z, z), pc, _mm256_fnmadd_pd(half, z, one));

        // Quadrant q = k mod 4 selects and negates the reduced values.
        const __m128i ki = _mm256_cvtpd_epi32(k);
        const __m256i q = _mm256_cvtepi32_epi64(_mm_and_si128(ki, _mm_set1_epi32(3)));
        const __m256d swap =
            _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(q, _mm256_set1_epi64x(1)),
                                                   _mm256_set1_epi64x(1)));
        // cos: negate for q in {1, 2}; sin: negate for q in {2, 3}.
        const __m256i q_plus_1 = _mm256_add_epi64(q, _mm256_set1_epi64x(1));
        const __m256i cos_neg = _mm256_slli_epi64(
            _mm256_and_si256(_mm256_srli_epi64(q_plus_1, 1), _mm256_set1_epi64x(1)), 63);
        const __m256i sin_neg = _mm256_slli_epi64(
            _mm256_and_si256(_mm256_srli_epi64(q, 1), _mm256_set1_epi64x(1)), 63);

        __m256d cv = _mm256_blendv_pd(cos_r, sin_r, swap);
        cv = _mm256_xor_pd(cv, _mm256_castsi256_pd(cos_neg));
        _mm256_storeu_pd(cos_out + i, _mm256_mul_pd(vscale, cv));
        if (sin_out) {
            __m256d sv = _mm256_blendv_pd(sin_r, cos_r, swap);
            sv = _mm256_xor_pd(sv, _mm256_castsi256_pd(sin_neg));
            _mm256_storeu_pd(sin_out + i, _mm256_mul_pd(vscale, sv));
        }
    }
    for (; i < n; ++i) {
        const double a = arg[i];
        cos_out[i] = scale * std::cos(a);
        if (sin_out) sin_out[i] = scale * std::sin(a);
    }
}

constexpr KernelTable kAvx2Table{
    Isa::Avx2, dot_avx2, axpy_avx2, gemv_avx2, gemv_t_acc_avx2, ger_avx2, cos_sin_avx2,
};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2Table; }

}  // namespace drf::simd

#else

namespace drf::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace drf::simd

#endif
