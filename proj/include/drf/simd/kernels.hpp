#pragma once
// Dense double-precision kernels used by the feature layers and the
// mixing matrices. Every routine has a portable scalar reference and,
// where the CPU allows it, an AVX2/FMA variant selected at runtime.

#include <cstddef>
#include <string_view>

namespace drf::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
    Isa isa;

    double (*dot)(const double* a, const double* b, std::size_t n);

    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    // y = A x, A row-major rows x cols
    void (*gemv)(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y);

    // y += A^T x, A row-major rows x cols, x has rows entries
    void (*gemv_t_acc)(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y);

    // A += alpha * x y^T, x has rows entries, y has cols entries
    void (*ger)(double alpha, const double* x, std::size_t rows,
                const double* y, std::size_t cols, double* a);

    // cos_out[i] = scale * cos(arg[i]); sin_out[i] = scale * sin(arg[i]).
    // sin_out may be null.
    void (*cos_sin)(const double* arg, std::size_t n, double scale,
                    double* cos_out, double* sin_out);
};

const KernelTable& scalar_kernels();
// Null when the translation unit was not built for x86-64.
const KernelTable* avx2_kernels();

bool isa_supported(Isa isa);

// Kernel table in use. Chosen once from CPU features; the environment
// variable DRF_SIMD=scalar forces the reference path.
const KernelTable& kernels();

Isa active_isa();
// Throws std::runtime_error if the ISA is not supported on this CPU.
void set_active_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace drf::simd
