#include "drf/simd/kernels.hpp"

#include <cmath>

namespace drf::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* a, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(a + r * cols, x, cols);
}

void gemv_t_acc_scalar(const double* a, std::size_t rows, std::size_t cols,
                       const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        if (x[r] != 0.0) axpy_scalar(x[r], a + r * cols, y, cols);
    }
}

void ger_scalar(double alpha, const double* x, std::size_t rows, const double* y,
                std::size_t cols, double* a) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double w = alpha * x[r];
        if (w != 0.0) axpy_scalar(w, y, a + r * cols, cols);
    }
}

void cos_sin_scalar(const double* arg, std::size_t n, double scale, double* cos_out,
                    double* sin_out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double a = arg[i];
        cos_out[i] = scale * std::cos(a);
        if (sin_out) sin_out[i] = scale * std::sin(a);
    }
}

constexpr KernelTable kScalarTable{
    Isa::Scalar, dot_scalar, axpy_scalar, gemv_scalar, gemv_t_acc_scalar, ger_scalar,
    cos_sin_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalarTable; }

}  // namespace drf::simd
