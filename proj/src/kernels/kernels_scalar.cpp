#include "smpsim/kernels.hpp"

#include <cmath>

// Scalar reference kernels.  These define the semantics the SIMD variants are
// tested against.  axpy and complex_mag spell out their fused multiply-add
// with std::fma so the elementwise results match the explicitly fused
// AVX2/NEON forms exactly, independent of compiler contraction settings.

namespace smpsim::kernels::detail {
namespace {

void axpy_s(double* y, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void mul_s(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void complex_mag_s(const double* re, const double* im, double* out,
                   std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::sqrt(std::fma(re[i], re[i], im[i] * im[i]));
}

double sum_s(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double dot_s(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc = std::fma(x[i], y[i], acc);
    return acc;
}

MinMax minmax_s(const double* x, std::size_t n) {
    MinMax r{x[0], x[0]};
    for (std::size_t i = 1; i < n; ++i) {
        if (x[i] < r.min) r.min = x[i];
        if (x[i] > r.max) r.max = x[i];
    }
    return r;
}

double trapezoid_s(const double* t, const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i)
        acc += 0.5 * (x[i] + x[i + 1]) * (t[i + 1] - t[i]);
    return acc;
}

double trapezoid_sq_dev_s(const double* t, const double* x, double center,
                          std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = x[i] - center;
        const double b = x[i + 1] - center;
        acc += 0.5 * (a * a + b * b) * (t[i + 1] - t[i]);
    }
    return acc;
}

}  // namespace

const Table& scalar_table() {
    static const Table t{axpy_s,   mul_s, complex_mag_s,
                         sum_s,    dot_s, minmax_s,
                         trapezoid_s, trapezoid_sq_dev_s};
    return t;
}

}  // namespace smpsim::kernels::detail
