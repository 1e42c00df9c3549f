#pragma once

#include <cstddef>

// Small dense numeric kernels used by the solver and the waveform analysis.
//
// Every kernel exists in a scalar reference form and, where the platform
// supports it, a SIMD form (AVX2 on x86-64, NEON on aarch64).  The dispatcher
// picks the widest supported variant once at startup; SMPSIM_KERNELS=scalar,
// avx2 or neon overrides the choice, and force_target() does the same from
// code (used by the equivalence tests).
//
// Map-type kernels (axpy, mul, complex_mag) are elementwise and bit-identical
// across variants: the scalar forms use the same fused-multiply-add contraction
// the vector forms do.  Reduction-type kernels (sum, dot, minmax, trapezoid*)
// accumulate in a different order per variant and agree only to rounding.

namespace smpsim::kernels {

struct MinMax {
    double min;
    double max;
};

/// y[i] += a * x[i]
void axpy(double* y, const double* x, double a, std::size_t n);

/// dst[i] = a[i] * b[i]
void mul(double* dst, const double* a, const double* b, std::size_t n);

/// out[i] = sqrt(re[i]^2 + im[i]^2)
void complex_mag(const double* re, const double* im, double* out, std::size_t n);

double sum(const double* x, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

/// Min and max over x; n must be >= 1.
MinMax minmax(const double* x, std::size_t n);

/// Trapezoid integral of samples x over (possibly non-uniform) abscissae t.
double trapezoid(const double* t, const double* x, std::size_t n);

/// Trapezoid integral of (x - center)^2 over t.
double trapezoid_sq_dev(const double* t, const double* x, double center,
                        std::size_t n);

/// Name of the variant currently dispatched: "scalar", "avx2" or "neon".
const char* active_target();

/// Force a variant by name; throws std::invalid_argument if unavailable.
void force_target(const char* name);

namespace detail {
// Per-variant entry points, exposed for the equivalence tests.
struct Table {
    void (*axpy)(double*, const double*, double, std::size_t);
    void (*mul)(double*, const double*, const double*, std::size_t);
    void (*complex_mag)(const double*, const double*, double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    MinMax (*minmax)(const double*, std::size_t);
    double (*trapezoid)(const double*, const double*, std::size_t);
    double (*trapezoid_sq_dev)(const double*, const double*, double, std::size_t);
};
const Table& scalar_table();
const Table* avx2_table();   // nullptr when unsupported at build or run time
const Table* neon_table();   // nullptr off aarch64
}  // namespace detail

}  // namespace smpsim::kernels
