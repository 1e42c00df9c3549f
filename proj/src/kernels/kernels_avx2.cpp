#include "smpsim/kernels.hpp"

// AVX2 + FMA kernels.  This translation unit is the only one built with
// -mavx2 -mfma; the dispatcher never calls it unless the CPU reports both
// features, so no runtime guard is needed inside the loops.

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace smpsim::kernels::detail {
namespace {

inline double hadd(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

void axpy_v(double* y, const double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, vx, vy));
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void mul_v(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void complex_mag_v(const double* re, const double* im, double* out,
                   std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_loadu_pd(re + i);
        __m256d m = _mm256_loadu_pd(im + i);
        __m256d s = _mm256_fmadd_pd(r, r, _mm256_mul_pd(m, m));
        _mm256_storeu_pd(out + i, _mm256_sqrt_pd(s));
    }
    for (; i < n; ++i)
        out[i] = std::sqrt(std::fma(re[i], re[i], im[i] * im[i]));
}

double sum_v(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hadd(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double dot_v(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double r = hadd(acc);
    for (; i < n; ++i) r = std::fma(x[i], y[i], r);
    return r;
}

MinMax minmax_v(const double* x, std::size_t n) {
    std::size_t i = 0;
    MinMax r{x[0], x[0]};
    if (n >= 4) {
        __m256d vmin = _mm256_loadu_pd(x);
        __m256d vmax = vmin;
        for (i = 4; i + 4 <= n; i += 4) {
            __m256d v = _mm256_loadu_pd(x + i);
            vmin = _mm256_min_pd(vmin, v);
            vmax = _mm256_max_pd(vmax, v);
        }
        alignas(32) double lo[4], hi[4];
        _mm256_store_pd(lo, vmin);
        _mm256_store_pd(hi, vmax);
        r = {lo[0], hi[0]};
        for (int k = 1; k < 4; ++k) {
            if (lo[k] < r.min) r.min = lo[k];
            if (hi[k] > r.max) r.max = hi[k];
        }
    }
    for (; i < n; ++i) {
        if (x[i] < r.min) r.min = x[i];
        if (x[i] > r.max) r.max = x[i];
    }
    return r;
}

double trapezoid_v(const double* t, const double* x, std::size_t n) {
    if (n < 2) return 0.0;
    const __m256d half = _mm256_set1_pd(0.5);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 5 <= n; i += 4) {
        __m256d x0 = _mm256_loadu_pd(x + i);
        __m256d x1 = _mm256_loadu_pd(x + i + 1);
        __m256d dt = _mm256_sub_pd(_mm256_loadu_pd(t + i + 1),
                                   _mm256_loadu_pd(t + i));
        acc = _mm256_fmadd_pd(_mm256_mul_pd(half, _mm256_add_pd(x0, x1)), dt, acc);
    }
    double r = hadd(acc);
    for (; i + 1 < n; ++i) r += 0.5 * (x[i] + x[i + 1]) * (t[i + 1] - t[i]);
    return r;
}

double trapezoid_sq_dev_v(const double* t, const double* x, double center,
                          std::size_t n) {
    if (n < 2) return 0.0;
    const __m256d c = _mm256_set1_pd(center);
    const __m256d half = _mm256_set1_pd(0.5);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 5 <= n; i += 4) {
        __m256d a = _mm256_sub_pd(_mm256_loadu_pd(x + i), c);
        __m256d b = _mm256_sub_pd(_mm256_loadu_pd(x + i + 1), c);
        __m256d s = _mm256_add_pd(_mm256_mul_pd(a, a), _mm256_mul_pd(b, b));
        __m256d dt = _mm256_sub_pd(_mm256_loadu_pd(t + i + 1),
                                   _mm256_loadu_pd(t + i));
        acc = _mm256_fmadd_pd(_mm256_mul_pd(half, s), dt, acc);
    }
    double r = hadd(acc);
    for (; i + 1 < n; ++i) {
        const double a = x[i] - center;
        const double b = x[i + 1] - center;
        r += 0.5 * (a * a + b * b) * (t[i + 1] - t[i]);
    }
    return r;
}

}  // namespace

const Table* avx2_table() {
#if defined(__GNUC__) || defined(__clang__)
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma"))
        return nullptr;
#endif
    static const Table t{axpy_v,      mul_v, complex_mag_v,
                         sum_v,       dot_v, minmax_v,
                         trapezoid_v, trapezoid_sq_dev_v};
    return &t;
}

}  // namespace smpsim::kernels::detail

#else  // not built with AVX2 support

namespace smpsim::kernels::detail {
const Table* avx2_table() { return nullptr; }
}  // namespace smpsim::kernels::detail

#endif
