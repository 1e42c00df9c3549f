#include "smpsim/kernels.hpp"

// NEON kernels for aarch64.  Two-wide doubles; same contraction rules as the
// AVX2 forms (fused multiply-add for axpy/dot) so the map-type kernels stay
// bit-identical with the scalar reference.

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace smpsim::kernels::detail {
namespace {

void axpy_v(double* y, const double* x, double a, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void mul_v(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(dst + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void complex_mag_v(const double* re, const double* im, double* out,
                   std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t r = vld1q_f64(re + i);
        float64x2_t m = vld1q_f64(im + i);
        vst1q_f64(out + i, vsqrtq_f64(vfmaq_f64(vmulq_f64(m, m), r, r)));
    }
    for (; i < n; ++i)
        out[i] = std::sqrt(std::fma(re[i], re[i], im[i] * im[i]));
}

double sum_v(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double r = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) r += x[i];
    return r;
}

double dot_v(const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
    double r = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) r = std::fma(x[i], y[i], r);
    return r;
}

MinMax minmax_v(const double* x, std::size_t n) {
    MinMax r{x[0], x[0]};
    std::size_t i = 0;
    if (n >= 2) {
        float64x2_t vmin = vld1q_f64(x);
        float64x2_t vmax = vmin;
        for (i = 2; i + 2 <= n; i += 2) {
            float64x2_t v = vld1q_f64(x + i);
            vmin = vminq_f64(vmin, v);
            vmax = vmaxq_f64(vmax, v);
        }
        r.min = vminvq_f64(vmin);
        r.max = vmaxvq_f64(vmax);
    }
    for (; i < n; ++i) {
        if (x[i] < r.min) r.min = x[i];
        if (x[i] > r.max) r.max = x[i];
    }
    return r;
}

double trapezoid_v(const double* t, const double* x, std::size_t n) {
    if (n < 2) return 0.0;
    const float64x2_t half = vdupq_n_f64(0.5);
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 3 <= n; i += 2) {
        float64x2_t s = vaddq_f64(vld1q_f64(x + i), vld1q_f64(x + i + 1));
        float64x2_t dt = vsubq_f64(vld1q_f64(t + i + 1), vld1q_f64(t + i));
        acc = vfmaq_f64(acc, vmulq_f64(half, s), dt);
    }
    double r = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i + 1 < n; ++i) r += 0.5 * (x[i] + x[i + 1]) * (t[i + 1] - t[i]);
    return r;
}

double trapezoid_sq_dev_v(const double* t, const double* x, double center,
                          std::size_t n) {
    if (n < 2) return 0.0;
    const float64x2_t c = vdupq_n_f64(center);
    const float64x2_t half = vdupq_n_f64(0.5);
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 3 <= n; i += 2) {
        float64x2_t a = vsubq_f64(vld1q_f64(x + i), c);
        float64x2_t b = vsubq_f64(vld1q_f64(x + i + 1), c);
        float64x2_t s = vaddq_f64(vmulq_f64(a, a), vmulq_f64(b, b));
        float64x2_t dt = vsubq_f64(vld1q_f64(t + i + 1), vld1q_f64(t + i));
        acc = vfmaq_f64(acc, vmulq_f64(half, s), dt);
    }
    double r = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i + 1 < n; ++i) {
        const double a = x[i] - center;
        const double b = x[i + 1] - center;
        r += 0.5 * (a * a + b * b) * (t[i + 1] - t[i]);
    }
    return r;
}

}  // namespace

const Table* neon_table() {
    static const Table t{axpy_v,      mul_v, complex_mag_v,
                         sum_v,       dot_v, minmax_v,
                         trapezoid_v, trapezoid_sq_dev_v};
    return &t;
}

}  // namespace smpsim::kernels::detail

#else  // not aarch64

namespace smpsim::kernels::detail {
const Table* neon_table() { return nullptr; }
}  // namespace smpsim::kernels::detail

#endif
