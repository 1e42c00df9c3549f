#include "smpsim/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "smpsim/kernels.hpp"

namespace smpsim {

bool lu_factor(double* a, int n, int* piv) {
    // The singularity cutoff is relative to the largest entry so that
    // uniformly scaled systems behave identically.
    double amax = 0.0;
    for (int i = 0; i < n * n; ++i) amax = std::max(amax, std::fabs(a[i]));
    const double tiny = amax * 1e-14;

    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::fabs(a[k * n + k]);
        for (int i = k + 1; i < n; ++i) {
            const double v = std::fabs(a[i * n + k]);
            if (v > best) {
                best = v;
                p = i;
            }
        }
        piv[k] = p;
        if (best <= tiny || best == 0.0) return false;
        if (p != k) std::swap_ranges(a + k * n, a + k * n + n, a + p * n);

        const double inv_pivot = 1.0 / a[k * n + k];
        const int tail = n - k - 1;
        for (int i = k + 1; i < n; ++i) {
            const double m = a[i * n + k] * inv_pivot;
            a[i * n + k] = m;
            if (m != 0.0 && tail > 0)
                kernels::axpy(a + i * n + k + 1, a + k * n + k + 1, -m,
                              static_cast<std::size_t>(tail));
        }
    }
    return true;
}

void lu_solve(const double* a, int n, const int* piv, double* b) {
    for (int k = 0; k < n; ++k)
        if (piv[k] != k) std::swap(b[k], b[piv[k]]);
    // Forward substitution with unit lower triangle.
    for (int i = 1; i < n; ++i) {
        double s = b[i];
        for (int j = 0; j < i; ++j) s -= a[i * n + j] * b[j];
        b[i] = s;
    }
    // Back substitution.
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= a[i * n + j] * b[j];
        b[i] = s / a[i * n + i];
    }
}

}  // namespace smpsim
