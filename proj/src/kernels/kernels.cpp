#include "smpsim/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace smpsim::kernels {
namespace {

struct Dispatch {
    const detail::Table* table;
    const char* name;
};

Dispatch pick(const char* requested) {
    if (requested) {
        if (std::strcmp(requested, "scalar") == 0)
            return {&detail::scalar_table(), "scalar"};
        if (std::strcmp(requested, "avx2") == 0) {
            if (const auto* t = detail::avx2_table()) return {t, "avx2"};
            throw std::invalid_argument("kernel target 'avx2' not available on this cpu");
        }
        if (std::strcmp(requested, "neon") == 0) {
            if (const auto* t = detail::neon_table()) return {t, "neon"};
            throw std::invalid_argument("kernel target 'neon' not available on this cpu");
        }
        if (std::strcmp(requested, "auto") != 0)
            throw std::invalid_argument(std::string("unknown kernel target '") +
                                        requested + "'");
    }
    if (const auto* t = detail::avx2_table()) return {t, "avx2"};
    if (const auto* t = detail::neon_table()) return {t, "neon"};
    return {&detail::scalar_table(), "scalar"};
}

Dispatch& current() {
    static Dispatch d = pick(std::getenv("SMPSIM_KERNELS"));
    return d;
}

}  // namespace

void axpy(double* y, const double* x, double a, std::size_t n) {
    current().table->axpy(y, x, a, n);
}
void mul(double* dst, const double* a, const double* b, std::size_t n) {
    current().table->mul(dst, a, b, n);
}
void complex_mag(const double* re, const double* im, double* out, std::size_t n) {
    current().table->complex_mag(re, im, out, n);
}
double sum(const double* x, std::size_t n) { return current().table->sum(x, n); }
double dot(const double* x, const double* y, std::size_t n) {
    return current().table->dot(x, y, n);
}
MinMax minmax(const double* x, std::size_t n) {
    return current().table->minmax(x, n);
}
double trapezoid(const double* t, const double* x, std::size_t n) {
    return current().table->trapezoid(t, x, n);
}
double trapezoid_sq_dev(const double* t, const double* x, double center,
                        std::size_t n) {
    return current().table->trapezoid_sq_dev(t, x, center, n);
}

const char* active_target() { return current().name; }

void force_target(const char* name) { current() = pick(name); }

}  // namespace smpsim::kernels
