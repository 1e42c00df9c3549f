#include "smpsim/fft.hpp"

#include <cmath>
#include <numbers>

namespace smpsim {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace {

void bit_reverse_permute(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
}

void transform(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    if (re.size() != im.size())
        throw std::invalid_argument("fft: re and im lengths differ");
    const std::size_t n = re.size();
    if (!is_pow2(n)) throw std::invalid_argument("fft: length must be a power of two");
    if (n == 1) return;

    bit_reverse_permute(re, im);

    std::vector<double> wr, wi;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi /
                           static_cast<double>(len);
        wr.resize(half);
        wi.resize(half);
        for (std::size_t k = 0; k < half; ++k) {
            wr[k] = std::cos(ang * static_cast<double>(k));
            wi[k] = std::sin(ang * static_cast<double>(k));
        }
        for (std::size_t base = 0; base < n; base += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const std::size_t u = base + k;
                const std::size_t v = u + half;
                const double tr = re[v] * wr[k] - im[v] * wi[k];
                const double ti = re[v] * wi[k] + im[v] * wr[k];
                re[v] = re[u] - tr;
                im[v] = im[u] - ti;
                re[u] += tr;
                im[u] += ti;
            }
        }
    }

    if (inverse) {
        const double s = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            re[i] *= s;
            im[i] *= s;
        }
    }
}

}  // namespace

void fft_forward(std::vector<double>& re, std::vector<double>& im) {
    transform(re, im, false);
}

void fft_inverse(std::vector<double>& re, std::vector<double>& im) {
    transform(re, im, true);
}

}  // namespace smpsim
