#pragma once

/// Radix-2 FFT on split real/imaginary arrays.
///
/// The transform is iterative (bit-reversal permutation followed by
/// log2(n) butterfly stages) and allocates its twiddle factors per call,
/// so concurrent transforms from different threads never share state.

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace smpsim {

/// True when n is a power of two (and at least 1).
constexpr bool is_pow2(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// Smallest power of two that is >= n.
std::size_t next_pow2(std::size_t n);

/// In-place forward DFT of the complex sequence (re[k] + j*im[k]).
/// No normalization is applied. Throws std::invalid_argument unless the
/// length is a power of two.
void fft_forward(std::vector<double>& re, std::vector<double>& im);

/// In-place inverse DFT, including the 1/n scaling, so that
/// fft_inverse(fft_forward(x)) == x up to rounding.
void fft_inverse(std::vector<double>& re, std::vector<double>& im);

}  // namespace smpsim
