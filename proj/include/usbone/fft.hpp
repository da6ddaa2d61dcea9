#pragma once

#include <complex>
#include <vector>

namespace usbone::fft {

// In-place 2D complex transforms on row-major h*w buffers. Forward is
// unnormalized; inverse scales by 1/(h*w). Plans are cached per (h, w,
// direction) behind a mutex; execution is thread-safe and deterministic.
void forward2d(int h, int w, std::complex<double>* data);
void inverse2d(int h, int w, std::complex<double>* data);

// Smallest power of two >= n.
int next_pow2(int n);

// Signed frequency in cycles/sample for bin k of an n-point transform.
double freq_bin(int k, int n);

}  // namespace usbone::fft
