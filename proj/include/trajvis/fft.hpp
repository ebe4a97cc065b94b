#pragma once

#include <complex>
#include <numbers>
#include <vector>

namespace trajvis::detail {

// Iterative radix-2 transform, n a power of two. Inverse includes the 1/n
// scaling so ifft(fft(x)) reproduces x.
inline void fft_inplace(std::complex<double>* a, int n, bool inverse) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / len;
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (int i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (int k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= scale;
  }
}

// Square n x n transform, rows then columns.
inline void fft_2d(std::vector<std::complex<double>>& a, int n, bool inverse) {
  for (int y = 0; y < n; ++y)
    fft_inplace(a.data() + static_cast<std::size_t>(y) * n, n, inverse);
  std::vector<std::complex<double>> col(n);
  for (int x = 0; x < n; ++x) {
    for (int y = 0; y < n; ++y) col[y] = a[static_cast<std::size_t>(y) * n + x];
    fft_inplace(col.data(), n, inverse);
    for (int y = 0; y < n; ++y) a[static_cast<std::size_t>(y) * n + x] = col[y];
  }
}

}  // namespace trajvis::detail
