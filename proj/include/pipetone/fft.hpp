#pragma once

// Iterative radix-2 FFT. Power-of-two sizes take the fast in-place path;
// anything else is routed through Bluestein's chirp transform, which restates
// an n-point DFT as a circular convolution carried by the radix-2 core, so
// every size is computed exactly (no silent padding). Twiddles and chirp
// kernels come from per-size cached tables built with std::polar; the usual
// incremental-rotation trick drifts too much for the 1e-9 tolerances used in
// the tests.

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace pipetone {

using cdouble = std::complex<double>;

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// exp(-2*pi*i*k/n) for k < n/2.
inline const std::vector<cdouble>& fft_roots(std::size_t n) {
  static std::map<std::size_t, std::vector<cdouble>> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<cdouble> roots(n / 2);
  const double step = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t k = 0; k < n / 2; ++k)
    roots[k] = std::polar(1.0, step * static_cast<double>(k));
  return cache.emplace(n, std::move(roots)).first->second;
}

void bluestein(std::vector<cdouble>& a);

}  // namespace detail

inline void fft(std::vector<cdouble>& a) {
  const std::size_t n = a.size();
  if (n == 0) throw std::invalid_argument("fft: empty input");
  if ((n & (n - 1)) != 0) {
    detail::bluestein(a);
    return;
  }
  if (n == 1) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& roots = detail::fft_roots(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cdouble w = roots[k * stride];
        const cdouble u = a[i + k];
        const cdouble v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

inline void ifft(std::vector<cdouble>& a) {
  for (auto& x : a) x = std::conj(x);
  fft(a);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (auto& x : a) x = std::conj(x) * inv;
}

namespace detail {

struct BluesteinPlan {
  std::vector<cdouble> chirp;   // exp(-i*pi*k^2/n) for k < n
  std::vector<cdouble> kernel;  // transform of the wrapped conjugate chirp
};

inline const BluesteinPlan& bluestein_plan(std::size_t n) {
  static std::map<std::size_t, BluesteinPlan> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  BluesteinPlan plan;
  plan.chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // The chirp phase has period 2n in k^2, so reduce before converting to an
    // angle; k^2 itself overflows the useful double range for large sizes.
    const auto r = static_cast<unsigned long long>(k) * k % (2 * n);
    plan.chirp[k] =
        std::polar(1.0, -3.14159265358979323846 * static_cast<double>(r) / static_cast<double>(n));
  }
  // Linear convolution of length 2n-1, rounded up to the radix-2 grid. The
  // kernel is even in its index, so it wraps onto the tail of the buffer.
  const std::size_t m = next_pow2(2 * n - 1);
  plan.kernel.assign(m, cdouble{0.0, 0.0});
  plan.kernel[0] = std::conj(plan.chirp[0]);
  for (std::size_t k = 1; k < n; ++k) plan.kernel[k] = plan.kernel[m - k] = std::conj(plan.chirp[k]);
  fft(plan.kernel);
  return cache.emplace(n, std::move(plan)).first->second;
}

// X[k] = chirp[k] * sum_j (x[j] * chirp[j]) * conj(chirp[k - j]), evaluated
// as one circular convolution at a power-of-two size.
inline void bluestein(std::vector<cdouble>& a) {
  const std::size_t n = a.size();
  const auto& plan = bluestein_plan(n);
  const std::size_t m = plan.kernel.size();
  std::vector<cdouble> work(m, cdouble{0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) work[k] = a[k] * plan.chirp[k];
  fft(work);
  for (std::size_t k = 0; k < m; ++k) work[k] *= plan.kernel[k];
  ifft(work);
  for (std::size_t k = 0; k < n; ++k) a[k] = work[k] * plan.chirp[k];
}

}  // namespace detail

// Forward transform of a real signal, zero-padded to transform_len.
inline std::vector<cdouble> fft_real(const std::vector<double>& x, std::size_t transform_len) {
  if (transform_len < x.size()) throw std::invalid_argument("fft_real: transform_len shorter than input");
  std::vector<cdouble> a(transform_len, cdouble{0.0, 0.0});
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = cdouble{x[i], 0.0};
  fft(a);
  return a;
}

}  // namespace pipetone
