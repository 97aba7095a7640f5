// Compiled with -mavx2 -mfma; only reached when CPUID reports both.
#include "evnet/kernels.hpp"

#include <algorithm>
#include <limits>

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define EVNET_HAVE_AVX2 1
#endif

namespace evnet::kernels::avx2 {

#ifdef EVNET_HAVE_AVX2

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

}  // namespace

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void affine(const double* base, const double* slope, const double* x, double scale, double* out,
            std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_mul_pd(vs, _mm256_loadu_pd(slope + i));
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(t, _mm256_loadu_pd(x + i), _mm256_loadu_pd(base + i)));
  }
  for (; i < n; ++i) out[i] = base[i] + scale * slope[i] * x[i];
}

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(a + r * cols, x, cols);
}

void max_bilinear(const double* w, const double* a, std::size_t rows, std::size_t width,
                  const double* s, const double* vt, std::size_t count, double* out) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* ai = a + i * width;
    const __m256d nw = _mm256_set1_pd(-w[i]);
    __m256d best = _mm256_set1_pd(neg_inf);
    std::size_t j = 0;
    for (; j + 4 <= count; j += 4) {
      __m256d acc = _mm256_mul_pd(nw, _mm256_loadu_pd(s + j));
      for (std::size_t l = 0; l < width; ++l) {
        if (ai[l] == 0.0) continue;
        acc = _mm256_fmadd_pd(_mm256_set1_pd(ai[l]), _mm256_loadu_pd(vt + l * count + j), acc);
      }
      best = _mm256_max_pd(best, acc);
    }
    double b = hmax(best);
    for (; j < count; ++j) {
      double v = -w[i] * s[j];
      for (std::size_t l = 0; l < width; ++l) {
        if (ai[l] != 0.0) v += ai[l] * vt[l * count + j];
      }
      b = std::max(b, v);
    }
    out[i] = b;
  }
}

#else

double dot(const double* x, const double* y, std::size_t n) { return scalar::dot(x, y, n); }
void affine(const double* base, const double* slope, const double* x, double scale, double* out,
            std::size_t n) {
  scalar::affine(base, slope, x, scale, out, n);
}
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  scalar::gemv(a, rows, cols, x, y);
}
void max_bilinear(const double* w, const double* a, std::size_t rows, std::size_t width,
                  const double* s, const double* vt, std::size_t count, double* out) {
  scalar::max_bilinear(w, a, rows, width, s, vt, count, out);
}

#endif

}  // namespace evnet::kernels::avx2
