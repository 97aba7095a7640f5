#include "evnet/kernels.hpp"

#include <limits>

namespace evnet::kernels::scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void affine(const double* base, const double* slope, const double* x, double scale, double* out,
            std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = base[i] + scale * slope[i] * x[i];
}

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(a + r * cols, x, cols);
}

void max_bilinear(const double* w, const double* a, std::size_t rows, std::size_t width,
                  const double* s, const double* vt, std::size_t count, double* out) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* ai = a + i * width;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
      double v = -w[i] * s[j];
      for (std::size_t l = 0; l < width; ++l) {
        if (ai[l] != 0.0) v += ai[l] * vt[l * count + j];
      }
      if (v > best) best = v;
    }
    out[i] = best;
  }
}

}  // namespace evnet::kernels::scalar
