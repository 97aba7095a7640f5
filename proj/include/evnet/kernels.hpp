#pragma once

// Dense inner loops used by the assignment solver and the reserve sampler.
//
// Every kernel has a scalar reference implementation and an AVX2/FMA variant. The variant is
// picked once at startup from CPUID (override with EVNET_KERNELS=scalar) and the two are
// equivalence-tested in tests/kernels_test.cpp. Results agree to rounding, not bit-for-bit:
// the vector code uses FMA and a different summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace evnet::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);

// Currently selected implementation.
Isa active_isa();

// Force an implementation (tests, benchmarking). Throws ValidationError if the CPU lacks it.
void set_active_isa(Isa isa);

// sum_i x[i] * y[i]
double dot(std::span<const double> x, std::span<const double> y);

// out[i] = base[i] + scale * slope[i] * x[i]
void affine(std::span<const double> base, std::span<const double> slope, std::span<const double> x,
            double scale, std::span<double> out);

// y = A x with A row-major (rows x cols).
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);

// For each row i of a (rows x width, row-major) with scalar weight w[i]:
//   out[i] = max_j ( -w[i] * s[j] + sum_l a[i,l] * vt[l,j] )
// vt is stored feature-major (width x count, row-major) so the j loop is contiguous.
void max_bilinear(std::span<const double> w, std::span<const double> a, std::size_t rows,
                  std::size_t width, std::span<const double> s, std::span<const double> vt,
                  std::size_t count, std::span<double> out);

// Raw entry points, exposed for the equivalence tests.
namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void affine(const double* base, const double* slope, const double* x, double scale, double* out,
            std::size_t n);
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
void max_bilinear(const double* w, const double* a, std::size_t rows, std::size_t width,
                  const double* s, const double* vt, std::size_t count, double* out);
}  // namespace scalar

namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
void affine(const double* base, const double* slope, const double* x, double scale, double* out,
            std::size_t n);
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
void max_bilinear(const double* w, const double* a, std::size_t rows, std::size_t width,
                  const double* s, const double* vt, std::size_t count, double* out);
}  // namespace avx2

}  // namespace evnet::kernels
