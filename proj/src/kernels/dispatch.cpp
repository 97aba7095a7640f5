#include <atomic>
#include <cstdlib>
#include <string>

#include "evnet/error.hpp"
#include "evnet/kernels.hpp"

namespace evnet::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("EVNET_KERNELS")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

void check_sizes(bool ok, const char* what) {
  if (!ok) throw ValidationError(std::string("kernel size mismatch in ") + what);
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) { return isa == Isa::kScalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ValidationError("kernel ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> x, std::span<const double> y) {
  check_sizes(x.size() == y.size(), "dot");
  return active_isa() == Isa::kAvx2 ? avx2::dot(x.data(), y.data(), x.size())
                                    : scalar::dot(x.data(), y.data(), x.size());
}

void affine(std::span<const double> base, std::span<const double> slope, std::span<const double> x,
            double scale, std::span<double> out) {
  const std::size_t n = out.size();
  check_sizes(base.size() == n && slope.size() == n && x.size() == n, "affine");
  if (active_isa() == Isa::kAvx2) {
    avx2::affine(base.data(), slope.data(), x.data(), scale, out.data(), n);
  } else {
    scalar::affine(base.data(), slope.data(), x.data(), scale, out.data(), n);
  }
}

void gemv(std::span<const double> a, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  check_sizes(a.size() == rows * cols && x.size() == cols && y.size() == rows, "gemv");
  if (active_isa() == Isa::kAvx2) {
    avx2::gemv(a.data(), rows, cols, x.data(), y.data());
  } else {
    scalar::gemv(a.data(), rows, cols, x.data(), y.data());
  }
}

void max_bilinear(std::span<const double> w, std::span<const double> a, std::size_t rows,
                  std::size_t width, std::span<const double> s, std::span<const double> vt,
                  std::size_t count, std::span<double> out) {
  check_sizes(w.size() == rows && a.size() == rows * width && s.size() == count &&
                  vt.size() == width * count && out.size() == rows,
              "max_bilinear");
  if (active_isa() == Isa::kAvx2) {
    avx2::max_bilinear(w.data(), a.data(), rows, width, s.data(), vt.data(), count, out.data());
  } else {
    scalar::max_bilinear(w.data(), a.data(), rows, width, s.data(), vt.data(), count, out.data());
  }
}

}  // namespace evnet::kernels
