#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "evnet/error.hpp"
#include "evnet/kernels.hpp"
#include "evnet/rng.hpp"

namespace k = evnet::kernels;

namespace {

std::vector<double> draw(evnet::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-3.0, 3.0);
  return v;
}

double mag(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
  return s;
}

class Avx2 : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!k::isa_supported(k::Isa::kAvx2)) GTEST_SKIP() << "no AVX2 on this CPU";
  }
};

}  // namespace

TEST_F(Avx2, DotMatchesScalarAcrossLengths) {
  evnet::Rng rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto x = draw(rng, n);
    const auto y = draw(rng, n);
    const double s = k::scalar::dot(x.data(), y.data(), n);
    const double v = k::avx2::dot(x.data(), y.data(), n);
    EXPECT_NEAR(s, v, 1e-13 * (1.0 + mag(x, y))) << "n=" << n;
  }
}

TEST_F(Avx2, AffineMatchesScalar) {
  evnet::Rng rng(12);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto base = draw(rng, n);
    const auto slope = draw(rng, n);
    const auto x = draw(rng, n);
    std::vector<double> a(n), b(n);
    k::scalar::affine(base.data(), slope.data(), x.data(), 0.37, a.data(), n);
    k::avx2::affine(base.data(), slope.data(), x.data(), 0.37, b.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a[i], b[i], 1e-14 * (1.0 + std::abs(a[i])));
  }
}

TEST_F(Avx2, GemvMatchesScalar) {
  evnet::Rng rng(13);
  for (std::size_t rows : {1u, 3u, 8u, 18u}) {
    for (std::size_t cols = 1; cols < 23; ++cols) {
      const auto a = draw(rng, rows * cols);
      const auto x = draw(rng, cols);
      std::vector<double> ys(rows), yv(rows);
      k::scalar::gemv(a.data(), rows, cols, x.data(), ys.data());
      k::avx2::gemv(a.data(), rows, cols, x.data(), yv.data());
      for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(ys[i], yv[i], 1e-12);
    }
  }
}

TEST_F(Avx2, MaxBilinearMatchesScalar) {
  evnet::Rng rng(14);
  for (std::size_t rows : {1u, 5u, 17u}) {
    for (std::size_t width : {1u, 4u, 9u}) {
      for (std::size_t count : {1u, 2u, 3u, 4u, 7u, 31u, 64u}) {
        const auto w = draw(rng, rows);
        const auto a = draw(rng, rows * width);
        const auto s = draw(rng, count);
        const auto vt = draw(rng, width * count);
        std::vector<double> os(rows), ov(rows);
        k::scalar::max_bilinear(w.data(), a.data(), rows, width, s.data(), vt.data(), count, os.data());
        k::avx2::max_bilinear(w.data(), a.data(), rows, width, s.data(), vt.data(), count, ov.data());
        for (std::size_t i = 0; i < rows; ++i) EXPECT_NEAR(os[i], ov[i], 1e-12) << rows << " " << width << " " << count;
      }
    }
  }
}

TEST(Kernels, ScalarMaxBilinearAgainstLoop) {
  // 2 rows, width 2, 3 samples, worked by hand.
  const std::vector<double> w{1.0, -2.0};
  const std::vector<double> a{1.0, 0.0, 0.5, 0.5};
  const std::vector<double> s{1.0, 2.0, -1.0};
  const std::vector<double> vt{3.0, 0.0, 1.0,   // feature 0
                               1.0, 4.0, 0.0};  // feature 1
  std::vector<double> out(2);
  k::scalar::max_bilinear(w.data(), a.data(), 2, 2, s.data(), vt.data(), 3, out.data());
  // row 0: max(-1+3, -2+0, 1+1) = 2
  // row 1: max(2+2, 4+2, -2+0.5) = 6
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 6.0);
}

TEST(Kernels, DispatchFollowsSelectedIsa) {
  const k::Isa before = k::active_isa();
  k::set_active_isa(k::Isa::kScalar);
  EXPECT_EQ(k::active_isa(), k::Isa::kScalar);
  const std::vector<double> x{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(k::dot(x, x), 14.0);
  std::vector<double> out(3);
  k::affine(x, x, x, 2.0, out);
  EXPECT_DOUBLE_EQ(out[2], 3.0 + 2.0 * 9.0);
  if (k::isa_supported(k::Isa::kAvx2)) {
    k::set_active_isa(k::Isa::kAvx2);
    EXPECT_DOUBLE_EQ(k::dot(x, x), 14.0);
    EXPECT_EQ(k::isa_name(k::active_isa()), "avx2");
  }
  k::set_active_isa(before);
}

TEST(Kernels, SpanSizeMismatchRejected) {
  const std::vector<double> x{1.0, 2.0};
  const std::vector<double> y{1.0};
  EXPECT_THROW(k::dot(x, y), evnet::ValidationError);
}
