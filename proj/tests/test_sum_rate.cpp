#include <gtest/gtest.h>

#include "statprec/sum_rate.hpp"
#include "test_util.hpp"

namespace statprec {
namespace {

TEST(SumRate, SingleUserOneBit) {
  CMat v = CMat::Zero(3, 1);
  v(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(sum_rate({CVec::Unit(3, 0)}, v, 1.0), 1.0);
}

TEST(SumRate, ZeroPrecodersGiveZero) {
  EXPECT_DOUBLE_EQ(sum_rate({test::random_cvec(4, 1), test::random_cvec(4, 2)}, CMat::Zero(4, 2), 0.5),
                   0.0);
}

TEST(SumRate, OrthogonalUsersFourBits) {
  const double a = std::sqrt(3.0);
  CMat v = CMat::Zero(2, 2);
  v(0, 0) = a;
  v(1, 1) = a;
  EXPECT_NEAR(sum_rate({CVec::Unit(2, 0), CVec::Unit(2, 1)}, v, 1.0), 4.0, 1e-14);
}

TEST(SumRate, UsesPlainTranspose) {
  CVec h(2);
  h << 1.0, cplx(0.0, 1.0);
  EXPECT_NEAR(sum_rate({h}, h / std::sqrt(2.0), 1.0), 0.0, 1e-15);
  EXPECT_NEAR(sum_rate({h}, h.conjugate() / std::sqrt(2.0), 1.0), std::log2(3.0), 1e-14);
}

TEST(SumRate, GradientMatchesFiniteDifferences) {
  const std::vector<CVec> h = {test::random_cvec(4, 1), test::random_cvec(4, 2), test::random_cvec(4, 3)};
  const CMat v = test::random_cmat(4, 3, 4);
  const CMat g = sum_rate_gradient(h, v, 0.3);
  const double step = 1e-6;
  for (Index j = 0; j < 3; ++j)
    for (Index n = 0; n < 4; ++n) {
      CMat plus = v, minus = v;
      plus(n, j) += step;
      minus(n, j) -= step;
      const double d_re = (sum_rate(h, plus, 0.3) - sum_rate(h, minus, 0.3)) / (2 * step);
      plus = v;
      minus = v;
      plus(n, j) += cplx(0.0, step);
      minus(n, j) -= cplx(0.0, step);
      const double d_im = (sum_rate(h, plus, 0.3) - sum_rate(h, minus, 0.3)) / (2 * step);
      EXPECT_NEAR(g(n, j).real(), d_re, 1e-6);
      EXPECT_NEAR(g(n, j).imag(), d_im, 1e-6);
    }
}

TEST(SumRate, ValidatesAndCaps) {
  const std::vector<CVec> h = {test::random_cvec(4, 1), test::random_cvec(4, 2)};
  const CMat v = test::random_cmat(4, 2, 3);
  EXPECT_THROW(sum_rate(h, v, 0.0), std::invalid_argument);
  EXPECT_THROW(sum_rate(h, test::random_cmat(4, 3, 3), 1.0), std::invalid_argument);
  EXPECT_THROW(sum_rate(h, test::random_cmat(5, 2, 3), 1.0), std::invalid_argument);
  const CMat scaled = v / v.norm();
  EXPECT_LE(sum_rate(h, scaled, 0.1), single_user_rate_cap(h, 1.0, 0.1));
  EXPECT_NEAR(total_power(scaled), 1.0, 1e-14);
}

}  // namespace
}  // namespace statprec
