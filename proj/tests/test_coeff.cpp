#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "stokeshom/coeff.hpp"
#include "stokeshom/errors.hpp"
#include "stokeshom/random.hpp"
#include "support.hpp"

namespace stokeshom {
namespace {

CoefficientField family(const std::string& name, std::vector<double> params) { return builtin_family(name, params); }

Mat identity() {
  Mat xi{};
  for (int i = 0; i < kDim; ++i) xi[mat_index(i, i)] = 1.0;
  return xi;
}

TEST(Coeff, ClassicalContractionWithIdentityIsDim) {
  const auto a = family("classical", {1.0});
  SeededRng rng(1);
  for (int k = 0; k < 20; ++k) {
    const Point y = {rng.uniform(), rng.uniform()};
    EXPECT_DOUBLE_EQ(a(y).contract(identity(), identity()), static_cast<double>(kDim));
  }
}

TEST(Coeff, ConstantFamilyReturnsItsTensor) {
  std::vector<double> p(16, 0.0);
  p[Tensor4::index(0, 0, 0, 0)] = 2.0;
  p[Tensor4::index(0, 0, 1, 1)] = 1.0;
  p[Tensor4::index(1, 1, 0, 0)] = 1.5;
  p[Tensor4::index(1, 1, 1, 1)] = 1.0;
  p[Tensor4::index(0, 1, 0, 1)] = 0.2;
  const auto a = family("constant", p);
  SeededRng rng(2);
  for (int k = 0; k < 20; ++k) {
    const Tensor4 t = a({rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)});
    for (std::size_t i = 0; i < Tensor4::kSize; ++i) EXPECT_EQ(t.data()[i], p[i]);
  }
}

TEST(Coeff, TrigQuotientsWithinBounds) {
  const auto a = family("trig", {0.5, 0.4});
  const EllipticityReport r = check_ellipticity(a, 10000, 7);
  EXPECT_TRUE(r.passed);
  EXPECT_GE(r.min_quotient, 0.5);
  EXPECT_LE(r.max_quotient, 2.0);
  // The symmetric part is c(y) δδ with c ∈ [0.6, 1.4].
  EXPECT_GE(r.min_quotient, 0.6 - 1e-12);
  EXPECT_LE(r.max_quotient, 1.4 + 1e-12);
}

TEST(Coeff, ClassicalQuotientIsOne) {
  const EllipticityReport r = check_ellipticity(family("classical", {1.0}), 100, 3);
  EXPECT_NEAR(r.min_quotient, 1.0, 1e-14);
  EXPECT_NEAR(r.max_quotient, 1.0, 1e-14);
  EXPECT_TRUE(r.passed);
}

TEST(Coeff, LaminateQuotientsMatchLayerEigenvalues) {
  const EllipticityReport r = check_ellipticity(family("laminate", {1.0, 4.0}), 10000, 4);
  EXPECT_GE(r.min_quotient, 1.0 - 1e-12);
  EXPECT_LE(r.max_quotient, 4.0 + 1e-12);
  EXPECT_TRUE(r.passed);
}

TEST(Coeff, CheckerboardQuotientsMatchCellEigenvalues) {
  const EllipticityReport r = check_ellipticity(family("checkerboard", {1.0, 9.0}), 10000, 5);
  EXPECT_GE(r.min_quotient, 1.0 - 1e-12);
  EXPECT_LE(r.max_quotient, 9.0 + 1e-12);
  EXPECT_TRUE(r.passed);
}

TEST(Coeff, EveryFamilyIsEllipticOnSamples) {
  std::vector<double> c16(16, 0.0);
  c16[Tensor4::index(0, 0, 0, 0)] = c16[Tensor4::index(1, 1, 1, 1)] = 1.0;
  c16[Tensor4::index(0, 0, 1, 1)] = c16[Tensor4::index(1, 1, 0, 0)] = 0.7;
  const std::vector<CoefficientField> all = {family("constant", c16), family("classical", {0.3}),
                                             family("laminate", {1.0, 4.0, 2.0}), family("trig", {0.5, 0.4, 0.3}),
                                             family("checkerboard", {1.0, 9.0})};
  for (const auto& a : all) {
    const EllipticityReport r = check_ellipticity(a, 10000, 11);
    EXPECT_TRUE(r.passed) << a.name();
    EXPECT_GE(r.min_quotient, a.mu() - 1e-12) << a.name();
    EXPECT_LE(r.max_quotient, 1.0 / a.mu() + 1e-12) << a.name();
  }
}

TEST(Coeff, PeriodicUnderIntegerShifts) {
  const std::vector<CoefficientField> all = {family("trig", {0.5, 0.4}), family("laminate", {1.0, 4.0}),
                                             family("checkerboard", {1.0, 9.0})};
  SeededRng rng(6);
  for (const auto& a : all)
    for (int k = 0; k < 200; ++k) {
      const Point y = {rng.uniform(), rng.uniform()};
      const int z0 = static_cast<int>(std::floor(rng.uniform(-4.0, 4.0)));
      const int z1 = static_cast<int>(std::floor(rng.uniform(-4.0, 4.0)));
      // Reduction modulo 1 may move y by one ulp; compare values, not bits.
      EXPECT_LE(a(y).max_abs_diff(a({y[0] + z0, y[1] + z1})), 1e-12) << a.name();
    }
}

TEST(Coeff, CheckerboardIsOneSidedAtJumps) {
  const auto a = family("checkerboard", {1.0, 9.0});
  EXPECT_EQ(a({0.5, 0.0})(0, 0, 0, 0), 9.0);
  EXPECT_EQ(a({0.4999, 0.0})(0, 0, 0, 0), 1.0);
  EXPECT_EQ(a({0.5, 0.5})(0, 0, 0, 0), 1.0);
  EXPECT_EQ(a({1.0, 0.0})(0, 0, 0, 0), 1.0);  // y = 1 wraps to 0
}

TEST(Coeff, LaminateDependsOnlyOnFirstCoordinate) {
  const auto a = family("laminate", {1.0, 4.0});
  SeededRng rng(8);
  for (int k = 0; k < 100; ++k) {
    const double y1 = rng.uniform();
    EXPECT_EQ(a({y1, rng.uniform()}), a({y1, rng.uniform()}));
  }
  EXPECT_EQ(a({0.25, 0.3})(0, 0, 0, 0), 1.0);
  EXPECT_EQ(a({0.75, 0.3})(1, 1, 1, 1), 4.0);
}

TEST(Coeff, TrigGradientMatchesCentralDifferences) {
  const auto a = family("trig", {0.5, 0.4});
  ASSERT_TRUE(a.has_gradient());
  SeededRng rng(9);
  const double d = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const Point y = {rng.uniform(), rng.uniform()};
    const Tensor4Gradient g = a.gradient(y);
    for (int dir = 0; dir < kDim; ++dir) {
      Point yp = y, ym = y;
      yp[dir] += d;
      ym[dir] -= d;
      const Tensor4 ap = a(yp), am = a(ym);
      for (std::size_t e = 0; e < Tensor4::kSize; ++e)
        EXPECT_NEAR(g[dir].data()[e], (ap.data()[e] - am.data()[e]) / (2.0 * d), 1e-8);
    }
  }
}

TEST(Coeff, OnlySmoothFamiliesCarryGradients) {
  EXPECT_TRUE(family("trig", {0.5, 0.4}).has_gradient());
  EXPECT_FALSE(family("laminate", {1.0, 4.0}).has_gradient());
  EXPECT_FALSE(family("checkerboard", {1.0, 9.0}).has_gradient());
  EXPECT_THROW((void)family("checkerboard", {1.0, 9.0}).gradient({0.1, 0.1}), InvalidInput);
  EXPECT_EQ(family("trig", {0.5, 0.4}).smoothness(), Smoothness::kSmooth);
  EXPECT_EQ(family("checkerboard", {1.0, 9.0}).smoothness(), Smoothness::kPiecewiseConstant);
}

TEST(Coeff, AdjointOfClassicalIsItself) {
  const auto a = family("classical", {0.7});
  const auto s = adjoint(a);
  EXPECT_EQ(s({0.2, 0.9}), a({0.2, 0.9}));
  EXPECT_EQ(s.mu(), a.mu());
}

TEST(Coeff, AdjointIsAnExactInvolution) {
  const std::vector<CoefficientField> all = {family("trig", {0.5, 0.4}), family("checkerboard", {1.0, 9.0}),
                                             family("laminate", {1.0, 4.0})};
  SeededRng rng(10);
  for (const auto& a : all) {
    const auto twice = adjoint(adjoint(a));
    for (int k = 0; k < 100; ++k) {
      const Point y = {rng.uniform(), rng.uniform()};
      EXPECT_EQ(twice(y), a(y)) << a.name();
    }
  }
}

TEST(Coeff, TrigAdjointSwapsIndexPairs) {
  const auto a = family("trig", {0.5, 0.4});
  const auto s = adjoint(a);
  const Point y = {0.3, 0.7};
  // (i=1, j=2, α=1, β=2) of A* against (i=2, j=1, α=2, β=1) of A, 1-based.
  EXPECT_EQ(s(y)(0, 1, 0, 1), a(y)(1, 0, 1, 0));
  EXPECT_NE(a(y)(0, 1, 0, 1), a(y)(1, 0, 1, 0));  // the family is not symmetric there
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      for (int al = 0; al < kDim; ++al)
        for (int be = 0; be < kDim; ++be) EXPECT_EQ(s(y)(i, j, al, be), a(y)(j, i, be, al));
}

TEST(Coeff, RejectsUnknownFamiliesAndBadParameters) {
  EXPECT_THROW(family("spiral", {1.0}), InvalidInput);
  EXPECT_THROW(family("classical", {0.0}), InvalidInput);
  EXPECT_THROW(family("classical", {-1.0}), InvalidInput);
  EXPECT_THROW(family("laminate", {}), InvalidInput);
  EXPECT_THROW(family("laminate", {1.0, -4.0}), InvalidInput);
  EXPECT_THROW(family("trig", {0.5}), InvalidInput);
  EXPECT_THROW(family("trig", {0.9, 0.4}), InvalidInput);
  EXPECT_THROW(family("checkerboard", {1.0, 0.0}), InvalidInput);
  EXPECT_THROW(family("constant", std::vector<double>(16, 0.0)), InvalidInput);
}

TEST(Coeff, EllipticitySamplingIsSeeded) {
  const auto a = family("trig", {0.5, 0.4});
  const EllipticityReport r1 = check_ellipticity(a, 500, 42);
  const EllipticityReport r2 = check_ellipticity(a, 500, 42);
  EXPECT_EQ(r1.min_quotient, r2.min_quotient);
  EXPECT_EQ(r1.max_quotient, r2.max_quotient);
}

}  // namespace
}  // namespace stokeshom
