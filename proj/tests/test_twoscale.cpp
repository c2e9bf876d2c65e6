#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stokeshom/errors.hpp"
#include "stokeshom/rates.hpp"
#include "stokeshom/twoscale.hpp"
#include "support.hpp"

namespace stokeshom {
namespace {

using testing::kPi;

DomainMesh padded_mesh(int m, double eps) { return DomainMesh(m, static_cast<int>(std::ceil(eps * m)) + 1); }

template <class Fn>
double max_deviation(const QuadratureField& f, int comp, Fn&& expect) {
  const auto& mesh = *f.mesh();
  double d = 0.0;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const int qp = mesh.element_index(ex, ey) * fe::kQuadPerElement + q;
        d = std::max(d, std::fabs(f.value(qp, comp) - expect(mesh.quad_point(ex, ey, q))));
      }
  return d;
}

// ‖f u‖ over the target mesh for scalar quadrature fields.
double product_norm(const QuadratureField& f, const QuadratureField& u) {
  const auto& mesh = *f.mesh();
  double s = 0.0;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const int qp = mesh.element_index(ex, ey) * fe::kQuadPerElement + q;
        s += mesh.quad_weight(q) * std::pow(f.value(qp, 0) * u.value(qp, 0), 2);
      }
  return std::sqrt(s);
}

TEST(TwoScale, SubdivisionsResolveTheMesh) {
  EXPECT_EQ(steklov_subdivisions(0.125, 1.0 / 64), 9);
  EXPECT_EQ(steklov_subdivisions(0.1, 1.0 / 8), 1);
  for (double eps : {0.25, 0.1, 0.03})
    for (double h : {1.0 / 16, 1.0 / 50}) {
      const int k = steklov_subdivisions(eps, h);
      EXPECT_LT(eps / k, h);
      if (k > 1) {
        EXPECT_GE(eps / (k - 1), h);
      }
    }
  EXPECT_THROW((void)steklov_subdivisions(0.0, 0.1), InvalidInput);
}

TEST(TwoScale, SteklovOfConstantIsExact) {
  for (double eps : {0.25, 0.125, 1.0 / 24}) {
    const DomainMesh dm = padded_mesh(24, eps);
    const GridFunction c = interpolate(dm.padded(), Space::kQ2, 1, [](const Point&) { return -1.75; });
    const QuadratureField s = steklov(c, eps, dm.mesh(), true);
    EXPECT_LE(max_deviation(s, 0, [](const Point&) { return -1.75; }), 1e-14);
    for (int qp = 0; qp < s.num_points(); ++qp) {
      EXPECT_NEAR(s.grad(qp, 0, 0), 0.0, 1e-12);
      EXPECT_NEAR(s.grad(qp, 0, 1), 0.0, 1e-12);
    }
  }
}

TEST(TwoScale, SteklovOfFirstCoordinateShiftsByHalfEps) {
  for (double eps : {0.25, 0.125, 0.0625}) {
    const DomainMesh dm = padded_mesh(32, eps);
    const GridFunction x1 = interpolate(dm.padded(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
    const QuadratureField s = steklov(x1, eps, dm.mesh(), true);
    EXPECT_LE(max_deviation(s, 0, [eps](const Point& x) { return x[0] - eps / 2.0; }), 1e-10);
    for (int qp = 0; qp < s.num_points(); qp += 7) {
      EXPECT_NEAR(s.grad(qp, 0, 0), 1.0, 1e-10);
      EXPECT_NEAR(s.grad(qp, 0, 1), 0.0, 1e-10);
    }
    const GridFunction sn = steklov_nodal(x1, eps, dm.mesh());
    EXPECT_NEAR(sn.value_at(0, {0.4, 0.7}), 0.4 - eps / 2.0, 1e-10);
  }
}

TEST(TwoScale, SteklovRequiresCover) {
  const DomainMesh dm(16, 1);
  const GridFunction f = interpolate(dm.padded(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
  EXPECT_NO_THROW((void)steklov(f, 1.0 / 16, dm.mesh(), false));
  EXPECT_THROW((void)steklov(f, 0.25, dm.mesh(), false), ResolutionError);
  const GridFunction inner = interpolate(dm.mesh(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
  EXPECT_THROW((void)steklov(inner, 0.1, dm.mesh(), false), ResolutionError);
}

TEST(TwoScale, SteklovIsAContraction) {
  SeededRng rng(11);
  for (int k = 0; k < 20; ++k) {
    const double eps = std::ldexp(1.0, -2 - k % 3);
    const DomainMesh dm = padded_mesh(32, eps);
    const testing::RandomSmooth fn(rng);
    const GridFunction u = interpolate(dm.padded(), Space::kQ2, 1, fn);
    EXPECT_LE(l2_norm(steklov(u, eps, dm.mesh(), false)), l2_norm(u) + 1e-10);
  }
}

TEST(TwoScale, SmoothingErrorIsFirstOrderInEps) {
  // ‖S_ε u − u‖_Ω ≤ ε ⨍|z| ‖∇u‖_{Ω+εY} with ⨍|z| ≈ 0.765, so that ratio stays below 1.
  std::vector<double> measured;
  for (double eps : {0.125, 0.0625, 0.03125}) {
    const DomainMesh dm = padded_mesh(64, eps);
    auto fn = [](const Point& x) { return std::sin(kPi * x[0]); };
    const GridFunction up = interpolate(dm.padded(), Space::kQ2, 1, fn);
    const GridFunction inner = interpolate(dm.mesh(), Space::kQ2, 1, fn);
    const double d = l2_distance(steklov(up, eps, dm.mesh(), false), sample_at_quadrature(inner));
    EXPECT_LE(d / (eps * h1_seminorm(up)), 1.0);
    measured.push_back(d / (eps * h1_seminorm(inner)));
  }
  // For a function of x₁ alone S_ε u − u ≈ −(ε/2) ∂₁u: the constant is 1/2.
  for (double c : measured) EXPECT_NEAR(c, 0.5, 0.01);
  EXPECT_NEAR(measured[2] / measured[0], 1.0, 0.01);
}

TEST(TwoScale, SmoothingErrorBoundHoldsForSeededFields) {
  SeededRng rng(12);
  for (int k = 0; k < 100; ++k) {
    const double eps = std::ldexp(1.0, -2 - k % 3);
    const DomainMesh dm = padded_mesh(16, eps);
    const testing::RandomSmooth fn(rng);
    const GridFunction up = interpolate(dm.padded(), Space::kQ2, 1, fn);
    const QuadratureField u = sample_at_quadrature(interpolate(dm.mesh(), Space::kQ2, 1, fn));
    const double d = l2_distance(steklov(up, eps, dm.mesh(), false), u);
    EXPECT_LE(d, eps * h1_seminorm(up)) << k;
  }
}

TEST(TwoScale, PeriodicWeightBoundHoldsForSeededPairs) {
  // ‖f^ε S_ε u‖_{L²(Ω)} ≤ ‖f‖_{L²(Y)} ‖u‖_{L²(Ω + εY)}.
  SeededRng rng(13);
  const CellGrid g(16);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    // The study mesh rule m = 8/ε keeps the Gauss rule resolving f^ε.
    const double eps = std::ldexp(1.0, -2 - k % 2);
    const DomainMesh dm = padded_mesh(static_cast<int>(8.0 / eps), eps);
    const testing::RandomPeriodic fy(rng);
    const testing::RandomSmooth ux(rng);
    const GridFunction f = interpolate(g.mesh(), Space::kQ2, 1, fy);
    const GridFunction u = interpolate(dm.padded(), Space::kQ2, 1, ux);
    const double lhs = product_norm(sample_periodic(f, eps, dm.mesh()), steklov(u, eps, dm.mesh(), false));
    const double rhs = l2_norm(f) * l2_norm(u);
    EXPECT_LE(lhs, rhs) << k;
    worst = std::max(worst, lhs / rhs);
  }
  EXPECT_GT(worst, 0.1);  // the bound is not vacuous for these fields
}

TEST(TwoScale, BoundaryLayerScalesLikeSquareRootOfEps) {
  const CellGrid g(16);
  const GridFunction f = interpolate(g.mesh(), Space::kQ2, 1,
                                     [](const Point& y) { return 1.0 + 0.5 * std::cos(2 * kPi * y[0]) * std::sin(2 * kPi * y[1]); });
  std::vector<double> scaled;
  for (double eps : {0.25, 0.125, 0.0625, 0.03125}) {
    const DomainMesh dm = padded_mesh(64, eps);
    const GridFunction u = interpolate(dm.padded(), Space::kQ2, 1,
                                       [](const Point& x) { return std::cos(kPi * x[0]) + x[1]; });
    scaled.push_back(boundary_layer_norm(f, u, eps, dm.mesh()) / std::sqrt(eps));
  }
  for (std::size_t k = 1; k < scaled.size(); ++k) {
    EXPECT_LT(scaled[k] / scaled[k - 1], 1.5);
    EXPECT_GT(scaled[k] / scaled[k - 1], 0.5);
  }
}

TEST(TwoScale, ExtensionReflectsFirstCoordinate) {
  const DomainMesh dm(16, 3);
  const GridFunction x1 = interpolate(dm.mesh(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
  const ExtendedField e = extend(x1, dm, 0.125);
  SeededRng rng(14);
  for (int k = 0; k < 50; ++k) {
    const double t = rng.uniform(0.0, dm.pad_width());
    const double y = rng.uniform(0.0, 1.0);
    EXPECT_NEAR(e.padded.value_at(0, {1.0 + t, y}), 1.0 - t, 1e-13);
    EXPECT_NEAR(e.padded.value_at(0, {-t, y}), t, 1e-13);
    const Point inside = {rng.uniform(), rng.uniform()};
    EXPECT_NEAR(e.padded.value_at(0, inside), x1.value_at(0, inside), 1e-13);
  }
  // Continuous across the edge.
  EXPECT_NEAR(e.padded.value_at(0, {1.0 - 1e-9, 0.5}), e.padded.value_at(0, {1.0 + 1e-9, 0.5}), 1e-8);
}

TEST(TwoScale, ExtensionAgreesWithBaseAtSharedNodes) {
  const DomainMesh dm(8, 2);
  SeededRng rng(15);
  const testing::RandomSmooth fn(rng);
  const GridFunction u = interpolate(dm.mesh(), Space::kQ2, 1, fn);
  const ExtendedField e = extend(u, dm, 0.25);
  const int shift = 2 * dm.pad();
  for (int b = 0; b <= 2 * dm.m(); ++b)
    for (int a = 0; a <= 2 * dm.m(); ++a)
      EXPECT_EQ(e.padded.at(0, dm.padded()->q2_node(a + shift, b + shift)), u.at(0, dm.mesh()->q2_node(a, b)));
}

TEST(TwoScale, ExtensionOfConstantScalesWithArea) {
  const DomainMesh dm(10, 2);
  const GridFunction c = interpolate(dm.mesh(), Space::kQ2, 1, [](const Point&) { return 3.0; });
  const ExtendedField e = extend(c, dm, 0.2);
  for (double v : e.padded.values()) EXPECT_EQ(v, 3.0);
  EXPECT_NEAR(e.c_ext, 1.0 + 2.0 * dm.pad_width(), 1e-12);
}

TEST(TwoScale, ExtensionOfSmoothFieldMatchesAnalyticReflection) {
  // cos πx₁ cos πx₂ is even about every edge, so its reflection is itself.
  const DomainMesh dm(32, 4);
  auto fn = [](const Point& x) { return std::cos(kPi * x[0]) * std::cos(kPi * x[1]); };
  const ExtendedField e = extend(interpolate(dm.mesh(), Space::kQ2, 1, fn), dm, 0.125);
  const GridFunction direct = interpolate(dm.padded(), Space::kQ2, 1, fn);
  EXPECT_NEAR(h1_norm(e.padded), h1_norm(direct), 1e-10);
  const double w = dm.pad_width(), len = 1.0 + 2.0 * w;
  const double cc = len / 2.0 + std::sin(2.0 * kPi * w) / (2.0 * kPi);  // ∫cos² over the padded interval
  const double ss = len / 2.0 - std::sin(2.0 * kPi * w) / (2.0 * kPi);
  const double exact = std::sqrt(cc * cc + 2.0 * kPi * kPi * ss * cc);
  EXPECT_NEAR(h1_norm(e.padded) / exact, 1.0, 1e-4);
  EXPECT_LE(e.c_ext, kMaxExtensionConstant);
}

TEST(TwoScale, ExtensionConstantStaysBoundedForSeededFields) {
  SeededRng rng(16);
  const DomainMesh dm(16, 3);
  for (int k = 0; k < 20; ++k) {
    const testing::RandomSmooth fn(rng);
    const ExtendedField e = extend(interpolate(dm.mesh(), Space::kQ2, 1, fn), dm, 0.125);
    EXPECT_LE(e.c_ext, kMaxExtensionConstant);
    EXPECT_GE(e.c_ext, 1.0);
  }
}

TEST(TwoScale, ExtensionRejectsBadInput) {
  const DomainMesh dm(16, 1);
  const GridFunction u = interpolate(dm.mesh(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
  EXPECT_THROW((void)extend(u, dm, 0.25), ResolutionError);
  const DomainMesh other(16, 1);
  const GridFunction w = interpolate(other.mesh(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
  EXPECT_THROW((void)extend(w, dm, 0.0625), InvalidInput);
}

TEST(TwoScale, PeriodicSamplingComposesScales) {
  const CellGrid g(8);
  const GridFunction c = interpolate(g.mesh(), Space::kQ2, 1, [](const Point&) { return 0.3; });
  const DomainMesh dm(32, 0);
  EXPECT_LE(max_deviation(sample_periodic(c, 0.25, dm.mesh()), 0, [](const Point&) { return 0.3; }), 1e-15);
  const GridFunction s = interpolate(g.mesh(), Space::kQ2, 1, [](const Point& y) { return std::sin(2 * kPi * y[0]); });
  // Domain nodes k/64 map to cell nodes k/16 mod 1: exact there.
  const GridFunction sn = sample_periodic_nodal(s, 0.25, dm.mesh());
  const int side = dm.mesh()->q2_side();
  for (int b = 0; b < side; b += 5)
    for (int a = 0; a < side; ++a) {
      const Point x = dm.mesh()->q2_coord(a, b);
      EXPECT_NEAR(sn.at(0, dm.mesh()->q2_node(a, b)), std::sin(8 * kPi * x[0]), 1e-14);
    }
  // Between nodes the cell interpolant differs by its own error only.
  EXPECT_LE(max_deviation(sample_periodic(s, 0.25, dm.mesh()), 0,
                          [](const Point& x) { return std::sin(8 * kPi * x[0]); }),
            2e-2);
  EXPECT_THROW((void)sample_periodic(interpolate(dm.mesh(), Space::kQ2, 1, [](const Point&) { return 1.0; }), 0.25,
                                     dm.mesh()),
               InvalidInput);
}

TEST(TwoScale, OperatorsAreLinear) {
  const double eps = 0.125;
  const DomainMesh dm = padded_mesh(16, eps);
  const CellGrid g(8);
  SeededRng rng(17);
  const testing::RandomSmooth f1(rng), f2(rng);
  const testing::RandomPeriodic p1(rng), p2(rng);
  const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
  auto combo = [&](const GridFunction& x, const GridFunction& y) {
    std::vector<double> v(x.values().size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = a * x.values()[k] + b * y.values()[k];
    return GridFunction(x.mesh(), x.space(), x.components(), v);
  };
  auto combo_q = [&](const QuadratureField& x, const QuadratureField& y) {
    QuadratureField out(x.mesh(), x.components(), false);
    for (int qp = 0; qp < x.num_points(); ++qp)
      for (int c = 0; c < x.components(); ++c) out.value(qp, c) = a * x.value(qp, c) + b * y.value(qp, c);
    return out;
  };
  const GridFunction u1 = interpolate(dm.padded(), Space::kQ2, 1, f1);
  const GridFunction u2 = interpolate(dm.padded(), Space::kQ2, 1, f2);
  EXPECT_LE(l2_distance(steklov(combo(u1, u2), eps, dm.mesh(), false),
                        combo_q(steklov(u1, eps, dm.mesh(), false), steklov(u2, eps, dm.mesh(), false))),
            1e-13);
  const GridFunction c1 = interpolate(g.mesh(), Space::kQ2, 1, p1);
  const GridFunction c2 = interpolate(g.mesh(), Space::kQ2, 1, p2);
  EXPECT_LE(l2_distance(sample_periodic(combo(c1, c2), eps, dm.mesh()),
                        combo_q(sample_periodic(c1, eps, dm.mesh()), sample_periodic(c2, eps, dm.mesh()))),
            1e-13);
  const GridFunction b1 = interpolate(dm.mesh(), Space::kQ2, 1, f1);
  const GridFunction b2 = interpolate(dm.mesh(), Space::kQ2, 1, f2);
  EXPECT_LE(l2_distance(extend(combo(b1, b2), dm, eps).padded,
                        combo(extend(b1, dm, eps).padded, extend(b2, dm, eps).padded)),
            1e-13);
}

TEST(TwoScale, ResidualsVanishForConstantCoefficients) {
  const auto a = builtin_family("classical", std::vector<double>{1.0});
  const CellGrid g(8);
  const Corrector c = solve_cell(a, g);
  const EffectiveTensor ahat = effective_tensor(a, c, g);
  const double eps = 0.25;
  const DomainMesh dm = padded_mesh(32, eps);
  const ProblemData data = study_data("homogenized_mms", ahat);
  const FlowField ue = solve_oscillating(a, eps, data, dm);
  const FlowField u0 = solve_homogenized(ahat, data, dm);
  const ResidualFields r = assemble_residuals(ue, u0, c, eps, dm);
  EXPECT_LE(h1_norm(r.v), 1e-10);
  EXPECT_LE(l2_norm(r.p_res), 1e-10);
  EXPECT_LE(l2_norm(r.div_v), 1e-10);
}

TEST(TwoScale, DivergenceIdentityHoldsForTrig) {
  const auto a = builtin_family("trig", std::vector<double>{0.5, 0.4});
  const CellGrid g(16);
  const Corrector c = solve_cell(a, g);
  const EffectiveTensor ahat = effective_tensor(a, c, g);
  const ProblemData data = study_data("homogenized_mms", ahat);
  for (double eps : {0.25, 0.125}) {
    const DomainMesh dm = padded_mesh(static_cast<int>(8 / eps), eps);
    const FlowField ue = solve_oscillating(a, eps, data, dm);
    const FlowField u0 = solve_homogenized(ahat, data, dm);
    const ResidualFields r = assemble_residuals(ue, u0, c, eps, dm);
    EXPECT_LE(l2_norm(r.div_identity) / h1_seminorm(r.v), 1e-6) << eps;
    EXPECT_GT(l2_norm(r.div_v), 1e-6);  // the identity is not trivially zero
    EXPECT_LE(r.c_ext, kMaxExtensionConstant);
  }
}

TEST(TwoScale, ResidualsAreLinearInTheFlows) {
  const auto a = builtin_family("trig", std::vector<double>{0.5, 0.4});
  const CellGrid g(8);
  const Corrector c = solve_cell(a, g);
  const EffectiveTensor ahat = effective_tensor(a, c, g);
  const double eps = 0.25;
  const DomainMesh dm = padded_mesh(32, eps);
  const ProblemData data = study_data("homogenized_mms", ahat);
  const FlowField ue = solve_oscillating(a, eps, data, dm);
  const FlowField u0 = solve_homogenized(ahat, data, dm);
  auto scaled = [](FlowField f, double s) {
    for (double& v : f.u.values()) v *= s;
    for (double& v : f.p.values()) v *= s;
    return f;
  };
  const ResidualFields r1 = assemble_residuals(ue, u0, c, eps, dm);
  const ResidualFields r2 = assemble_residuals(scaled(ue, -1.5), scaled(u0, -1.5), c, eps, dm);
  for (int qp = 0; qp < r1.v.num_points(); qp += 11)
    for (int comp = 0; comp < kDim; ++comp) EXPECT_NEAR(r2.v.value(qp, comp), -1.5 * r1.v.value(qp, comp), 1e-12);
}

}  // namespace
}  // namespace stokeshom
