#include "stokeshom/neumann.hpp"

#include <cmath>

#include "stokeshom/assembly.hpp"
#include "stokeshom/errors.hpp"
#include "stokeshom/linalg.hpp"

namespace stokeshom {

namespace {

constexpr int kNq = fe::kQuadPerElement;
constexpr int kN2 = fe::kQ2PerElement;
constexpr int kCompatPoints = 10;
constexpr double kCompatTol = 1e-10;

std::array<double, kN2> q2_basis(const Point& local) {
  const auto bs = fe::q2_1d(local[0]);
  const auto bt = fe::q2_1d(local[1]);
  std::array<double, kN2> out{};
  for (int lb = 0; lb < 3; ++lb)
    for (int la = 0; la < 3; ++la) out[la + 3 * lb] = bs[la] * bt[lb];
  return out;
}

Vector assemble_load(const TensorMesh& mesh, const DomainMesh& dm, const ProblemData& data) {
  const StokesLayout lay = stokes_layout(mesh);
  const auto& tab = fe::tables();
  const double h = mesh.h();
  Vector rhs = Vector::Zero(lay.size());
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const auto n2 = mesh.element_q2(ex, ey);
      const int p0 = mesh.element_p1(ex, ey);
      for (int q = 0; q < kNq; ++q) {
        const Point x = mesh.quad_point(ex, ey, q);
        const double w = tab.weight[q] * h * h;
        if (data.force) {
          const Vec f = data.force(x);
          for (int a = 0; a < kN2; ++a)
            for (int al = 0; al < kDim; ++al) rhs[lay.u(al, n2[a])] += w * f[al] * tab.q2[q][a];
        }
        if (data.divergence) {
          const double g = data.divergence(x);
          for (int l = 0; l < fe::kP1PerElement; ++l) rhs[lay.p(p0 + l)] -= w * g * tab.p1[q][l];
        }
      }
    }
  if (data.traction) {
    const auto& xg = fe::gauss_nodes();
    const auto& wg = fe::gauss_weights();
    for (const BoundaryFacet& facet : dm.boundary_facets()) {
      const double len = std::hypot(facet.b[0] - facet.a[0], facet.b[1] - facet.a[1]);
      for (int g = 0; g < fe::kGauss1d; ++g) {
        const Point x = {facet.a[0] + xg[g] * (facet.b[0] - facet.a[0]), facet.a[1] + xg[g] * (facet.b[1] - facet.a[1])};
        const auto loc = mesh.locate(x);
        const auto n2 = mesh.element_q2(loc.ex, loc.ey);
        const auto phi = q2_basis(loc.local);
        const Vec t = data.traction(x, facet.normal);
        for (int a = 0; a < kN2; ++a)
          for (int al = 0; al < kDim; ++al) rhs[lay.u(al, n2[a])] += wg[g] * len * t[al] * phi[a];
      }
    }
  }
  return rhs;
}

FlowField solve_with(const CoefficientAt& coeff, const ProblemData& data, const DomainMesh& dm, double tol,
                     bool check_data) {
  if (check_data) {
    const CompatibilityReport rep = check_compatibility(data, dm);
    if (!rep.passed)
      throw CompatibilityError("Neumann data violate the compatibility condition: |∫F + ∫f| = " +
                               std::to_string(rep.defect) + " (scale " + std::to_string(rep.scale) + ")");
  }
  const MeshPtr& mesh = dm.mesh();
  const StokesLayout lay = stokes_layout(*mesh);
  DirectSolver solver;
  solver.factorize(assemble_stokes(*mesh, coeff), "neumann problem", stokes_ordering(*mesh));
  double res = 0.0;
  const Vector x = solver.solve(assemble_load(*mesh, dm, data), tol, &res);
  FlowField out{velocity_from(mesh, x), pressure_from(mesh, x), {}, {}, res, std::nullopt};
  const auto um = mean(out.u);
  for (int c = 0; c < kDim; ++c) {
    out.gauge.velocity_mean[c] = um[static_cast<std::size_t>(c)];
    out.multiplier[c] = x[lay.lambda(c)];
  }
  out.gauge.pressure_mean = mean(out.p)[0];
  return out;
}

void require_resolved(double eps, const DomainMesh& mesh) {
  if (!(eps > 0.0) || eps > 1.0) throw InvalidInput("eps must lie in (0, 1]");
  if (mesh.h() > eps / 8.0 * (1.0 + 1e-12))
    throw ResolutionError("mesh does not resolve eps: need 1/m <= eps/8 (m = " + std::to_string(mesh.m()) +
                          ", eps = " + std::to_string(eps) + ")");
}

CoefficientAt sampled(const TensorMesh& mesh, const SpatialCoefficient& a) {
  return [&mesh, a](int ex, int ey, int q) { return a(mesh.quad_point(ex, ey, q)); };
}

}  // namespace

CompatibilityReport check_compatibility(const ProblemData& data, const DomainMesh& dm) {
  const fe::Rule1d rule = fe::gauss_legendre(kCompatPoints);
  const auto& mesh = *dm.mesh();
  const double h = mesh.h();
  CompatibilityReport r;
  double f2 = 0.0;
  double t2 = 0.0;
  if (data.force)
    for (int ey = 0; ey < mesh.cells(); ++ey)
      for (int ex = 0; ex < mesh.cells(); ++ex)
        for (int qy = 0; qy < kCompatPoints; ++qy)
          for (int qx = 0; qx < kCompatPoints; ++qx) {
            const Point x = {mesh.origin() + h * (ex + rule.nodes[qx]), mesh.origin() + h * (ey + rule.nodes[qy])};
            const double w = rule.weights[qx] * rule.weights[qy] * h * h;
            const Vec f = data.force(x);
            for (int c = 0; c < kDim; ++c) {
              r.total[c] += w * f[c];
              f2 += w * f[c] * f[c];
            }
          }
  if (data.traction)
    for (const BoundaryFacet& facet : dm.boundary_facets()) {
      const double len = std::hypot(facet.b[0] - facet.a[0], facet.b[1] - facet.a[1]);
      for (int g = 0; g < kCompatPoints; ++g) {
        const double s = rule.nodes[g];
        const Point x = {facet.a[0] + s * (facet.b[0] - facet.a[0]), facet.a[1] + s * (facet.b[1] - facet.a[1])};
        const Vec t = data.traction(x, facet.normal);
        for (int c = 0; c < kDim; ++c) {
          r.total[c] += rule.weights[g] * len * t[c];
          t2 += rule.weights[g] * len * t[c] * t[c];
        }
      }
    }
  r.defect = std::hypot(r.total[0], r.total[1]);
  r.scale = std::sqrt(f2) + std::sqrt(t2);
  r.passed = r.defect <= kCompatTol * r.scale;
  return r;
}

FlowField solve_neumann(const SpatialCoefficient& a, const ProblemData& data, const DomainMesh& mesh, double tol) {
  return solve_with(sampled(*mesh.mesh(), a), data, mesh, tol, true);
}

FlowField solve_oscillating(const CoefficientField& a, double eps, const ProblemData& data, const DomainMesh& mesh,
                            double tol) {
  require_resolved(eps, mesh);
  return solve_neumann([&a, eps](const Point& x) { return a({x[0] / eps, x[1] / eps}); }, data, mesh, tol);
}

FlowField solve_homogenized(const EffectiveTensor& ahat, const ProblemData& data, const DomainMesh& mesh, double tol) {
  const Tensor4 a0 = ahat.a_hat;
  FlowField out = solve_neumann([a0](const Point&) { return a0; }, data, mesh, tol);
  out.u_h2 = h2_surrogate_norm(out.u);
  return out;
}

FlowField solve_adjoint(const CoefficientField& a, double eps, const std::function<Vec(const Point&)>& forcing,
                        const DomainMesh& dm, double tol) {
  require_resolved(eps, dm);
  const auto& mesh = *dm.mesh();
  const auto& tab = fe::tables();
  Vec hmean{};
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const Vec v = forcing(mesh.quad_point(ex, ey, q));
        for (int c = 0; c < kDim; ++c) hmean[c] += tab.weight[q] * mesh.h() * mesh.h() * v[c];
      }
  const double area = mesh.length() * mesh.length();
  for (double& v : hmean) v /= area;
  ProblemData data;
  data.force = [forcing, hmean](const Point& x) {
    Vec v = forcing(x);
    for (int c = 0; c < kDim; ++c) v[c] -= hmean[c];
    return v;
  };
  const CoefficientField astar = adjoint(a);
  // Compatibility holds by construction in the assembly quadrature.
  return solve_with(sampled(mesh, [&astar, eps](const Point& x) { return astar({x[0] / eps, x[1] / eps}); }), data,
                    dm, tol, false);
}

double bilinear_form(const CoefficientField& a, double eps, const GridFunction& u, const GridFunction& w) {
  if (u.mesh()->id() != w.mesh()->id()) throw InvalidInput("bilinear_form: fields live on different meshes");
  if (u.components() != kDim || w.components() != kDim) throw InvalidInput("bilinear_form: expects velocity fields");
  const auto& mesh = *u.mesh();
  const auto& tab = fe::tables();
  double s = 0.0;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const Point x = mesh.quad_point(ex, ey, q);
        const Tensor4 aq = a({x[0] / eps, x[1] / eps});
        std::array<Vec, kDim> gu;
        std::array<Vec, kDim> gw;
        for (int c = 0; c < kDim; ++c) {
          gu[c] = u.gradient(c, ex, ey, tab.local[q]);
          gw[c] = w.gradient(c, ex, ey, tab.local[q]);
        }
        double v = 0.0;
        for (int i = 0; i < kDim; ++i)
          for (int j = 0; j < kDim; ++j)
            for (int al = 0; al < kDim; ++al)
              for (int be = 0; be < kDim; ++be) v += aq(i, j, al, be) * gu[be][j] * gw[al][i];
        s += tab.weight[q] * mesh.h() * mesh.h() * v;
      }
  return s;
}

ProblemData manufactured_problem(const CoefficientField& a, double eps, const AnalyticVector& u,
                                 const AnalyticScalar& p) {
  if (!a.has_gradient())
    throw InvalidInput("manufactured_problem: coefficient family '" + a.name() + "' has no analytic gradient");
  if (!(eps > 0.0)) throw InvalidInput("manufactured_problem: eps must be positive");
  if (!u.value || !u.gradient || !u.hessian || !p.value || !p.gradient)
    throw InvalidInput("manufactured_problem: analytic fields need value, gradient and hessian");
  ProblemData d;
  d.force = [a, eps, u, p](const Point& x) {
    const Point y = {x[0] / eps, x[1] / eps};
    const Tensor4 ay = a(y);
    const Tensor4Gradient dy = a.gradient(y);
    const Mat du = u.gradient(x);
    const auto d2u = u.hessian(x);
    const Vec dp = p.gradient(x);
    Vec f{};
    for (int al = 0; al < kDim; ++al) {
      double s = 0.0;
      for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j)
          for (int be = 0; be < kDim; ++be)
            s += dy[i](i, j, al, be) / eps * du[mat_index(j, be)] + ay(i, j, al, be) * d2u[(i * kDim + j) * kDim + be];
      f[al] = -s + dp[al];
    }
    return f;
  };
  d.divergence = [u](const Point& x) {
    const Mat du = u.gradient(x);
    double s = 0.0;
    for (int b = 0; b < kDim; ++b) s += du[mat_index(b, b)];
    return s;
  };
  d.traction = [a, eps, u, p](const Point& x, const Vec& n) {
    const Tensor4 ay = a({x[0] / eps, x[1] / eps});
    const Mat du = u.gradient(x);
    const double pv = p.value(x);
    Vec t{};
    for (int al = 0; al < kDim; ++al) {
      double s = 0.0;
      for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j)
          for (int be = 0; be < kDim; ++be) s += n[i] * ay(i, j, al, be) * du[mat_index(j, be)];
      t[al] = s - pv * n[al];
    }
    return t;
  };
  return d;
}

CoefficientField constant_coefficient(const Tensor4& a) {
  return builtin_family("constant", std::span<const double>(a.data().data(), Tensor4::kSize));
}

}  // namespace stokeshom
