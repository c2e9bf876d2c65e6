#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "stokeshom/cell.hpp"
#include "stokeshom/coeff.hpp"
#include "stokeshom/grid.hpp"
#include "stokeshom/tensor.hpp"

namespace stokeshom {

/// Coefficient tensor as a function of the physical point x.
using SpatialCoefficient = std::function<Tensor4(const Point&)>;

/// Data of the Neumann problem −div(A∇u) + ∇p = F, div u = g in Ω,
/// n·A∇u − p n = f on ∂Ω. Empty functions mean zero.
struct ProblemData {
  std::function<Vec(const Point&)> force;
  std::function<double(const Point&)> divergence;
  /// Traction at a boundary point with outward unit normal n.
  std::function<Vec(const Point&, const Vec& normal)> traction;
};

struct CompatibilityReport {
  Vec total{};           // ∫_Ω F + ∫_∂Ω f, per component
  double defect = 0.0;   // |total|
  double scale = 0.0;    // ‖F‖_{L²(Ω)} + ‖f‖_{L²(∂Ω)}
  bool passed = false;   // defect ≤ 1e-10 · scale
};

/// Evaluates the compatibility condition with a 10-point Gauss rule per element
/// and per boundary facet, independent of the assembly quadrature.
CompatibilityReport check_compatibility(const ProblemData& data, const DomainMesh& mesh);

struct Gauge {
  Vec velocity_mean{};    // mean(u) of the returned field (multiplier-enforced zero)
  double pressure_mean = 0.0;  // recorded, not removed
};

struct FlowField {
  GridFunction u;  // Q2 velocity
  GridFunction p;  // P1disc pressure
  Gauge gauge;
  Vec multiplier{};       // velocity-mean multipliers; zero for compatible data
  double residual = 0.0;  // relative algebraic residual of the KKT solve
  std::optional<double> u_h2;  // H² surrogate of u (homogenized solves)
};

/// Discrete weak form a(u, φ) − ∫p div φ = ∫F·φ + ∫_∂Ω f·φ, ∫ψ div u = ∫gψ.
/// Throws CompatibilityError for incompatible data, SolverError on solver failure.
FlowField solve_neumann(const SpatialCoefficient& a, const ProblemData& data, const DomainMesh& mesh,
                        double tol = kDefaultTol);

/// Coefficient A(x/ε) sampled at quadrature points. Requires 1/m ≤ ε/8 and ε ∈ (0, 1].
FlowField solve_oscillating(const CoefficientField& a, double eps, const ProblemData& data, const DomainMesh& mesh,
                            double tol = kDefaultTol);

/// Constant coefficient Â; also records the H² surrogate of u.
FlowField solve_homogenized(const EffectiveTensor& ahat, const ProblemData& data, const DomainMesh& mesh,
                            double tol = kDefaultTol);

/// Adjoint problem with coefficient A*(x/ε), force H − ⨍H, g = 0 and f = 0.
/// The mean of H uses the assembly quadrature, so the discrete data are exactly compatible.
FlowField solve_adjoint(const CoefficientField& a, double eps, const std::function<Vec(const Point&)>& forcing,
                        const DomainMesh& mesh, double tol = kDefaultTol);

/// a(u, w) = ∫ a_{ij}^{αβ}(x/ε) ∂_j u^β ∂_i w^α with the assembly quadrature.
double bilinear_form(const CoefficientField& a, double eps, const GridFunction& u, const GridFunction& w);

/// Smooth analytic fields for manufactured solutions.
struct AnalyticVector {
  std::function<Vec(const Point&)> value;
  std::function<Mat(const Point&)> gradient;  // [mat_index(j, β)] = ∂_j u^β
  std::function<std::array<double, kDim * kDim * kDim>(const Point&)> hessian;  // [(j*d + k)*d + β] = ∂_j∂_k u^β
};
struct AnalyticScalar {
  std::function<double(const Point&)> value;
  std::function<Vec(const Point&)> gradient;
};

/// Data for which (u*, p*) solves the problem with coefficient A(x/ε):
/// F = −div(A^ε∇u*) + ∇p*, g = div u*, f = n·A^ε∇u* − p* n.
/// Throws InvalidInput if the family has no analytic gradient.
ProblemData manufactured_problem(const CoefficientField& a, double eps, const AnalyticVector& u,
                                 const AnalyticScalar& p);

/// Constant-tensor coefficient field, mainly for Â.
CoefficientField constant_coefficient(const Tensor4& a);

}  // namespace stokeshom
