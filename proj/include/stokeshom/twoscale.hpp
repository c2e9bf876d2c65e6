#pragma once

#include "stokeshom/cell.hpp"
#include "stokeshom/grid.hpp"
#include "stokeshom/neumann.hpp"

namespace stokeshom {

/// A Q2 field on Ω extended to the padded mesh by even reflection.
struct ExtendedField {
  GridFunction base;
  GridFunction padded;
  double pad_width = 0.0;
  /// H² surrogate of the padded field over that of the base field.
  double c_ext = 0.0;
};

inline constexpr double kMaxExtensionConstant = 16.0;

/// Even reflection across each edge (corners reflect twice). Throws
/// ResolutionError if the padding is narrower than eps_max, InvalidInput if
/// u0 does not live on mesh.mesh().
ExtendedField extend(const GridFunction& u0, const DomainMesh& mesh, double eps_max);

/// Midpoint subdivisions per axis of the ε-cube: the smallest k with ε/k < h.
int steklov_subdivisions(double eps, double h);

/// (S_ε f)(x) = ⨍_Y f(x − εz) dz for every component of f (a Q2 or P1disc
/// field on a mesh covering target + εY), at the quadrature points of target.
/// Gradients, when requested, come from the face-difference form
/// ∂_k S_ε f(x) = ε⁻¹ ⨍ [f(x − εz)|_{z_k=0} − f(x − εz)|_{z_k=1}], which is exact
/// for fields with jumps.
QuadratureField steklov(const GridFunction& f, double eps, const MeshPtr& target, bool with_gradient);

/// Same operator at the Q2 nodes of target, returned as a Q2 field.
GridFunction steklov_nodal(const GridFunction& f, double eps, const MeshPtr& target);

/// S_ε(∂_j f^β) with component mat_index(j, β), plus its face-difference gradient.
QuadratureField steklov_gradient(const GridFunction& f, double eps, const MeshPtr& target);

/// f^ε(x) = f(frac(x/ε)) at the quadrature points of target. Gradients are
/// taken in the cell variable y (multiply by 1/ε for ∂_x).
QuadratureField sample_periodic(const GridFunction& f, double eps, const MeshPtr& target);

/// Q2 nodal samples of f^ε on target.
GridFunction sample_periodic_nodal(const GridFunction& f, double eps, const MeshPtr& target);

/// Residual fields of the two-scale expansion at the quadrature points of Ω.
struct ResidualFields {
  QuadratureField v;         // u_ε − u_0 − ε χ^ε S_ε(∇ũ_0), values and gradients
  GridFunction v_nodal;      // same with the corrector term replaced by its Q2 interpolant
  QuadratureField p_res;     // centred pressure residual
  QuadratureField div_v;     // discrete divergence of v
  QuadratureField div_identity;  // div_v + ε χ_j^{αβ,ε} ∂_α S_ε(∂_j ũ_0^β)
  double c_ext = 0.0;
};

/// Both flows must live on mesh.mesh() with mean-zero velocities; pressures
/// are centred here. The corrector divergence enters through its pressure-space
/// projection and the flows' divergences through theirs, so div_identity
/// measures only the algebraic and solver error.
ResidualFields assemble_residuals(const FlowField& ue, const FlowField& u0, const Corrector& c, double eps,
                                  const DomainMesh& mesh);

/// (∫_{Ω_{2ε}} |f^ε|² |S_ε u|²)^{1/2}, summed over components of f and u.
double boundary_layer_norm(const GridFunction& f_cell, const GridFunction& u_padded, double eps,
                           const MeshPtr& target);

}  // namespace stokeshom
