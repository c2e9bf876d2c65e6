#pragma once

#include <functional>
#include <vector>

#include "stokeshom/grid.hpp"
#include "stokeshom/linalg.hpp"
#include "stokeshom/tensor.hpp"

namespace stokeshom {

/// Coefficient at quadrature point q of element (ex, ey).
using CoefficientAt = std::function<Tensor4(int ex, int ey, int q)>;

/// Unknown ordering of the Q2–P1disc saddle-point system:
/// [u^0 | u^1 | p | velocity-mean multipliers | pressure-mean multiplier (periodic only)].
struct StokesLayout {
  int q2_count = 0;
  int p_count = 0;
  bool pressure_multiplier = false;

  int u(int comp, int node) const { return comp * q2_count + node; }
  int p(int node) const { return kDim * q2_count + node; }
  int lambda(int comp) const { return kDim * q2_count + p_count + comp; }
  int lambda_p() const { return kDim * q2_count + p_count + kDim; }
  int size() const { return kDim * q2_count + p_count + kDim + (pressure_multiplier ? 1 : 0); }
  int velocity_size() const { return kDim * q2_count; }
};

StokesLayout stokes_layout(const TensorMesh& mesh);

/// KKT matrix
///   [ K  -Bᵀ  C  0  ]
///   [-B   0   0  cp ]
///   [ Cᵀ  0   0  0  ]
///   [ 0  cpᵀ  0  0  ]
/// with K_{(a,α),(b,β)} = ∫ a_{ij}^{αβ} ∂_jφ_b ∂_iφ_a, B_{c,(b,β)} = ∫ψ_c ∂_βφ_b,
/// C = ∫φ_a (velocity means), cp = ∫ψ_c (periodic meshes only). φ are Q2
/// nodal functions, ψ the discontinuous P1 basis.
SparseMatrix assemble_stokes(const TensorMesh& mesh, const CoefficientAt& a);

/// Scalar Q2 Laplacian on a periodic mesh with one mean multiplier appended.
SparseMatrix assemble_periodic_poisson(const TensorMesh& mesh);

/// Geometric nested-dissection orderings for the direct solver: element-edge
/// lines of the structured mesh are separators; multipliers come last.
std::vector<int> stokes_ordering(const TensorMesh& mesh);
std::vector<int> poisson_ordering(const TensorMesh& mesh);

/// Element-wise L² projection of div u onto the pressure space: the divergence
/// the mixed method constrains.
GridFunction discrete_divergence(const GridFunction& u);

/// Extracts the velocity or pressure part of a KKT solution.
GridFunction velocity_from(const MeshPtr& mesh, const Vector& x);
GridFunction pressure_from(const MeshPtr& mesh, const Vector& x);

}  // namespace stokeshom
