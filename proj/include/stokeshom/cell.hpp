#pragma once

#include <string>
#include <vector>

#include "stokeshom/coeff.hpp"
#include "stokeshom/grid.hpp"
#include "stokeshom/tensor.hpp"

namespace stokeshom {

inline constexpr double kDefaultTol = 1e-10;

/// Flat index of the (j, β) corrector.
constexpr int jb_index(int j, int beta) { return j * kDim + beta; }
/// Flat index of q_{ij}^β.
constexpr int q_index(int i, int j, int beta) { return (i * kDim + j) * kDim + beta; }
/// Flat index of b_{ij}^{αβ} and f_{ij}^{αβ} (same order as Tensor4).
constexpr int b_index(int i, int j, int alpha, int beta) { return ((i * kDim + j) * kDim + alpha) * kDim + beta; }
/// Flat index of Φ_{kij}^{αβ}.
constexpr int phi_index(int k, int i, int j, int alpha, int beta) { return k * kDim * kDim * kDim * kDim + b_index(i, j, alpha, beta); }

inline constexpr int kNumCorrectors = kDim * kDim;
inline constexpr int kNumQ = kDim * kDim * kDim;
inline constexpr int kNumB = kDim * kDim * kDim * kDim;
inline constexpr int kNumPhi = kDim * kNumB;

/// Periodic cell solutions (χ_j^β, π_j^β), indexed by jb_index.
struct Corrector {
  MeshPtr mesh;
  std::vector<GridFunction> chi;          // Q2, kDim components
  std::vector<GridFunction> pi;           // P1disc
  std::vector<QuadratureField> chi_q;     // values and gradients at cell quadrature points
  std::vector<QuadratureField> pi_q;      // values at cell quadrature points
  /// P1disc L² projection of div χ_j^β (the discrete divergence of the mixed method).
  std::vector<GridFunction> div_chi;
  double residual = 0.0;                  // max relative residual over the d² solves
};

struct EffectiveTensor {
  Tensor4 a_hat;
};

/// b_{ij}^{αβ} at cell quadrature points, component b_index.
struct BField {
  QuadratureField b;
};

struct DualCorrector {
  std::vector<GridFunction> q;     // q_index, Q2 scalar
  std::vector<GridFunction> phi;   // phi_index, Q2 scalar
  std::vector<GridFunction> r;     // ΔR_j^β = π_j^β, jb_index
  std::vector<GridFunction> f;     // Δf_{ij}^{αβ} = b − ∂_α q, b_index
  double residual = 0.0;
};

/// Selects a deliberately wrong b-field for mutation testing.
enum class BFieldMutation { kNone, kFlipCorrectorTerm };

/// Solves the d² periodic Stokes cell problems with one shared factorization.
Corrector solve_cell(const CoefficientField& a, const CellGrid& g, double tol = kDefaultTol, int workers = 1);

EffectiveTensor effective_tensor(const CoefficientField& a, const Corrector& c, const CellGrid& g);

BField b_field(const CoefficientField& a, const Corrector& c, const EffectiveTensor& ahat, const CellGrid& g,
               BFieldMutation mutation = BFieldMutation::kNone);

/// Throws CompatibilityError if some mean(b_{ij}^{αβ}) exceeds compat_tol.
DualCorrector dual_correctors(const BField& bf, const Corrector& c, const CellGrid& g, double tol = kDefaultTol,
                              double compat_tol = 1e-8, int workers = 1);

/// L² residuals of the decomposition identities at cell quadrature points.
double decomposition_residual(const BField& bf, const DualCorrector& dc);  // b − ∂_kΦ_{kij} − ∂_α q_{ij}
double pressure_relation_residual(const Corrector& c, const DualCorrector& dc);  // π_j − ∂_i q_{ij}
/// max |Φ_{kij} + Φ_{ikj}| over nodal values.
double antisymmetry_defect(const DualCorrector& dc);

struct CellDiagnostics {
  double div_chi_l2 = 0.0;             // ‖Π div χ‖ onto the pressure space (max over j, β)
  double div_chi_pointwise_l2 = 0.0;   // ‖div χ‖ at quadrature points
  double max_mean_chi = 0.0;
  double max_mean_pi = 0.0;
  double max_mean_b = 0.0;
  double decomposition_residual = 0.0;
  double pressure_relation_residual = 0.0;
  double antisymmetry_defect = 0.0;
  double ahat_ellipticity_floor = 0.0;
  double adjoint_symmetry_defect = 0.0;
  double phi_l2 = 0.0;
  double q_l2 = 0.0;
};

/// Solves the adjoint cell problem internally for item (f).
CellDiagnostics verify_cell_identities(const CoefficientField& a, const Corrector& c, const EffectiveTensor& ahat,
                                       const BField& bf, const DualCorrector& dc, const CellGrid& g,
                                       double tol = kDefaultTol, std::uint64_t seed = 7);

/// Node table dumps: `<prefix>.csv` (x, y, field values) and `<prefix>.json`.
void write_corrector_dump(const std::string& prefix, const Corrector& c);

}  // namespace stokeshom
