#pragma once

#include <Eigen/Sparse>

#include <memory>
#include <string>
#include <vector>

namespace stokeshom {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vector = Eigen::VectorXd;

struct FactorStats {
  double lu_nonzeros = 0.0;
  double off_diagonal_pivots = 0.0;
  double symbolic_seconds = 0.0;
  double numeric_seconds = 0.0;
};

/// Sparse LU factorization (UMFPACK) reused across right-hand sides.
/// Every solve checks the relative residual ‖Ax − b‖ / ‖b‖ against `tol`.
class DirectSolver {
 public:
  DirectSolver();
  ~DirectSolver();
  DirectSolver(DirectSolver&&) noexcept;
  DirectSolver& operator=(DirectSolver&&) noexcept;

  /// `ordering` is an optional fill-reducing permutation (new position -> old
  /// index) applied symmetrically; empty lets UMFPACK choose.
  /// Throws SolverError when the factorization fails or the matrix is singular.
  void factorize(SparseMatrix a, const std::string& label, const std::vector<int>& ordering = {});

  /// Returns x; `residual` receives the relative algebraic residual.
  Vector solve(const Vector& b, double tol, double* residual = nullptr) const;

  int rows() const;
  bool ready() const;
  /// Nonzeros in L + U of the last factorization.
  double factor_nonzeros() const;
  FactorStats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// ‖Ax − b‖ / ‖b‖; for b = 0 the residual norm is scaled by ‖A‖‖x‖ instead.
double relative_residual(const SparseMatrix& a, const Vector& x, const Vector& b);

}  // namespace stokeshom
