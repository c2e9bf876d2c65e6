#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stokeshom/tensor.hpp"

namespace stokeshom {

enum class Smoothness { kConstant, kSmooth, kPiecewiseConstant };

const char* to_string(Smoothness s);

/// A 1-periodic coefficient tensor A(y) = (a_{ij}^{αβ}(y)) with ellipticity
/// constant μ. Immutable after construction.
///
/// Arguments are reduced modulo 1 before evaluation, so periodicity holds by
/// construction. The half-open convention y ∈ [0,1)^d decides the value at
/// jumps of piecewise-constant families.
class CoefficientField {
 public:
  using EvalFn = std::function<Tensor4(const Point&)>;
  using GradFn = std::function<Tensor4Gradient(const Point&)>;

  CoefficientField(std::string name, EvalFn eval, double mu, Smoothness tag,
                   std::optional<GradFn> gradient = std::nullopt);

  Tensor4 operator()(const Point& y) const { return eval_(reduce(y)); }

  /// ∂a/∂y at y; only smooth families carry it.
  Tensor4Gradient gradient(const Point& y) const;
  bool has_gradient() const { return gradient_.has_value(); }

  double mu() const { return mu_; }
  Smoothness smoothness() const { return tag_; }
  const std::string& name() const { return name_; }
  int dim() const { return kDim; }

  static Point reduce(const Point& y);

 private:
  std::string name_;
  EvalFn eval_;
  double mu_;
  Smoothness tag_;
  std::optional<GradFn> gradient_;
};

/// Builtin families:
///   constant     params = 16 tensor entries (index order of Tensor4), optional 17th = μ
///   classical    params = {μ}: a = μ δ_ij δ_αβ
///   laminate     params = layer values λ_1..λ_L (equal widths along y₁): a = λ(y₁) δ_ij δ_αβ
///   trig         params = {μ, amplitude[, skew]}: smooth, non-symmetric for skew ≠ 0
///   checkerboard params = {v1, v2}: 2×2 checkerboard λ(y) δ_ij δ_αβ
/// Throws InvalidInput for unknown families or invalid parameters.
CoefficientField builtin_family(const std::string& name, std::span<const double> params);

/// Default skew amplitude of the trig family when params has two entries.
inline constexpr double kTrigDefaultSkew = 0.2;

struct EllipticityReport {
  double min_quotient = 0.0;
  double max_quotient = 0.0;
  bool passed = false;
};

/// Seeded sampling of a_{ij}^{αβ}(y) ξ_i^α ξ_j^β over |ξ| = 1.
EllipticityReport check_ellipticity(const CoefficientField& a, std::int64_t samples, std::uint64_t seed);

/// Same test for a constant tensor against an ellipticity constant.
EllipticityReport check_ellipticity(const Tensor4& a, double mu, std::int64_t samples, std::uint64_t seed);

/// Exact extremal quotients of a constant tensor (eigenvalues of its symmetric part).
std::pair<double, double> quotient_range(const Tensor4& a);

/// (a*)_{ij}^{αβ}(y) = a_{ji}^{βα}(y).
CoefficientField adjoint(const CoefficientField& a);

}  // namespace stokeshom
