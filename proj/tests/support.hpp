#pragma once

// Independent oracles and seeded test fields shared by the test binaries.

#include <cmath>
#include <numbers>
#include <vector>

#include "stokeshom/random.hpp"
#include "stokeshom/tensor.hpp"

namespace stokeshom::testing {

inline constexpr double kPi = std::numbers::pi;

/// Layer coefficient λ(y₁) of an equal-width laminate.
inline double layer_value(const std::vector<double>& layers, double y1) {
  const int n = static_cast<int>(layers.size());
  const int k = std::min(n - 1, static_cast<int>(std::floor(y1 * n)));
  return layers[static_cast<std::size_t>(k)];
}

/// Reduced 1D cell problem of an isotropic laminate λ(y₁)δ_ij δ_αβ, solved
/// by dense midpoint quadrature. Only χ_1^2 (component 2) is nonzero: the
/// flux λ(1 + χ') is the constant c = (⨍ 1/λ)⁻¹, χ' = c/λ − 1, ⨍χ = 0.
struct LaminateOracle {
  std::vector<double> layers;
  double arithmetic = 0.0;
  double harmonic = 0.0;
  std::vector<double> chi;  // χ at the nodes t_k = k / samples
  int samples = 0;

  explicit LaminateOracle(std::vector<double> l, int n = 1 << 16) : layers(std::move(l)), samples(n) {
    double inv = 0.0, sum = 0.0;
    for (int k = 0; k < n; ++k) {
      const double lam = layer_value(layers, (k + 0.5) / n);
      inv += 1.0 / lam / n;
      sum += lam / n;
    }
    harmonic = 1.0 / inv;
    arithmetic = sum;
    chi.assign(static_cast<std::size_t>(n) + 1, 0.0);
    for (int k = 0; k < n; ++k)
      chi[k + 1] = chi[k] + (harmonic / layer_value(layers, (k + 0.5) / n) - 1.0) / n;
    double m = 0.0;
    for (int k = 0; k < n; ++k) m += 0.5 * (chi[k] + chi[k + 1]) / n;
    for (double& v : chi) v -= m;
  }

  /// Piecewise-linear interpolation of the tabulated χ_1^2.
  double chi12(double y1) const {
    y1 -= std::floor(y1);
    const double s = y1 * samples;
    const int k = std::min(samples - 1, static_cast<int>(s));
    const double t = s - k;
    return (1.0 - t) * chi[k] + t * chi[k + 1];
  }

  /// â_{ij}^{αβ} = ⨍ λ(δ_ij δ_αβ + δ_i1 ∂₁χ_j^{αβ}).
  Tensor4 a_hat() const {
    Tensor4 t = Tensor4::isotropic(arithmetic);
    t(0, 0, 1, 1) = harmonic;
    return t;
  }
};

/// Smooth random field on ℝ²: Σ a_k sin(π(p_k x₁ + q_k x₂) + ϕ_k) with
/// small integer wave numbers, used as a test function.
struct RandomSmooth {
  struct Mode {
    double amp, p, q, phase;
  };
  std::vector<Mode> modes;

  RandomSmooth(SeededRng& rng, int n_modes = 4) {
    for (int k = 0; k < n_modes; ++k)
      modes.push_back({rng.uniform(-1.0, 1.0), std::floor(rng.uniform(0.0, 3.0)), std::floor(rng.uniform(0.0, 3.0)),
                       rng.uniform(0.0, 2.0 * kPi)});
  }
  double operator()(const Point& x) const {
    double s = 0.0;
    for (const Mode& m : modes) s += m.amp * std::sin(kPi * (m.p * x[0] + m.q * x[1]) + m.phase);
    return s;
  }
};

/// Random 1-periodic cell function Σ a_k cos(2π(p y₁ + q y₂) + ϕ).
struct RandomPeriodic {
  RandomSmooth base;
  explicit RandomPeriodic(SeededRng& rng) : base(rng, 3) {}
  double operator()(const Point& y) const { return base({2.0 * y[0], 2.0 * y[1]}); }
};

}  // namespace stokeshom::testing
