#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace stokeshom {

/// Spatial dimension. Index loops are written against this constant.
inline constexpr int kDim = 2;

using Point = std::array<double, kDim>;
using Vec = std::array<double, kDim>;
/// ξ_i^α stored at [i * kDim + α].
using Mat = std::array<double, kDim * kDim>;

constexpr int mat_index(int i, int alpha) { return i * kDim + alpha; }

/// Fourth-order tensor a_{ij}^{αβ}.
class Tensor4 {
 public:
  static constexpr std::size_t kSize = kDim * kDim * kDim * kDim;

  Tensor4() { data_.fill(0.0); }

  static constexpr std::size_t index(int i, int j, int alpha, int beta) {
    return static_cast<std::size_t>(((i * kDim + j) * kDim + alpha) * kDim + beta);
  }

  double& operator()(int i, int j, int alpha, int beta) { return data_[index(i, j, alpha, beta)]; }
  double operator()(int i, int j, int alpha, int beta) const { return data_[index(i, j, alpha, beta)]; }

  std::array<double, kSize>& data() { return data_; }
  const std::array<double, kSize>& data() const { return data_; }

  /// a_{ij}^{αβ} ξ_i^α η_j^β
  double contract(const Mat& xi, const Mat& eta) const {
    double s = 0.0;
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j)
        for (int a = 0; a < kDim; ++a)
          for (int b = 0; b < kDim; ++b)
            s += (*this)(i, j, a, b) * xi[mat_index(i, a)] * eta[mat_index(j, b)];
    return s;
  }

  /// (A*)_{ij}^{αβ} = a_{ji}^{βα}
  Tensor4 swapped() const {
    Tensor4 out;
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j)
        for (int a = 0; a < kDim; ++a)
          for (int b = 0; b < kDim; ++b) out(i, j, a, b) = (*this)(j, i, b, a);
    return out;
  }

  double max_abs_diff(const Tensor4& other) const {
    double m = 0.0;
    for (std::size_t k = 0; k < kSize; ++k) m = std::fmax(m, std::fabs(data_[k] - other.data_[k]));
    return m;
  }

  bool operator==(const Tensor4& other) const { return data_ == other.data_; }

  static Tensor4 isotropic(double lambda) {
    Tensor4 t;
    for (int i = 0; i < kDim; ++i)
      for (int a = 0; a < kDim; ++a) t(i, i, a, a) = lambda;
    return t;
  }

 private:
  std::array<double, kSize> data_;
};

/// ∂a/∂y_k for k = 0..kDim-1.
using Tensor4Gradient = std::array<Tensor4, kDim>;

}  // namespace stokeshom
