#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "stokeshom/tensor.hpp"

namespace stokeshom {

// ---------------------------------------------------------------------------
// Reference element: tensor-product Lagrange bases on [0,1] and 3-point Gauss.

namespace fe {

inline constexpr int kGauss1d = 3;
inline constexpr int kQuadPerElement = kGauss1d * kGauss1d;
inline constexpr int kQ2PerElement = 9;
inline constexpr int kP1PerElement = 3;

/// Gauss-Legendre nodes and weights on [0,1].
const std::array<double, kGauss1d>& gauss_nodes();
const std::array<double, kGauss1d>& gauss_weights();

/// n-point Gauss-Legendre rule on [0,1] (Newton iteration on P_n).
struct Rule1d {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Rule1d gauss_legendre(int n);

/// Quadratic Lagrange basis on nodes {0, 1/2, 1}.
std::array<double, 3> q2_1d(double t);
std::array<double, 3> q2_1d_deriv(double t);
std::array<double, 3> q2_1d_deriv2(double t);
/// Discontinuous linear basis {1, 2s − 1, 2t − 1} on the reference square;
/// orthogonal under the Gauss rule, with squared norms {1, 1/3, 1/3}.
std::array<double, kP1PerElement> p1(const Point& local);
inline constexpr std::array<double, kP1PerElement> kP1NormSquared = {1.0, 1.0 / 3.0, 1.0 / 3.0};

/// Tabulated values at the 3×3 Gauss points; local node la + 3 lb, quadrature qx + 3 qy.
struct ReferenceTables {
  std::array<std::array<double, kQ2PerElement>, kQuadPerElement> q2;
  std::array<std::array<std::array<double, kDim>, kQ2PerElement>, kQuadPerElement> q2_grad;  // reference coords
  std::array<std::array<double, kP1PerElement>, kQuadPerElement> p1;
  std::array<double, kQuadPerElement> weight;  // reference weights, sum 1
  std::array<Point, kQuadPerElement> local;     // reference coordinates
};
const ReferenceTables& tables();

}  // namespace fe

// ---------------------------------------------------------------------------

/// Uniform square tensor-product mesh [origin, origin + cells·h]^d of
/// quadrilaterals, optionally periodic (torus). Q2 nodes live on the half-step
/// lattice; discontinuous P1 unknowns are numbered 3·element + l.
class TensorMesh {
 public:
  TensorMesh(int cells, double origin, double h, bool periodic);

  int cells() const { return cells_; }
  double origin() const { return origin_; }
  double h() const { return h_; }
  double length() const { return cells_ * h_; }
  bool periodic() const { return periodic_; }
  std::uint64_t id() const { return id_; }

  int num_elements() const { return cells_ * cells_; }
  int num_quad_points() const { return num_elements() * fe::kQuadPerElement; }

  int q2_side() const { return periodic_ ? 2 * cells_ : 2 * cells_ + 1; }
  int q2_count() const { return q2_side() * q2_side(); }
  int p1_count() const { return fe::kP1PerElement * num_elements(); }
  int element_index(int ex, int ey) const { return ex + cells_ * ey; }

  /// Lattice index -> node index, wrapping for periodic meshes.
  int q2_node(int a, int b) const;

  std::array<int, fe::kQ2PerElement> element_q2(int ex, int ey) const;
  int element_p1(int ex, int ey) const { return fe::kP1PerElement * element_index(ex, ey); }

  Point q2_coord(int a, int b) const { return {origin_ + 0.5 * h_ * a, origin_ + 0.5 * h_ * b}; }

  /// Element containing x plus reference coordinates. Periodic meshes wrap;
  /// bounded meshes clamp to the boundary elements.
  struct Location {
    int ex;
    int ey;
    Point local;
  };
  Location locate(const Point& x) const;

  /// Physical coordinates of quadrature point q of element (ex, ey).
  Point quad_point(int ex, int ey, int q) const;
  double quad_weight(int q) const;

 private:
  int cells_;
  double origin_;
  double h_;
  bool periodic_;
  std::uint64_t id_;
};

using MeshPtr = std::shared_ptr<const TensorMesh>;

/// Periodic unit cell Y = [0,1)^d with n subdivisions per axis (n ≥ 4, even).
class CellGrid {
 public:
  explicit CellGrid(int n);
  int n() const { return mesh_->cells(); }
  const MeshPtr& mesh() const { return mesh_; }

 private:
  MeshPtr mesh_;
};

struct BoundaryFacet {
  Point a;
  Point b;
  Vec normal;  // outward unit normal
};

/// Ω = (0,1)^d with m subdivisions per axis, plus a reflection-padded mesh of
/// `pad` extra cells on every side used by the extension operator.
class DomainMesh {
 public:
  DomainMesh(int m, int pad);
  int m() const { return mesh_->cells(); }
  int pad() const { return pad_; }
  double h() const { return mesh_->h(); }
  double pad_width() const { return pad_ * mesh_->h(); }
  const MeshPtr& mesh() const { return mesh_; }
  const MeshPtr& padded() const { return padded_; }
  const std::vector<BoundaryFacet>& boundary_facets() const { return facets_; }
  double boundary_length() const;

  /// Distance from x ∈ Ω̄ (or outside) to ∂Ω.
  static double distance_to_boundary(const Point& x);

 private:
  int pad_;
  MeshPtr mesh_;
  MeshPtr padded_;
  std::vector<BoundaryFacet> facets_;
};

// ---------------------------------------------------------------------------

/// Continuous biquadratic or discontinuous linear elements.
enum class Space { kQ2, kP1disc };

enum class SpaceTag { kVelocityQ2, kPressureP1, kScalarQ2, kCellVelocityQ2, kCellPressureP1, kCellScalarQ2 };

const char* to_string(SpaceTag t);

/// Finite element function with k components; values[c * ndof + dof].
class GridFunction {
 public:
  GridFunction(MeshPtr mesh, Space space, int components);
  GridFunction(MeshPtr mesh, Space space, int components, std::vector<double> values);

  const MeshPtr& mesh() const { return mesh_; }
  Space space() const { return space_; }
  int components() const { return components_; }
  int ndof_per_component() const;
  SpaceTag space_tag() const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& at(int comp, int node) { return values_[static_cast<std::size_t>(comp * ndof_per_component() + node)]; }
  double at(int comp, int node) const {
    return values_[static_cast<std::size_t>(comp * ndof_per_component() + node)];
  }

  /// Value and gradient of component c at reference point of element (ex, ey).
  double value(int comp, int ex, int ey, const Point& local) const;
  Vec gradient(int comp, int ex, int ey, const Point& local) const;
  /// Broken (element-wise) Hessian, index k * kDim + l.
  std::array<double, kDim * kDim> hessian(int comp, int ex, int ey, const Point& local) const;

  double value_at(int comp, const Point& x) const;
  Vec gradient_at(int comp, const Point& x) const;

 private:
  MeshPtr mesh_;
  Space space_;
  int components_;
  std::vector<double> values_;
};

/// Q2: nodal interpolation. P1disc: element-wise L² projection (Gauss rule).
/// fn returns a double (one component) or an indexable vector.
template <class Fn>
GridFunction interpolate(const MeshPtr& mesh, Space space, int components, Fn&& fn);

/// Values (and optionally gradients) at the quadrature points of a mesh.
/// values[qp * components + c]; grads[(qp * components + c) * kDim + k].
class QuadratureField {
 public:
  QuadratureField(MeshPtr mesh, int components, bool with_gradient);

  const MeshPtr& mesh() const { return mesh_; }
  int components() const { return components_; }
  bool has_gradient() const { return !grads_.empty(); }
  int num_points() const { return mesh_->num_quad_points(); }

  double& value(int qp, int c) { return values_[static_cast<std::size_t>(qp * components_ + c)]; }
  double value(int qp, int c) const { return values_[static_cast<std::size_t>(qp * components_ + c)]; }
  double& grad(int qp, int c, int k) {
    return grads_[static_cast<std::size_t>((qp * components_ + c) * kDim + k)];
  }
  double grad(int qp, int c, int k) const {
    return grads_[static_cast<std::size_t>((qp * components_ + c) * kDim + k)];
  }

 private:
  MeshPtr mesh_;
  int components_;
  std::vector<double> values_;
  std::vector<double> grads_;
};

/// Evaluates a GridFunction (values + gradients) at every quadrature point.
QuadratureField sample_at_quadrature(const GridFunction& f);

// Norms over the mesh of the argument.
double l2_norm(const GridFunction& f);
double h1_seminorm(const GridFunction& f);
double h1_norm(const GridFunction& f);
double l2_norm(const QuadratureField& f);
double h1_seminorm(const QuadratureField& f);
double h1_norm(const QuadratureField& f);
/// ‖f - g‖; throws InvalidInput on mismatched mesh references or spaces.
double l2_distance(const GridFunction& f, const GridFunction& g);
double l2_distance(const QuadratureField& f, const QuadratureField& g);

/// Discrete H² surrogate: sqrt(‖f‖² + |f|²_{H¹} + Σ ‖∂_i∂_j f‖²) with broken
/// element-wise second derivatives.
double h2_surrogate_norm(const GridFunction& f);

/// L² norm over Ω_r = {x ∈ Ω : dist(x, ∂Ω) ≤ r}, classified per quadrature point.
/// Requires a bounded mesh and 0 < r ≤ diam(Ω).
double strip_norm(const GridFunction& f, double r);
double strip_norm(const QuadratureField& f, double r);
/// Same classification for the Frobenius norm of the gradient.
double strip_gradient_norm(const GridFunction& f, double r);
double strip_gradient_norm(const QuadratureField& f, double r);

/// ∫f / |domain| per component.
std::vector<double> mean(const GridFunction& f);
std::vector<double> mean(const QuadratureField& f);
GridFunction subtract_mean(const GridFunction& f);
QuadratureField subtract_mean(const QuadratureField& f);

// ---------------------------------------------------------------------------

template <class Fn>
GridFunction interpolate(const MeshPtr& mesh, Space space, int components, Fn&& fn) {
  GridFunction g(mesh, space, components);
  auto eval = [&](const Point& x, int c) {
    if constexpr (std::is_invocable_r_v<double, Fn, const Point&>) {
      (void)c;
      return static_cast<double>(fn(x));
    } else {
      return static_cast<double>(fn(x)[static_cast<std::size_t>(c)]);
    }
  };
  if (space == Space::kQ2) {
    const int side = mesh->q2_side();
    for (int b = 0; b < side; ++b)
      for (int a = 0; a < side; ++a) {
        const Point x = mesh->q2_coord(a, b);
        const int node = mesh->q2_node(a, b);
        for (int c = 0; c < components; ++c) g.at(c, node) = eval(x, c);
      }
    return g;
  }
  const auto& tab = fe::tables();
  for (int ey = 0; ey < mesh->cells(); ++ey)
    for (int ex = 0; ex < mesh->cells(); ++ex) {
      const int base = mesh->element_p1(ex, ey);
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const Point x = mesh->quad_point(ex, ey, q);
        for (int c = 0; c < components; ++c) {
          const double v = eval(x, c);
          for (int l = 0; l < fe::kP1PerElement; ++l)
            g.at(c, base + l) += tab.weight[q] * v * tab.p1[q][l] / fe::kP1NormSquared[l];
        }
      }
    }
  return g;
}

}  // namespace stokeshom
