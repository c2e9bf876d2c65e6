#include "stokeshom/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "stokeshom/errors.hpp"

namespace stokeshom {

namespace fe {

const std::array<double, kGauss1d>& gauss_nodes() {
  static const std::array<double, kGauss1d> nodes = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
  return nodes;
}

const std::array<double, kGauss1d>& gauss_weights() {
  static const std::array<double, kGauss1d> weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  return weights;
}

Rule1d gauss_legendre(int n) {
  if (n < 1) throw InvalidInput("gauss_legendre: n must be >= 1");
  Rule1d r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1v = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1v - (k - 1.0) * p0) / k;
        p0 = p1v;
        p1v = pk;
      }
      dp = n * (x * p1v - p0) / (x * x - 1.0);
      const double dx = p1v / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-16) break;
    }
    // Map [-1,1] to [0,1]; nodes ascending.
    r.nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + x);
    r.weights[static_cast<std::size_t>(n - 1 - i)] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

std::array<double, 3> q2_1d(double t) {
  return {2.0 * (t - 0.5) * (t - 1.0), -4.0 * t * (t - 1.0), 2.0 * t * (t - 0.5)};
}
std::array<double, 3> q2_1d_deriv(double t) { return {4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0}; }
std::array<double, 3> q2_1d_deriv2(double) { return {4.0, -8.0, 4.0}; }
std::array<double, kP1PerElement> p1(const Point& local) {
  return {1.0, 2.0 * local[0] - 1.0, 2.0 * local[1] - 1.0};
}

const ReferenceTables& tables() {
  static const ReferenceTables t = [] {
    ReferenceTables r{};
    const auto& xg = gauss_nodes();
    const auto& wg = gauss_weights();
    for (int qy = 0; qy < kGauss1d; ++qy)
      for (int qx = 0; qx < kGauss1d; ++qx) {
        const int q = qx + kGauss1d * qy;
        const double s = xg[qx];
        const double u = xg[qy];
        r.local[q] = {s, u};
        r.weight[q] = wg[qx] * wg[qy];
        const auto bs = q2_1d(s), bu = q2_1d(u), ds = q2_1d_deriv(s), du = q2_1d_deriv(u);
        for (int lb = 0; lb < 3; ++lb)
          for (int la = 0; la < 3; ++la) {
            const int l = la + 3 * lb;
            r.q2[q][l] = bs[la] * bu[lb];
            r.q2_grad[q][l] = {ds[la] * bu[lb], bs[la] * du[lb]};
          }
        r.p1[q] = p1({s, u});
      }
    return r;
  }();
  return t;
}

}  // namespace fe

namespace {

std::atomic<std::uint64_t> g_next_mesh_id{1};

int wrap(int a, int n) {
  const int r = a % n;
  return r < 0 ? r + n : r;
}

}  // namespace

TensorMesh::TensorMesh(int cells, double origin, double h, bool periodic)
    : cells_(cells), origin_(origin), h_(h), periodic_(periodic), id_(g_next_mesh_id++) {
  if (cells < 1) throw InvalidInput("mesh: need at least one cell per axis");
  if (!(h > 0.0)) throw InvalidInput("mesh: spacing must be positive");
}

int TensorMesh::q2_node(int a, int b) const {
  const int side = q2_side();
  if (periodic_) return wrap(a, side) + side * wrap(b, side);
  return a + side * b;
}

std::array<int, fe::kQ2PerElement> TensorMesh::element_q2(int ex, int ey) const {
  std::array<int, fe::kQ2PerElement> n{};
  for (int lb = 0; lb < 3; ++lb)
    for (int la = 0; la < 3; ++la) n[la + 3 * lb] = q2_node(2 * ex + la, 2 * ey + lb);
  return n;
}

TensorMesh::Location TensorMesh::locate(const Point& x) const {
  Location loc{};
  std::array<int, kDim> e{};
  for (int k = 0; k < kDim; ++k) {
    double u = (x[k] - origin_) / h_;
    if (periodic_) {
      u -= cells_ * std::floor(u / cells_);
      if (u >= cells_) u -= cells_;
    }
    int idx = static_cast<int>(std::floor(u));
    idx = std::clamp(idx, 0, cells_ - 1);
    e[k] = idx;
    loc.local[k] = u - idx;
  }
  loc.ex = e[0];
  loc.ey = e[1];
  return loc;
}

Point TensorMesh::quad_point(int ex, int ey, int q) const {
  const Point& l = fe::tables().local[q];
  return {origin_ + h_ * (ex + l[0]), origin_ + h_ * (ey + l[1])};
}

double TensorMesh::quad_weight(int q) const { return fe::tables().weight[q] * h_ * h_; }

CellGrid::CellGrid(int n) {
  if (n < 4 || n % 2 != 0) throw InvalidInput("cell grid: n must be even and >= 4");
  mesh_ = std::make_shared<TensorMesh>(n, 0.0, 1.0 / n, true);
}

DomainMesh::DomainMesh(int m, int pad) : pad_(pad) {
  if (m < 1) throw InvalidInput("domain mesh: m must be >= 1");
  if (pad < 0 || pad > m) throw InvalidInput("domain mesh: pad must lie in [0, m]");
  const double h = 1.0 / m;
  mesh_ = std::make_shared<TensorMesh>(m, 0.0, h, false);
  padded_ = std::make_shared<TensorMesh>(m + 2 * pad, -pad * h, h, false);
  facets_.reserve(static_cast<std::size_t>(4 * m));
  for (int k = 0; k < m; ++k) {
    const double s0 = k * h;
    const double s1 = (k + 1) * h;
    facets_.push_back({{s0, 0.0}, {s1, 0.0}, {0.0, -1.0}});
    facets_.push_back({{1.0, s0}, {1.0, s1}, {1.0, 0.0}});
    facets_.push_back({{s1, 1.0}, {s0, 1.0}, {0.0, 1.0}});
    facets_.push_back({{0.0, s1}, {0.0, s0}, {-1.0, 0.0}});
  }
}

double DomainMesh::boundary_length() const { return 4.0; }

double DomainMesh::distance_to_boundary(const Point& x) {
  bool inside = true;
  for (int k = 0; k < kDim; ++k) inside = inside && x[k] >= 0.0 && x[k] <= 1.0;
  if (inside) {
    double d = INFINITY;
    for (int k = 0; k < kDim; ++k) d = std::min({d, x[k], 1.0 - x[k]});
    return d;
  }
  double s = 0.0;
  for (int k = 0; k < kDim; ++k) {
    const double c = std::clamp(x[k], 0.0, 1.0);
    s += (x[k] - c) * (x[k] - c);
  }
  return std::sqrt(s);
}

const char* to_string(SpaceTag t) {
  switch (t) {
    case SpaceTag::kVelocityQ2: return "velocity-Q2";
    case SpaceTag::kPressureP1: return "pressure-P1disc";
    case SpaceTag::kScalarQ2: return "scalar-Q2";
    case SpaceTag::kCellVelocityQ2: return "cell-velocity-Q2";
    case SpaceTag::kCellPressureP1: return "cell-pressure-P1disc";
    case SpaceTag::kCellScalarQ2: return "cell-scalar-Q2";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

GridFunction::GridFunction(MeshPtr mesh, Space space, int components)
    : mesh_(std::move(mesh)), space_(space), components_(components) {
  if (components_ < 1) throw InvalidInput("grid function: need at least one component");
  values_.assign(static_cast<std::size_t>(components_ * ndof_per_component()), 0.0);
}

GridFunction::GridFunction(MeshPtr mesh, Space space, int components, std::vector<double> values)
    : GridFunction(std::move(mesh), space, components) {
  if (values.size() != values_.size())
    throw InvalidInput("grid function: value vector length does not match the space dimension");
  values_ = std::move(values);
}

int GridFunction::ndof_per_component() const {
  return space_ == Space::kQ2 ? mesh_->q2_count() : mesh_->p1_count();
}

SpaceTag GridFunction::space_tag() const {
  const bool cell = mesh_->periodic();
  if (space_ == Space::kP1disc) return cell ? SpaceTag::kCellPressureP1 : SpaceTag::kPressureP1;
  if (components_ == kDim) return cell ? SpaceTag::kCellVelocityQ2 : SpaceTag::kVelocityQ2;
  return cell ? SpaceTag::kCellScalarQ2 : SpaceTag::kScalarQ2;
}

double GridFunction::value(int comp, int ex, int ey, const Point& local) const {
  const int off = comp * ndof_per_component();
  if (space_ == Space::kP1disc) {
    const int base = off + mesh_->element_p1(ex, ey);
    const auto b = fe::p1(local);
    return values_[base] * b[0] + values_[base + 1] * b[1] + values_[base + 2] * b[2];
  }
  const auto nodes = mesh_->element_q2(ex, ey);
  const auto bx = fe::q2_1d(local[0]), by = fe::q2_1d(local[1]);
  double s = 0.0;
  for (int lb = 0; lb < 3; ++lb)
    for (int la = 0; la < 3; ++la) s += values_[off + nodes[la + 3 * lb]] * bx[la] * by[lb];
  return s;
}

Vec GridFunction::gradient(int comp, int ex, int ey, const Point& local) const {
  const int off = comp * ndof_per_component();
  const double inv_h = 1.0 / mesh_->h();
  if (space_ == Space::kP1disc) {
    const int base = off + mesh_->element_p1(ex, ey);
    return {2.0 * values_[base + 1] * inv_h, 2.0 * values_[base + 2] * inv_h};
  }
  Vec g{0.0, 0.0};
  const auto nodes = mesh_->element_q2(ex, ey);
  const auto bx = fe::q2_1d(local[0]), by = fe::q2_1d(local[1]);
  const auto dx = fe::q2_1d_deriv(local[0]), dy = fe::q2_1d_deriv(local[1]);
  for (int lb = 0; lb < 3; ++lb)
    for (int la = 0; la < 3; ++la) {
      const double v = values_[off + nodes[la + 3 * lb]];
      g[0] += v * dx[la] * by[lb];
      g[1] += v * bx[la] * dy[lb];
    }
  g[0] *= inv_h;
  g[1] *= inv_h;
  return g;
}

std::array<double, kDim * kDim> GridFunction::hessian(int comp, int ex, int ey, const Point& local) const {
  std::array<double, kDim * kDim> hs{};
  if (space_ == Space::kP1disc) return hs;
  const int off = comp * ndof_per_component();
  const double inv_h2 = 1.0 / (mesh_->h() * mesh_->h());
  const auto nodes = mesh_->element_q2(ex, ey);
  const auto bx = fe::q2_1d(local[0]), by = fe::q2_1d(local[1]);
  const auto dx = fe::q2_1d_deriv(local[0]), dy = fe::q2_1d_deriv(local[1]);
  const auto sx = fe::q2_1d_deriv2(local[0]), sy = fe::q2_1d_deriv2(local[1]);
  for (int lb = 0; lb < 3; ++lb)
    for (int la = 0; la < 3; ++la) {
      const double v = values_[off + nodes[la + 3 * lb]];
      hs[0] += v * sx[la] * by[lb];
      hs[1] += v * dx[la] * dy[lb];
      hs[3] += v * bx[la] * sy[lb];
    }
  hs[2] = hs[1];
  for (double& v : hs) v *= inv_h2;
  return hs;
}

double GridFunction::value_at(int comp, const Point& x) const {
  const auto loc = mesh_->locate(x);
  return value(comp, loc.ex, loc.ey, loc.local);
}

Vec GridFunction::gradient_at(int comp, const Point& x) const {
  const auto loc = mesh_->locate(x);
  return gradient(comp, loc.ex, loc.ey, loc.local);
}

// ---------------------------------------------------------------------------

QuadratureField::QuadratureField(MeshPtr mesh, int components, bool with_gradient)
    : mesh_(std::move(mesh)), components_(components) {
  const auto n = static_cast<std::size_t>(mesh_->num_quad_points() * components_);
  values_.assign(n, 0.0);
  if (with_gradient) grads_.assign(n * kDim, 0.0);
}

QuadratureField sample_at_quadrature(const GridFunction& f) {
  QuadratureField out(f.mesh(), f.components(), true);
  const auto& mesh = *f.mesh();
  const auto& tab = fe::tables();
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const int e = ex + mesh.cells() * ey;
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const int qp = e * fe::kQuadPerElement + q;
        for (int c = 0; c < f.components(); ++c) {
          out.value(qp, c) = f.value(c, ex, ey, tab.local[q]);
          const Vec g = f.gradient(c, ex, ey, tab.local[q]);
          for (int k = 0; k < kDim; ++k) out.grad(qp, c, k) = g[k];
        }
      }
    }
  return out;
}

namespace {

// Calls fn(qp, x, weight, ex, ey, q) for every quadrature point of the mesh.
template <class Fn>
void for_each_quad(const TensorMesh& mesh, Fn&& fn) {
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const int e = ex + mesh.cells() * ey;
      for (int q = 0; q < fe::kQuadPerElement; ++q)
        fn(e * fe::kQuadPerElement + q, mesh.quad_point(ex, ey, q), mesh.quad_weight(q), ex, ey, q);
    }
}

double distance_in_mesh(const TensorMesh& mesh, const Point& x) {
  double d = INFINITY;
  for (int k = 0; k < kDim; ++k) d = std::min({d, x[k] - mesh.origin(), mesh.origin() + mesh.length() - x[k]});
  return d;
}

void check_strip_args(const TensorMesh& mesh, double r) {
  if (mesh.periodic()) throw InvalidInput("strip_norm: requires a bounded mesh");
  const double diam = std::sqrt(static_cast<double>(kDim)) * mesh.length();
  if (!(r > 0.0) || r > diam) throw InvalidInput("strip_norm: r must lie in (0, diam(Omega)]");
}

}  // namespace

double l2_norm(const GridFunction& f) {
  double s = 0.0;
  const auto& tab = fe::tables();
  for_each_quad(*f.mesh(), [&](int, const Point&, double w, int ex, int ey, int q) {
    for (int c = 0; c < f.components(); ++c) {
      const double v = f.value(c, ex, ey, tab.local[q]);
      s += w * v * v;
    }
  });
  return std::sqrt(s);
}

double h1_seminorm(const GridFunction& f) {
  double s = 0.0;
  const auto& tab = fe::tables();
  for_each_quad(*f.mesh(), [&](int, const Point&, double w, int ex, int ey, int q) {
    for (int c = 0; c < f.components(); ++c) {
      const Vec g = f.gradient(c, ex, ey, tab.local[q]);
      for (double gk : g) s += w * gk * gk;
    }
  });
  return std::sqrt(s);
}

double h1_norm(const GridFunction& f) { return std::hypot(l2_norm(f), h1_seminorm(f)); }

double l2_norm(const QuadratureField& f) {
  double s = 0.0;
  for_each_quad(*f.mesh(), [&](int qp, const Point&, double w, int, int, int) {
    for (int c = 0; c < f.components(); ++c) s += w * f.value(qp, c) * f.value(qp, c);
  });
  return std::sqrt(s);
}

double h1_seminorm(const QuadratureField& f) {
  if (!f.has_gradient()) throw InvalidInput("h1_seminorm: quadrature field carries no gradient");
  double s = 0.0;
  for_each_quad(*f.mesh(), [&](int qp, const Point&, double w, int, int, int) {
    for (int c = 0; c < f.components(); ++c)
      for (int k = 0; k < kDim; ++k) s += w * f.grad(qp, c, k) * f.grad(qp, c, k);
  });
  return std::sqrt(s);
}

double h1_norm(const QuadratureField& f) { return std::hypot(l2_norm(f), h1_seminorm(f)); }

double l2_distance(const GridFunction& f, const GridFunction& g) {
  if (f.mesh()->id() != g.mesh()->id()) throw InvalidInput("l2_distance: mismatched mesh references");
  if (f.space() != g.space() || f.components() != g.components())
    throw InvalidInput("l2_distance: mismatched spaces");
  GridFunction d = f;
  for (std::size_t k = 0; k < d.values().size(); ++k) d.values()[k] -= g.values()[k];
  return l2_norm(d);
}

double l2_distance(const QuadratureField& f, const QuadratureField& g) {
  if (f.mesh()->id() != g.mesh()->id()) throw InvalidInput("l2_distance: mismatched mesh references");
  if (f.components() != g.components()) throw InvalidInput("l2_distance: mismatched component counts");
  double s = 0.0;
  for_each_quad(*f.mesh(), [&](int qp, const Point&, double w, int, int, int) {
    for (int c = 0; c < f.components(); ++c) {
      const double d = f.value(qp, c) - g.value(qp, c);
      s += w * d * d;
    }
  });
  return std::sqrt(s);
}

double h2_surrogate_norm(const GridFunction& f) {
  double s = 0.0;
  const auto& tab = fe::tables();
  for_each_quad(*f.mesh(), [&](int, const Point&, double w, int ex, int ey, int q) {
    for (int c = 0; c < f.components(); ++c) {
      const auto hs = f.hessian(c, ex, ey, tab.local[q]);
      for (double v : hs) s += w * v * v;
    }
  });
  const double h1 = h1_norm(f);
  return std::sqrt(h1 * h1 + s);
}

double strip_norm(const GridFunction& f, double r) {
  check_strip_args(*f.mesh(), r);
  double s = 0.0;
  const auto& tab = fe::tables();
  for_each_quad(*f.mesh(), [&](int, const Point& x, double w, int ex, int ey, int q) {
    if (distance_in_mesh(*f.mesh(), x) > r) return;
    for (int c = 0; c < f.components(); ++c) {
      const double v = f.value(c, ex, ey, tab.local[q]);
      s += w * v * v;
    }
  });
  return std::sqrt(s);
}

double strip_norm(const QuadratureField& f, double r) {
  check_strip_args(*f.mesh(), r);
  double s = 0.0;
  for_each_quad(*f.mesh(), [&](int qp, const Point& x, double w, int, int, int) {
    if (distance_in_mesh(*f.mesh(), x) > r) return;
    for (int c = 0; c < f.components(); ++c) s += w * f.value(qp, c) * f.value(qp, c);
  });
  return std::sqrt(s);
}

double strip_gradient_norm(const GridFunction& f, double r) {
  check_strip_args(*f.mesh(), r);
  double s = 0.0;
  const auto& tab = fe::tables();
  for_each_quad(*f.mesh(), [&](int, const Point& x, double w, int ex, int ey, int q) {
    if (distance_in_mesh(*f.mesh(), x) > r) return;
    for (int c = 0; c < f.components(); ++c) {
      const Vec g = f.gradient(c, ex, ey, tab.local[q]);
      for (double gk : g) s += w * gk * gk;
    }
  });
  return std::sqrt(s);
}

double strip_gradient_norm(const QuadratureField& f, double r) {
  check_strip_args(*f.mesh(), r);
  if (!f.has_gradient()) throw InvalidInput("strip_gradient_norm: quadrature field carries no gradient");
  double s = 0.0;
  for_each_quad(*f.mesh(), [&](int qp, const Point& x, double w, int, int, int) {
    if (distance_in_mesh(*f.mesh(), x) > r) return;
    for (int c = 0; c < f.components(); ++c)
      for (int k = 0; k < kDim; ++k) s += w * f.grad(qp, c, k) * f.grad(qp, c, k);
  });
  return std::sqrt(s);
}

std::vector<double> mean(const GridFunction& f) {
  std::vector<double> m(static_cast<std::size_t>(f.components()), 0.0);
  const auto& tab = fe::tables();
  for_each_quad(*f.mesh(), [&](int, const Point&, double w, int ex, int ey, int q) {
    for (int c = 0; c < f.components(); ++c) m[c] += w * f.value(c, ex, ey, tab.local[q]);
  });
  const double area = f.mesh()->length() * f.mesh()->length();
  for (double& v : m) v /= area;
  return m;
}

std::vector<double> mean(const QuadratureField& f) {
  std::vector<double> m(static_cast<std::size_t>(f.components()), 0.0);
  for_each_quad(*f.mesh(), [&](int qp, const Point&, double w, int, int, int) {
    for (int c = 0; c < f.components(); ++c) m[c] += w * f.value(qp, c);
  });
  const double area = f.mesh()->length() * f.mesh()->length();
  for (double& v : m) v /= area;
  return m;
}

GridFunction subtract_mean(const GridFunction& f) {
  GridFunction out = f;
  const auto m = mean(f);
  const int n = f.ndof_per_component();
  for (int c = 0; c < f.components(); ++c)
    for (int k = 0; k < n; ++k) out.at(c, k) -= m[c];
  return out;
}

QuadratureField subtract_mean(const QuadratureField& f) {
  QuadratureField out = f;
  const auto m = mean(f);
  for (int qp = 0; qp < f.num_points(); ++qp)
    for (int c = 0; c < f.components(); ++c) out.value(qp, c) -= m[c];
  return out;
}

}  // namespace stokeshom
