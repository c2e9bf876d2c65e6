#include "stokeshom/assembly.hpp"

#include <algorithm>
#include <vector>

#include "stokeshom/errors.hpp"

namespace stokeshom {

namespace {

using Triplet = Eigen::Triplet<double, int>;

constexpr int kNq = fe::kQuadPerElement;
constexpr int kN2 = fe::kQ2PerElement;
constexpr int kNp = fe::kP1PerElement;

// Unknown located at half-lattice coordinates (a, b): Q2 node (a, b); P1 unknowns
// sit at their element centre, so they never land on a separator.
struct DofAt {
  int dof;
  int a;
  int b;
  bool mean_mode = false;  // constant pressure mode of an element
};

constexpr std::size_t kLeafSize = 64;

void emit_sorted(std::vector<DofAt>::iterator first, std::vector<DofAt>::iterator last, std::vector<int>& out) {
  const auto begin = out.size();
  for (auto it = first; it != last; ++it) out.push_back(it->dof);
  // Velocities precede pressures in the layout, so they are eliminated first.
  std::sort(out.begin() + static_cast<std::ptrdiff_t>(begin), out.end());
}

// Nested dissection on element-edge separators. With the separator velocities
// still present, every subdomain carries a singular constant-pressure mode, so
// one constant-mode pressure per subdomain is deferred to its parent and eliminated
// right after the separator. Returns the deferred dof, or -1.
int dissect(std::vector<DofAt>::iterator first, std::vector<DofAt>::iterator last, int a0, int a1, int b0, int b1,
            std::vector<int>& out) {
  const auto count = static_cast<std::size_t>(last - first);
  const bool split_a = (a1 - a0) >= (b1 - b0);
  const int lo = split_a ? a0 : b0;
  const int hi = split_a ? a1 : b1;
  // Separator on an element edge: an even half-lattice coordinate strictly inside.
  int s = (lo + hi) / 2;
  if (s % 2 != 0) ++s;
  if (count <= kLeafSize || s <= lo || s >= hi) {
    auto keep = std::partition(first, last, [](const DofAt& d) { return !d.mean_mode; });
    int deferred = -1;
    if (keep != last) {
      deferred = (last - 1)->dof;
      --last;
    }
    emit_sorted(first, last, out);
    return deferred;
  }
  auto coord = [split_a](const DofAt& d) { return split_a ? d.a : d.b; };
  auto mid = std::partition(first, last, [&](const DofAt& d) { return coord(d) < s; });
  auto sep = std::partition(mid, last, [&](const DofAt& d) { return coord(d) > s; });
  int d1 = -1;
  int d2 = -1;
  if (split_a) {
    d1 = dissect(first, mid, a0, s - 1, b0, b1, out);
    d2 = dissect(mid, sep, s + 1, a1, b0, b1, out);
  } else {
    d1 = dissect(first, mid, a0, a1, b0, s - 1, out);
    d2 = dissect(mid, sep, a0, a1, s + 1, b1, out);
  }
  emit_sorted(sep, last, out);
  if (d1 >= 0 && d2 >= 0) {
    out.push_back(d1);
    return d2;
  }
  return d1 >= 0 ? d1 : d2;
}

std::vector<int> order_dofs(const TensorMesh& mesh, std::vector<DofAt> dofs, int trailing_begin, int trailing_end) {
  std::vector<int> out;
  out.reserve(dofs.size() + static_cast<std::size_t>(trailing_end - trailing_begin));
  const int side = 2 * mesh.cells();
  int deferred = -1;
  if (mesh.periodic()) {
    // Cutting the torus along a = 0 and b = 0 leaves a box.
    auto rest = std::partition(dofs.begin(), dofs.end(), [](const DofAt& d) { return d.a != 0 && d.b != 0; });
    deferred = dissect(dofs.begin(), rest, 1, side - 1, 1, side - 1, out);
    emit_sorted(rest, dofs.end(), out);
  } else {
    deferred = dissect(dofs.begin(), dofs.end(), 0, side, 0, side, out);
  }
  if (deferred >= 0) out.push_back(deferred);
  for (int k = trailing_begin; k < trailing_end; ++k) out.push_back(k);
  return out;
}

}  // namespace

StokesLayout stokes_layout(const TensorMesh& mesh) {
  StokesLayout l;
  l.q2_count = mesh.q2_count();
  l.p_count = mesh.p1_count();
  l.pressure_multiplier = mesh.periodic();
  return l;
}

SparseMatrix assemble_stokes(const TensorMesh& mesh, const CoefficientAt& a) {
  const StokesLayout lay = stokes_layout(mesh);
  const auto& tab = fe::tables();
  const double h = mesh.h();
  const int nel = mesh.num_elements();

  std::vector<Triplet> trip;
  const std::size_t per_el = kDim * kN2 * kDim * kN2 + 2 * kNp * kDim * kN2 + 2 * kDim * kN2 + 2;
  trip.reserve(per_el * static_cast<std::size_t>(nel));

  std::array<Tensor4, kNq> aq;
  double ke[kDim][kN2][kDim][kN2];
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      for (int q = 0; q < kNq; ++q) aq[q] = a(ex, ey, q);
      const auto n2 = mesh.element_q2(ex, ey);
      const int p0 = mesh.element_p1(ex, ey);

      // Physical gradients scale by 1/h and weights by h², so K is h-independent in 2D.
      for (int al = 0; al < kDim; ++al)
        for (int ia = 0; ia < kN2; ++ia)
          for (int be = 0; be < kDim; ++be)
            for (int ib = 0; ib < kN2; ++ib) {
              double s = 0.0;
              for (int q = 0; q < kNq; ++q) {
                const auto& ga = tab.q2_grad[q][ia];
                const auto& gb = tab.q2_grad[q][ib];
                double t = 0.0;
                for (int i = 0; i < kDim; ++i)
                  for (int j = 0; j < kDim; ++j) t += aq[q](i, j, al, be) * gb[j] * ga[i];
                s += tab.weight[q] * t;
              }
              ke[al][ia][be][ib] = s;
            }
      for (int al = 0; al < kDim; ++al)
        for (int ia = 0; ia < kN2; ++ia)
          for (int be = 0; be < kDim; ++be)
            for (int ib = 0; ib < kN2; ++ib)
              trip.emplace_back(lay.u(al, n2[ia]), lay.u(be, n2[ib]), ke[al][ia][be][ib]);

      for (int c = 0; c < kNp; ++c)
        for (int be = 0; be < kDim; ++be)
          for (int ib = 0; ib < kN2; ++ib) {
            double s = 0.0;
            for (int q = 0; q < kNq; ++q) s += tab.weight[q] * tab.p1[q][c] * tab.q2_grad[q][ib][be];
            s *= h;
            trip.emplace_back(lay.p(p0 + c), lay.u(be, n2[ib]), -s);
            trip.emplace_back(lay.u(be, n2[ib]), lay.p(p0 + c), -s);
          }

      for (int ia = 0; ia < kN2; ++ia) {
        double s = 0.0;
        for (int q = 0; q < kNq; ++q) s += tab.weight[q] * tab.q2[q][ia];
        s *= h * h;
        for (int al = 0; al < kDim; ++al) {
          trip.emplace_back(lay.u(al, n2[ia]), lay.lambda(al), s);
          trip.emplace_back(lay.lambda(al), lay.u(al, n2[ia]), s);
        }
      }
      // Only the constant P1 mode has a nonzero mean.
      if (lay.pressure_multiplier) {
        trip.emplace_back(lay.p(p0), lay.lambda_p(), h * h);
        trip.emplace_back(lay.lambda_p(), lay.p(p0), h * h);
      }
    }

  SparseMatrix kkt(lay.size(), lay.size());
  kkt.setFromTriplets(trip.begin(), trip.end());
  kkt.makeCompressed();
  return kkt;
}

SparseMatrix assemble_periodic_poisson(const TensorMesh& mesh) {
  if (!mesh.periodic()) throw InvalidInput("assemble_periodic_poisson: mesh must be periodic");
  const auto& tab = fe::tables();
  const int n = mesh.q2_count();
  const double h = mesh.h();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_elements()) * (kN2 * kN2 + 2 * kN2));

  double ke[kN2][kN2];
  double me[kN2];
  for (int a = 0; a < kN2; ++a) {
    me[a] = 0.0;
    for (int q = 0; q < kNq; ++q) me[a] += tab.weight[q] * tab.q2[q][a] * h * h;
    for (int b = 0; b < kN2; ++b) {
      double s = 0.0;
      for (int q = 0; q < kNq; ++q)
        for (int k = 0; k < kDim; ++k) s += tab.weight[q] * tab.q2_grad[q][a][k] * tab.q2_grad[q][b][k];
      ke[a][b] = s;
    }
  }
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const auto nodes = mesh.element_q2(ex, ey);
      for (int a = 0; a < kN2; ++a) {
        for (int b = 0; b < kN2; ++b) trip.emplace_back(nodes[a], nodes[b], ke[a][b]);
        trip.emplace_back(nodes[a], n, me[a]);
        trip.emplace_back(n, nodes[a], me[a]);
      }
    }
  SparseMatrix k(n + 1, n + 1);
  k.setFromTriplets(trip.begin(), trip.end());
  k.makeCompressed();
  return k;
}

std::vector<int> stokes_ordering(const TensorMesh& mesh) {
  const StokesLayout lay = stokes_layout(mesh);
  std::vector<DofAt> dofs;
  dofs.reserve(static_cast<std::size_t>(lay.velocity_size() + lay.p_count));
  const int s2 = mesh.q2_side();
  for (int b = 0; b < s2; ++b)
    for (int a = 0; a < s2; ++a)
      for (int c = 0; c < kDim; ++c) dofs.push_back({lay.u(c, mesh.q2_node(a, b)), a, b});
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int l = 0; l < kNp; ++l)
        dofs.push_back({lay.p(mesh.element_p1(ex, ey) + l), 2 * ex + 1, 2 * ey + 1, l == 0});
  return order_dofs(mesh, std::move(dofs), lay.lambda(0), lay.size());
}

std::vector<int> poisson_ordering(const TensorMesh& mesh) {
  std::vector<DofAt> dofs;
  dofs.reserve(static_cast<std::size_t>(mesh.q2_count()));
  const int s2 = mesh.q2_side();
  for (int b = 0; b < s2; ++b)
    for (int a = 0; a < s2; ++a) dofs.push_back({mesh.q2_node(a, b), a, b, false});
  return order_dofs(mesh, std::move(dofs), mesh.q2_count(), mesh.q2_count() + 1);
}

GridFunction discrete_divergence(const GridFunction& u) {
  if (u.space() != Space::kQ2 || u.components() != kDim)
    throw InvalidInput("discrete_divergence: expects a Q2 velocity field");
  const auto& mesh = *u.mesh();
  const auto& tab = fe::tables();
  GridFunction out(u.mesh(), Space::kP1disc, 1);
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const int base = mesh.element_p1(ex, ey);
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        double div = 0.0;
        for (int al = 0; al < kDim; ++al) div += u.gradient(al, ex, ey, tab.local[q])[al];
        for (int l = 0; l < fe::kP1PerElement; ++l)
          out.at(0, base + l) += tab.weight[q] * div * tab.p1[q][l] / fe::kP1NormSquared[l];
      }
    }
  return out;
}

GridFunction velocity_from(const MeshPtr& mesh, const Vector& x) {
  const int n = mesh->q2_count();
  std::vector<double> v(x.data(), x.data() + kDim * n);
  return GridFunction(mesh, Space::kQ2, kDim, std::move(v));
}

GridFunction pressure_from(const MeshPtr& mesh, const Vector& x) {
  const int off = kDim * mesh->q2_count();
  std::vector<double> v(x.data() + off, x.data() + off + mesh->p1_count());
  return GridFunction(mesh, Space::kP1disc, 1, std::move(v));
}

}  // namespace stokeshom
