#include "stokeshom/twoscale.hpp"

#include <cmath>
#include <string>

#include "stokeshom/assembly.hpp"
#include "stokeshom/errors.hpp"

namespace stokeshom {

namespace {

constexpr int kNq = fe::kQuadPerElement;
constexpr double kGaugeTol = 1e-8;  // relative bound on velocity means

// Evaluates every component of a field (or of its gradient) at arbitrary points.
class PointEval {
 public:
  explicit PointEval(const GridFunction& f) : f_(f), mesh_(*f.mesh()) {}

  int components() const { return f_.components(); }

  void values(const Point& x, double* out) const {
    const auto loc = mesh_.locate(x);
    if (f_.space() == Space::kP1disc) {
      const int base = mesh_.element_p1(loc.ex, loc.ey);
      const double s = 2.0 * loc.local[0] - 1.0;
      const double t = 2.0 * loc.local[1] - 1.0;
      for (int c = 0; c < f_.components(); ++c)
        out[c] = f_.at(c, base) + f_.at(c, base + 1) * s + f_.at(c, base + 2) * t;
      return;
    }
    const auto nodes = mesh_.element_q2(loc.ex, loc.ey);
    const auto bs = fe::q2_1d(loc.local[0]);
    const auto bt = fe::q2_1d(loc.local[1]);
    for (int c = 0; c < f_.components(); ++c) {
      double v = 0.0;
      for (int lb = 0; lb < 3; ++lb)
        for (int la = 0; la < 3; ++la) v += f_.at(c, nodes[la + 3 * lb]) * bs[la] * bt[lb];
      out[c] = v;
    }
  }

  // out[mat_index(k, c)] = ∂_k f^c
  void gradients(const Point& x, double* out) const {
    const auto loc = mesh_.locate(x);
    const double inv_h = 1.0 / mesh_.h();
    if (f_.space() == Space::kP1disc) {
      const int base = mesh_.element_p1(loc.ex, loc.ey);
      for (int c = 0; c < f_.components(); ++c) {
        out[mat_index(0, c)] = 2.0 * f_.at(c, base + 1) * inv_h;
        out[mat_index(1, c)] = 2.0 * f_.at(c, base + 2) * inv_h;
      }
      return;
    }
    const auto nodes = mesh_.element_q2(loc.ex, loc.ey);
    const auto bs = fe::q2_1d(loc.local[0]);
    const auto bt = fe::q2_1d(loc.local[1]);
    const auto ds = fe::q2_1d_deriv(loc.local[0]);
    const auto dt = fe::q2_1d_deriv(loc.local[1]);
    for (int c = 0; c < f_.components(); ++c) {
      double gx = 0.0;
      double gy = 0.0;
      for (int lb = 0; lb < 3; ++lb)
        for (int la = 0; la < 3; ++la) {
          const double v = f_.at(c, nodes[la + 3 * lb]);
          gx += v * ds[la] * bt[lb];
          gy += v * bs[la] * dt[lb];
        }
      out[mat_index(0, c)] = gx * inv_h;
      out[mat_index(1, c)] = gy * inv_h;
    }
  }

 private:
  const GridFunction& f_;
  const TensorMesh& mesh_;
};

void require_cover(const TensorMesh& source, const TensorMesh& target, double eps) {
  if (source.periodic()) return;
  const double slack = 1e-12 * (1.0 + target.length());
  const bool below = source.origin() <= target.origin() - eps + slack;
  const bool above = source.origin() + source.length() >= target.origin() + target.length() - slack;
  if (!below || !above)
    throw ResolutionError("steklov: source mesh does not cover the target shifted by eps (eps = " +
                          std::to_string(eps) + ")");
}

// Midpoint average of eval over x − εz, z ∈ [0,1)^2, plus (optionally) the
// face-difference gradient. out has n entries, grad n * kDim (index c * kDim + k).
template <class Eval>
void steklov_at(const Eval& eval, int n, const Point& x, double eps, int k, double* out, double* grad,
                std::vector<double>& scratch) {
  scratch.resize(static_cast<std::size_t>(n));
  double* tmp = scratch.data();
  const double inv_k = 1.0 / k;
  for (int c = 0; c < n; ++c) out[c] = 0.0;
  for (int lb = 0; lb < k; ++lb)
    for (int la = 0; la < k; ++la) {
      eval({x[0] - eps * (la + 0.5) * inv_k, x[1] - eps * (lb + 0.5) * inv_k}, tmp);
      for (int c = 0; c < n; ++c) out[c] += tmp[c];
    }
  for (int c = 0; c < n; ++c) out[c] *= inv_k * inv_k;
  if (grad == nullptr) return;
  for (int c = 0; c < n * kDim; ++c) grad[c] = 0.0;
  for (int dir = 0; dir < kDim; ++dir) {
    const int other = 1 - dir;
    for (int l = 0; l < k; ++l) {
      Point near = x;
      near[other] -= eps * (l + 0.5) * inv_k;
      Point far = near;
      far[dir] -= eps;
      eval(near, tmp);
      for (int c = 0; c < n; ++c) grad[c * kDim + dir] += tmp[c];
      eval(far, tmp);
      for (int c = 0; c < n; ++c) grad[c * kDim + dir] -= tmp[c];
    }
  }
  for (int c = 0; c < n * kDim; ++c) grad[c] *= inv_k / eps;
}

void require_positive_eps(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidInput("eps must be positive");
}

}  // namespace

ExtendedField extend(const GridFunction& u0, const DomainMesh& dm, double eps_max) {
  if (u0.mesh()->id() != dm.mesh()->id()) throw InvalidInput("extend: field does not live on the domain mesh");
  if (u0.space() != Space::kQ2) throw InvalidInput("extend: expects a Q2 field");
  if (dm.pad_width() < eps_max * (1.0 - 1e-12))
    throw ResolutionError("extend: pad width " + std::to_string(dm.pad_width()) + " is below eps_max " +
                          std::to_string(eps_max));
  const auto& base = *dm.mesh();
  const auto& padded = *dm.padded();
  GridFunction out(dm.padded(), Space::kQ2, u0.components());
  const int side = padded.q2_side();
  const int shift = 2 * dm.pad();
  const int top = 2 * dm.m();
  auto reflect = [top](int a) { return a < 0 ? -a : (a > top ? 2 * top - a : a); };
  for (int b = 0; b < side; ++b)
    for (int a = 0; a < side; ++a) {
      const int src = base.q2_node(reflect(a - shift), reflect(b - shift));
      const int dst = padded.q2_node(a, b);
      for (int c = 0; c < u0.components(); ++c) out.at(c, dst) = u0.at(c, src);
    }
  const double h_base = h2_surrogate_norm(u0);
  const double h_pad = h2_surrogate_norm(out);
  const double c_ext = h_base > 0.0 ? h_pad / h_base : 1.0;
  return ExtendedField{u0, std::move(out), dm.pad_width(), c_ext};
}

int steklov_subdivisions(double eps, double h) {
  require_positive_eps(eps);
  return static_cast<int>(std::floor(eps / h)) + 1;
}

QuadratureField steklov(const GridFunction& f, double eps, const MeshPtr& target, bool with_gradient) {
  require_positive_eps(eps);
  require_cover(*f.mesh(), *target, eps);
  const PointEval pe(f);
  const int n = f.components();
  const int k = steklov_subdivisions(eps, target->h());
  QuadratureField out(target, n, with_gradient);
  std::vector<double> val(static_cast<std::size_t>(n));
  std::vector<double> grad(static_cast<std::size_t>(n * kDim));
  std::vector<double> scratch;
  auto eval = [&pe](const Point& y, double* o) { pe.values(y, o); };
  for (int ey = 0; ey < target->cells(); ++ey)
    for (int ex = 0; ex < target->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = target->element_index(ex, ey) * kNq + q;
        steklov_at(eval, n, target->quad_point(ex, ey, q), eps, k, val.data(),
                   with_gradient ? grad.data() : nullptr, scratch);
        for (int c = 0; c < n; ++c) {
          out.value(qp, c) = val[static_cast<std::size_t>(c)];
          if (with_gradient)
            for (int d = 0; d < kDim; ++d) out.grad(qp, c, d) = grad[static_cast<std::size_t>(c * kDim + d)];
        }
      }
  return out;
}

GridFunction steklov_nodal(const GridFunction& f, double eps, const MeshPtr& target) {
  require_positive_eps(eps);
  require_cover(*f.mesh(), *target, eps);
  const PointEval pe(f);
  const int n = f.components();
  const int k = steklov_subdivisions(eps, target->h());
  GridFunction out(target, Space::kQ2, n);
  std::vector<double> val(static_cast<std::size_t>(n));
  std::vector<double> scratch;
  auto eval = [&pe](const Point& y, double* o) { pe.values(y, o); };
  const int side = target->q2_side();
  for (int b = 0; b < side; ++b)
    for (int a = 0; a < side; ++a) {
      steklov_at(eval, n, target->q2_coord(a, b), eps, k, val.data(), nullptr, scratch);
      for (int c = 0; c < n; ++c) out.at(c, target->q2_node(a, b)) = val[static_cast<std::size_t>(c)];
    }
  return out;
}

QuadratureField steklov_gradient(const GridFunction& f, double eps, const MeshPtr& target) {
  require_positive_eps(eps);
  require_cover(*f.mesh(), *target, eps);
  const PointEval pe(f);
  const int n = f.components() * kDim;
  const int k = steklov_subdivisions(eps, target->h());
  QuadratureField out(target, n, true);
  std::vector<double> val(static_cast<std::size_t>(n));
  std::vector<double> grad(static_cast<std::size_t>(n * kDim));
  std::vector<double> scratch;
  auto eval = [&pe](const Point& y, double* o) { pe.gradients(y, o); };
  for (int ey = 0; ey < target->cells(); ++ey)
    for (int ex = 0; ex < target->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = target->element_index(ex, ey) * kNq + q;
        steklov_at(eval, n, target->quad_point(ex, ey, q), eps, k, val.data(), grad.data(), scratch);
        for (int c = 0; c < n; ++c) {
          out.value(qp, c) = val[static_cast<std::size_t>(c)];
          for (int d = 0; d < kDim; ++d) out.grad(qp, c, d) = grad[static_cast<std::size_t>(c * kDim + d)];
        }
      }
  return out;
}

QuadratureField sample_periodic(const GridFunction& f, double eps, const MeshPtr& target) {
  require_positive_eps(eps);
  if (!f.mesh()->periodic()) throw InvalidInput("sample_periodic: expects a cell field");
  const PointEval pe(f);
  const int n = f.components();
  QuadratureField out(target, n, true);
  std::vector<double> val(static_cast<std::size_t>(n));
  std::vector<double> grad(static_cast<std::size_t>(n * kDim));
  for (int ey = 0; ey < target->cells(); ++ey)
    for (int ex = 0; ex < target->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = target->element_index(ex, ey) * kNq + q;
        const Point x = target->quad_point(ex, ey, q);
        const Point y = {x[0] / eps, x[1] / eps};
        pe.values(y, val.data());
        pe.gradients(y, grad.data());
        for (int c = 0; c < n; ++c) {
          out.value(qp, c) = val[static_cast<std::size_t>(c)];
          for (int d = 0; d < kDim; ++d) out.grad(qp, c, d) = grad[static_cast<std::size_t>(mat_index(d, c))];
        }
      }
  return out;
}

GridFunction sample_periodic_nodal(const GridFunction& f, double eps, const MeshPtr& target) {
  require_positive_eps(eps);
  if (!f.mesh()->periodic()) throw InvalidInput("sample_periodic: expects a cell field");
  const PointEval pe(f);
  const int n = f.components();
  GridFunction out(target, Space::kQ2, n);
  std::vector<double> val(static_cast<std::size_t>(n));
  const int side = target->q2_side();
  for (int b = 0; b < side; ++b)
    for (int a = 0; a < side; ++a) {
      const Point x = target->q2_coord(a, b);
      pe.values({x[0] / eps, x[1] / eps}, val.data());
      for (int c = 0; c < n; ++c) out.at(c, target->q2_node(a, b)) = val[static_cast<std::size_t>(c)];
    }
  return out;
}

ResidualFields assemble_residuals(const FlowField& ue, const FlowField& u0, const Corrector& c, double eps,
                                  const DomainMesh& dm) {
  require_positive_eps(eps);
  const MeshPtr& mesh = dm.mesh();
  for (const FlowField* f : {&ue, &u0}) {
    if (f->u.mesh()->id() != mesh->id() || f->p.mesh()->id() != mesh->id())
      throw InvalidInput("assemble_residuals: flows must live on the domain mesh");
    const auto um = mean(f->u);
    const double scale = 1.0 + l2_norm(f->u);
    for (double v : um)
      if (std::fabs(v) > kGaugeTol * scale)
        throw InvalidInput("assemble_residuals: gauge not applied (velocity mean " + std::to_string(v) + ")");
  }
  const ExtendedField ext = extend(u0.u, dm, eps);
  const QuadratureField s = steklov_gradient(ext.padded, eps, mesh);

  std::vector<QuadratureField> chi;
  std::vector<QuadratureField> pi;
  std::vector<QuadratureField> dchi;
  for (int jb = 0; jb < kNumCorrectors; ++jb) {
    chi.push_back(sample_periodic(c.chi[jb], eps, mesh));
    pi.push_back(sample_periodic(c.pi[jb], eps, mesh));
    dchi.push_back(sample_periodic(c.div_chi[jb], eps, mesh));
  }
  const GridFunction div_e = discrete_divergence(ue.u);
  const GridFunction div_0 = discrete_divergence(u0.u);
  const double pe_mean = mean(ue.p)[0];
  const double p0_mean = mean(u0.p)[0];

  ResidualFields r{QuadratureField(mesh, kDim, true), GridFunction(mesh, Space::kQ2, kDim),
                   QuadratureField(mesh, 1, false), QuadratureField(mesh, 1, false),
                   QuadratureField(mesh, 1, false), ext.c_ext};
  const auto& tab = fe::tables();
  std::vector<double> corr_pressure(static_cast<std::size_t>(mesh->num_quad_points()));
  double corr_pressure_mean = 0.0;
  for (int ey = 0; ey < mesh->cells(); ++ey)
    for (int ex = 0; ex < mesh->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = mesh->element_index(ex, ey) * kNq + q;
        const Point& loc = tab.local[q];
        double div_fe = div_e.value(0, ex, ey, loc) - div_0.value(0, ex, ey, loc);
        double div_corr = 0.0;  // (Π div_y χ)^ε · s
        double chi_t = 0.0;     // χ_j^{αβ,ε} ∂_α s_j^β
        double ps = 0.0;
        for (int al = 0; al < kDim; ++al) {
          double v = ue.u.value(al, ex, ey, loc) - u0.u.value(al, ex, ey, loc);
          Vec g_e = ue.u.gradient(al, ex, ey, loc);
          Vec g_0 = u0.u.gradient(al, ex, ey, loc);
          Vec g = {g_e[0] - g_0[0], g_e[1] - g_0[1]};
          for (int j = 0; j < kDim; ++j)
            for (int be = 0; be < kDim; ++be) {
              const int jb = jb_index(j, be);
              const int sj = mat_index(j, be);
              const double sv = s.value(qp, sj);
              v -= eps * chi[jb].value(qp, al) * sv;
              for (int k = 0; k < kDim; ++k)
                g[k] -= chi[jb].grad(qp, al, k) * sv + eps * chi[jb].value(qp, al) * s.grad(qp, sj, k);
              chi_t += chi[jb].value(qp, al) * s.grad(qp, sj, al);
            }
          r.v.value(qp, al) = v;
          for (int k = 0; k < kDim; ++k) r.v.grad(qp, al, k) = g[k];
        }
        for (int jb = 0; jb < kNumCorrectors; ++jb) {
          const int sj = mat_index(jb / kDim, jb % kDim);
          div_corr += dchi[jb].value(qp, 0) * s.value(qp, sj);
          ps += pi[jb].value(qp, 0) * s.value(qp, sj);
        }
        const double dv = div_fe - div_corr - eps * chi_t;
        r.div_v.value(qp, 0) = dv;
        r.div_identity.value(qp, 0) = dv + eps * chi_t;
        corr_pressure[static_cast<std::size_t>(qp)] = ps;
        corr_pressure_mean += tab.weight[q] * mesh->h() * mesh->h() * ps;
      }
  corr_pressure_mean /= mesh->length() * mesh->length();
  for (int ey = 0; ey < mesh->cells(); ++ey)
    for (int ex = 0; ex < mesh->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = mesh->element_index(ex, ey) * kNq + q;
        const Point& loc = tab.local[q];
        r.p_res.value(qp, 0) = (ue.p.value(0, ex, ey, loc) - pe_mean) - (u0.p.value(0, ex, ey, loc) - p0_mean) -
                               (corr_pressure[static_cast<std::size_t>(qp)] - corr_pressure_mean);
      }

  // Q2 interpolant of the corrector term: S_ε(∇ũ_0) and χ^ε at the nodes of Ω.
  const int k = steklov_subdivisions(eps, mesh->h());
  const PointEval grad_eval(ext.padded);
  std::vector<PointEval> chi_eval;
  for (int jb = 0; jb < kNumCorrectors; ++jb) chi_eval.emplace_back(c.chi[jb]);
  auto eval = [&grad_eval](const Point& y, double* o) { grad_eval.gradients(y, o); };
  std::vector<double> sn(kDim * kDim);
  std::vector<double> cv(kDim);
  std::vector<double> scratch;
  const int side = mesh->q2_side();
  for (int b = 0; b < side; ++b)
    for (int a = 0; a < side; ++a) {
      const Point x = mesh->q2_coord(a, b);
      const int node = mesh->q2_node(a, b);
      steklov_at(eval, kDim * kDim, x, eps, k, sn.data(), nullptr, scratch);
      Vec corr{};
      for (int jb = 0; jb < kNumCorrectors; ++jb) {
        chi_eval[static_cast<std::size_t>(jb)].values({x[0] / eps, x[1] / eps}, cv.data());
        const double sv = sn[static_cast<std::size_t>(mat_index(jb / kDim, jb % kDim))];
        for (int al = 0; al < kDim; ++al) corr[al] += eps * cv[static_cast<std::size_t>(al)] * sv;
      }
      for (int al = 0; al < kDim; ++al) r.v_nodal.at(al, node) = ue.u.at(al, node) - u0.u.at(al, node) - corr[al];
    }
  return r;
}

double boundary_layer_norm(const GridFunction& f_cell, const GridFunction& u_padded, double eps,
                           const MeshPtr& target) {
  const QuadratureField fe_q = sample_periodic(f_cell, eps, target);
  const QuadratureField su = steklov(u_padded, eps, target, false);
  const auto& tab = fe::tables();
  const double h = target->h();
  double s = 0.0;
  for (int ey = 0; ey < target->cells(); ++ey)
    for (int ex = 0; ex < target->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = target->element_index(ex, ey) * kNq + q;
        const Point x = target->quad_point(ex, ey, q);
        if (DomainMesh::distance_to_boundary(x) > 2.0 * eps) continue;
        double f2 = 0.0;
        double u2 = 0.0;
        for (int c = 0; c < fe_q.components(); ++c) f2 += fe_q.value(qp, c) * fe_q.value(qp, c);
        for (int c = 0; c < su.components(); ++c) u2 += su.value(qp, c) * su.value(qp, c);
        s += tab.weight[q] * h * h * f2 * u2;
      }
  return std::sqrt(s);
}

}  // namespace stokeshom
