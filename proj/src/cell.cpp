#include "stokeshom/cell.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>

#include "stokeshom/assembly.hpp"
#include "stokeshom/errors.hpp"
#include "stokeshom/linalg.hpp"
#include "stokeshom/parallel.hpp"

namespace stokeshom {

namespace {

constexpr int kNq = fe::kQuadPerElement;

std::vector<Tensor4> sample_coefficient(const CoefficientField& a, const TensorMesh& mesh) {
  std::vector<Tensor4> out(static_cast<std::size_t>(mesh.num_quad_points()));
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < kNq; ++q) out[(ex + mesh.cells() * ey) * kNq + q] = a(mesh.quad_point(ex, ey, q));
  return out;
}

// Right-hand side ∫ s w (deriv < 0) or ∫ s ∂_deriv w for a scalar Q2 test space,
// with a trailing zero for the mean multiplier.
Vector scalar_load(const TensorMesh& mesh, const std::function<double(int qp)>& s, int deriv) {
  const auto& tab = fe::tables();
  Vector out = Vector::Zero(mesh.q2_count() + 1);
  const double h = mesh.h();
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const int e = ex + mesh.cells() * ey;
      const auto n2 = mesh.element_q2(ex, ey);
      for (int q = 0; q < kNq; ++q) {
        const double v = s(e * kNq + q);
        if (v == 0.0) continue;
        const double w = tab.weight[q] * h * h;
        for (int a = 0; a < fe::kQ2PerElement; ++a) {
          const double phi = deriv < 0 ? tab.q2[q][a] : tab.q2_grad[q][a][deriv] / h;
          out[n2[a]] += w * v * phi;
        }
      }
    }
  return out;
}

GridFunction scalar_from(const MeshPtr& mesh, const Vector& x) {
  std::vector<double> v(x.data(), x.data() + mesh->q2_count());
  return GridFunction(mesh, Space::kQ2, 1, std::move(v));
}

}  // namespace

Corrector solve_cell(const CoefficientField& a, const CellGrid& g, double tol, int workers) {
  const MeshPtr& mesh = g.mesh();
  const auto& tab = fe::tables();
  const StokesLayout lay = stokes_layout(*mesh);
  const std::vector<Tensor4> aq = sample_coefficient(a, *mesh);
  const int nc = mesh->cells();

  DirectSolver solver;
  solver.factorize(assemble_stokes(*mesh, [&](int ex, int ey, int q) { return aq[(ex + nc * ey) * kNq + q]; }),
                   "cell problem", stokes_ordering(*mesh));

  Corrector c;
  c.mesh = mesh;
  c.chi.assign(kNumCorrectors, GridFunction(mesh, Space::kQ2, kDim));
  c.pi.assign(kNumCorrectors, GridFunction(mesh, Space::kP1disc, 1));
  c.div_chi.assign(kNumCorrectors, GridFunction(mesh, Space::kP1disc, 1));
  c.chi_q.assign(kNumCorrectors, QuadratureField(mesh, kDim, true));
  c.pi_q.assign(kNumCorrectors, QuadratureField(mesh, 1, true));
  std::vector<double> residuals(kNumCorrectors, 0.0);

  parallel_for(kNumCorrectors, workers, [&](int jb) {
    const int j = jb / kDim;
    const int beta = jb % kDim;
    // −∫ A∇P_j^β · ∇v with P_j^β = y_j e^β.
    Vector rhs = Vector::Zero(lay.size());
    const double h = mesh->h();
    for (int ey = 0; ey < nc; ++ey)
      for (int ex = 0; ex < nc; ++ex) {
        const auto n2 = mesh->element_q2(ex, ey);
        for (int q = 0; q < kNq; ++q) {
          const Tensor4& aqq = aq[(ex + nc * ey) * kNq + q];
          const double w = tab.weight[q] * h;
          for (int al = 0; al < kDim; ++al)
            for (int ia = 0; ia < fe::kQ2PerElement; ++ia) {
              double s = 0.0;
              for (int i = 0; i < kDim; ++i) s += aqq(i, j, al, beta) * tab.q2_grad[q][ia][i];
              rhs[lay.u(al, n2[ia])] -= w * s;
            }
        }
      }
    const Vector x = solver.solve(rhs, tol, &residuals[jb]);
    c.chi[jb] = velocity_from(mesh, x);
    c.pi[jb] = pressure_from(mesh, x);
    c.div_chi[jb] = discrete_divergence(c.chi[jb]);
    c.chi_q[jb] = sample_at_quadrature(c.chi[jb]);
    c.pi_q[jb] = sample_at_quadrature(c.pi[jb]);
  });
  for (double r : residuals) c.residual = std::max(c.residual, r);
  return c;
}

EffectiveTensor effective_tensor(const CoefficientField& a, const Corrector& c, const CellGrid& g) {
  const auto& mesh = *g.mesh();
  if (c.mesh->id() != mesh.id()) throw InvalidInput("effective_tensor: corrector lives on a different cell grid");
  EffectiveTensor out;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = (ex + mesh.cells() * ey) * kNq + q;
        const Tensor4 aq = a(mesh.quad_point(ex, ey, q));
        const double w = mesh.quad_weight(q);
        for (int i = 0; i < kDim; ++i)
          for (int j = 0; j < kDim; ++j)
            for (int al = 0; al < kDim; ++al)
              for (int be = 0; be < kDim; ++be) {
                double s = aq(i, j, al, be);
                const auto& chi = c.chi_q[jb_index(j, be)];
                for (int k = 0; k < kDim; ++k)
                  for (int ga = 0; ga < kDim; ++ga) s += aq(i, k, al, ga) * chi.grad(qp, ga, k);
                out.a_hat(i, j, al, be) += w * s;
              }
      }
  return out;
}

BField b_field(const CoefficientField& a, const Corrector& c, const EffectiveTensor& ahat, const CellGrid& g,
               BFieldMutation mutation) {
  const MeshPtr& mesh = g.mesh();
  if (c.mesh->id() != mesh->id()) throw InvalidInput("b_field: corrector lives on a different cell grid");
  const double sign = mutation == BFieldMutation::kFlipCorrectorTerm ? -1.0 : 1.0;
  BField out{QuadratureField(mesh, kNumB, false)};
  for (int ey = 0; ey < mesh->cells(); ++ey)
    for (int ex = 0; ex < mesh->cells(); ++ex)
      for (int q = 0; q < kNq; ++q) {
        const int qp = (ex + mesh->cells() * ey) * kNq + q;
        const Tensor4 aq = a(mesh->quad_point(ex, ey, q));
        for (int i = 0; i < kDim; ++i)
          for (int j = 0; j < kDim; ++j)
            for (int al = 0; al < kDim; ++al)
              for (int be = 0; be < kDim; ++be) {
                double corr = 0.0;
                const auto& chi = c.chi_q[jb_index(j, be)];
                for (int k = 0; k < kDim; ++k)
                  for (int ga = 0; ga < kDim; ++ga) corr += aq(i, k, al, ga) * chi.grad(qp, ga, k);
                out.b.value(qp, b_index(i, j, al, be)) = aq(i, j, al, be) + sign * corr - ahat.a_hat(i, j, al, be);
              }
      }
  return out;
}

DualCorrector dual_correctors(const BField& bf, const Corrector& c, const CellGrid& g, double tol, double compat_tol,
                              int workers) {
  const MeshPtr& mesh = g.mesh();
  if (bf.b.mesh()->id() != mesh->id() || c.mesh->id() != mesh->id())
    throw InvalidInput("dual_correctors: inputs live on different cell grids");

  const auto bmean = mean(bf.b);
  for (int k = 0; k < kNumB; ++k)
    if (std::fabs(bmean[k]) > compat_tol)
      throw CompatibilityError("dual_correctors: mean(b) = " + std::to_string(bmean[k]) +
                               " violates the compatibility condition (upstream corrector error)");
  for (int jb = 0; jb < kNumCorrectors; ++jb)
    if (std::fabs(mean(c.pi[jb])[0]) > compat_tol)
      throw CompatibilityError("dual_correctors: corrector pressure is not mean-zero");

  DirectSolver poisson;
  poisson.factorize(assemble_periodic_poisson(*mesh), "periodic Poisson", poisson_ordering(*mesh));
  std::vector<double> residuals(kNumPhi + kNumB + kNumQ + kNumCorrectors, 0.0);
  auto solve = [&](const Vector& rhs, int slot) {
    return scalar_from(mesh, poisson.solve(rhs, tol, &residuals[static_cast<std::size_t>(slot)]));
  };

  DualCorrector dc;
  dc.r.assign(kNumCorrectors, GridFunction(mesh, Space::kQ2, 1));
  dc.q.assign(kNumQ, GridFunction(mesh, Space::kQ2, 1));
  dc.f.assign(kNumB, GridFunction(mesh, Space::kQ2, 1));
  dc.phi.assign(kNumPhi, GridFunction(mesh, Space::kQ2, 1));

  // ΔR = π, and q_{ij} = ∂_i R obtained directly from Δq_{ij} = ∂_i π.
  parallel_for(kNumCorrectors, workers, [&](int jb) {
    const auto& p = c.pi_q[jb];
    dc.r[jb] = solve(-scalar_load(*mesh, [&](int qp) { return p.value(qp, 0); }, -1), jb);
  });
  parallel_for(kNumQ, workers, [&](int idx) {
    const int i = idx / (kDim * kDim);
    const int jb = idx % (kDim * kDim);
    const auto& p = c.pi_q[jb];
    dc.q[idx] = solve(scalar_load(*mesh, [&](int qp) { return p.value(qp, 0); }, i), kNumCorrectors + idx);
  });

  std::vector<QuadratureField> q_q;
  q_q.reserve(kNumQ);
  for (const auto& q : dc.q) q_q.push_back(sample_at_quadrature(q));

  // h_{ij}^{αβ} = b_{ij}^{αβ} − ∂_α q_{ij}^β
  auto h_at = [&](int i, int j, int al, int be, int qp) {
    return bf.b.value(qp, b_index(i, j, al, be)) - q_q[q_index(i, j, be)].grad(qp, 0, al);
  };
  std::vector<GridFunction> g_k(kNumPhi, GridFunction(mesh, Space::kQ2, 1));
  parallel_for(kNumB, workers, [&](int idx) {
    const int i = idx / (kDim * kDim * kDim);
    const int j = (idx / (kDim * kDim)) % kDim;
    const int al = (idx / kDim) % kDim;
    const int be = idx % kDim;
    auto h = [&](int qp) { return h_at(i, j, al, be, qp); };
    dc.f[idx] = solve(-scalar_load(*mesh, h, -1), kNumCorrectors + kNumQ + idx);
    // g_k = ∂_k f via Δg_k = ∂_k h.
    for (int k = 0; k < kDim; ++k)
      g_k[k * kNumB + idx] = solve(scalar_load(*mesh, h, k), kNumCorrectors + kNumQ + kNumB + k * kNumB + idx);
  });

  // Φ_{kij} = ∂_k f_{ij} − ∂_i f_{kj}
  for (int k = 0; k < kDim; ++k)
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j)
        for (int al = 0; al < kDim; ++al)
          for (int be = 0; be < kDim; ++be) {
            const auto& a1 = g_k[k * kNumB + b_index(i, j, al, be)];
            const auto& a2 = g_k[i * kNumB + b_index(k, j, al, be)];
            auto& out = dc.phi[phi_index(k, i, j, al, be)];
            for (std::size_t n = 0; n < out.values().size(); ++n) out.values()[n] = a1.values()[n] - a2.values()[n];
          }
  for (double r : residuals) dc.residual = std::max(dc.residual, r);
  return dc;
}

double decomposition_residual(const BField& bf, const DualCorrector& dc) {
  const MeshPtr& mesh = bf.b.mesh();
  const int nqp = mesh->num_quad_points();
  std::vector<double> r(static_cast<std::size_t>(nqp) * kNumB);
  for (int qp = 0; qp < nqp; ++qp)
    for (int c = 0; c < kNumB; ++c) r[static_cast<std::size_t>(qp) * kNumB + c] = bf.b.value(qp, c);
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      for (int be = 0; be < kDim; ++be) {
        const QuadratureField qq = sample_at_quadrature(dc.q[q_index(i, j, be)]);
        for (int al = 0; al < kDim; ++al)
          for (int qp = 0; qp < nqp; ++qp)
            r[static_cast<std::size_t>(qp) * kNumB + b_index(i, j, al, be)] -= qq.grad(qp, 0, al);
      }
  for (int k = 0; k < kDim; ++k)
    for (int c = 0; c < kNumB; ++c) {
      const QuadratureField pq = sample_at_quadrature(dc.phi[k * kNumB + c]);
      for (int qp = 0; qp < nqp; ++qp) r[static_cast<std::size_t>(qp) * kNumB + c] -= pq.grad(qp, 0, k);
    }
  double s = 0.0;
  for (int qp = 0; qp < nqp; ++qp) {
    const double w = mesh->quad_weight(qp % kNq);
    for (int c = 0; c < kNumB; ++c) s += w * r[static_cast<std::size_t>(qp) * kNumB + c] * r[static_cast<std::size_t>(qp) * kNumB + c];
  }
  return std::sqrt(s);
}

double pressure_relation_residual(const Corrector& c, const DualCorrector& dc) {
  const MeshPtr& mesh = c.mesh;
  const int nqp = mesh->num_quad_points();
  double s = 0.0;
  for (int j = 0; j < kDim; ++j)
    for (int be = 0; be < kDim; ++be) {
      std::vector<double> r(static_cast<std::size_t>(nqp));
      const auto& p = c.pi_q[jb_index(j, be)];
      for (int qp = 0; qp < nqp; ++qp) r[qp] = p.value(qp, 0);
      for (int i = 0; i < kDim; ++i) {
        const QuadratureField qq = sample_at_quadrature(dc.q[q_index(i, j, be)]);
        for (int qp = 0; qp < nqp; ++qp) r[qp] -= qq.grad(qp, 0, i);
      }
      for (int qp = 0; qp < nqp; ++qp) s += mesh->quad_weight(qp % kNq) * r[qp] * r[qp];
    }
  return std::sqrt(s);
}

double antisymmetry_defect(const DualCorrector& dc) {
  double m = 0.0;
  for (int k = 0; k < kDim; ++k)
    for (int i = 0; i < kDim; ++i)
      for (int j = 0; j < kDim; ++j)
        for (int al = 0; al < kDim; ++al)
          for (int be = 0; be < kDim; ++be) {
            const auto& a = dc.phi[phi_index(k, i, j, al, be)].values();
            const auto& b = dc.phi[phi_index(i, k, j, al, be)].values();
            for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, std::fabs(a[n] + b[n]));
          }
  return m;
}

CellDiagnostics verify_cell_identities(const CoefficientField& a, const Corrector& c, const EffectiveTensor& ahat,
                                       const BField& bf, const DualCorrector& dc, const CellGrid& g, double tol,
                                       std::uint64_t seed) {
  CellDiagnostics d;
  const auto& mesh = *c.mesh;
  for (int jb = 0; jb < kNumCorrectors; ++jb) {
    d.div_chi_l2 = std::max(d.div_chi_l2, l2_norm(c.div_chi[jb]));
    double s = 0.0;
    for (int qp = 0; qp < mesh.num_quad_points(); ++qp) {
      double div = 0.0;
      for (int al = 0; al < kDim; ++al) div += c.chi_q[jb].grad(qp, al, al);
      s += mesh.quad_weight(qp % kNq) * div * div;
    }
    d.div_chi_pointwise_l2 = std::max(d.div_chi_pointwise_l2, std::sqrt(s));
    for (double v : mean(c.chi[jb])) d.max_mean_chi = std::max(d.max_mean_chi, std::fabs(v));
    d.max_mean_pi = std::max(d.max_mean_pi, std::fabs(mean(c.pi[jb])[0]));
  }
  for (double v : mean(bf.b)) d.max_mean_b = std::max(d.max_mean_b, std::fabs(v));
  d.decomposition_residual = decomposition_residual(bf, dc);
  d.pressure_relation_residual = pressure_relation_residual(c, dc);
  d.antisymmetry_defect = antisymmetry_defect(dc);
  d.ahat_ellipticity_floor = check_ellipticity(ahat.a_hat, a.mu(), 10000, seed).min_quotient;
  const CoefficientField astar = adjoint(a);
  const Corrector cstar = solve_cell(astar, g, tol);
  d.adjoint_symmetry_defect = effective_tensor(astar, cstar, g).a_hat.max_abs_diff(ahat.a_hat.swapped());
  double phi2 = 0.0;
  double q2 = 0.0;
  for (const auto& p : dc.phi) phi2 += std::pow(l2_norm(p), 2);
  for (const auto& q : dc.q) q2 += std::pow(l2_norm(q), 2);
  d.phi_l2 = std::sqrt(phi2);
  d.q_l2 = std::sqrt(q2);
  return d;
}

void write_corrector_dump(const std::string& prefix, const Corrector& c) {
  const auto& mesh = *c.mesh;
  std::ofstream csv(prefix + "_chi.csv");
  csv << std::setprecision(17) << "x,y";
  for (int j = 0; j < kDim; ++j)
    for (int be = 0; be < kDim; ++be)
      for (int al = 0; al < kDim; ++al) csv << ",chi_" << j + 1 << be + 1 << "_" << al + 1;
  csv << '\n';
  nlohmann::json nodes = nlohmann::json::array();
  const int s2 = mesh.q2_side();
  for (int b = 0; b < s2; ++b)
    for (int a = 0; a < s2; ++a) {
      const Point x = mesh.q2_coord(a, b);
      const int node = mesh.q2_node(a, b);
      csv << x[0] << ',' << x[1];
      for (int jb = 0; jb < kNumCorrectors; ++jb)
        for (int al = 0; al < kDim; ++al) csv << ',' << c.chi[jb].at(al, node);
      csv << '\n';
      nodes.push_back({x[0], x[1]});
    }
  std::ofstream pcsv(prefix + "_pi.csv");
  pcsv << std::setprecision(17) << "x,y";
  for (int j = 0; j < kDim; ++j)
    for (int be = 0; be < kDim; ++be) pcsv << ",pi_" << j + 1 << be + 1;
  pcsv << '\n';
  // Discontinuous pressure: one row per element centre, value of the constant mode.
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex) {
      const Point x = mesh.quad_point(ex, ey, 4);
      pcsv << x[0] << ',' << x[1];
      for (int jb = 0; jb < kNumCorrectors; ++jb) pcsv << ',' << c.pi[jb].value(0, ex, ey, {0.5, 0.5});
      pcsv << '\n';
    }
  nlohmann::json j;
  j["n"] = mesh.cells();
  j["velocity_space"] = to_string(c.chi[0].space_tag());
  j["pressure_space"] = to_string(c.pi[0].space_tag());
  j["velocity_nodes"] = std::move(nodes);
  for (int jj = 0; jj < kDim; ++jj)
    for (int be = 0; be < kDim; ++be) {
      const std::string key = std::to_string(jj + 1) + std::to_string(be + 1);
      j["chi"][key] = c.chi[jb_index(jj, be)].values();
      j["pi"][key] = c.pi[jb_index(jj, be)].values();
    }
  j["residual"] = c.residual;
  std::ofstream(prefix + ".json") << j.dump(1) << '\n';
}

}  // namespace stokeshom
