#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stokeshom/cell.hpp"
#include "stokeshom/neumann.hpp"
#include "stokeshom/twoscale.hpp"

namespace stokeshom {

struct SlopeGates {
  double l2_u_slope = 0.9;
  double l2_u_r2 = 0.98;
  double h1_v_slope = 0.45;
  double l2_p_slope = 0.45;
};

struct StudyConfig {
  std::string family = "trig";
  std::vector<double> params = {0.5, 0.4};
  std::vector<double> eps_list = {0.25, 0.125, 0.0625, 0.03125};
  double mesh_factor = 8.0;  // m = ceil(factor / ε)
  int cell_n = 64;
  std::string data_generator = "homogenized_mms";
  std::uint64_t seed = 7;
  double solver_tol = kDefaultTol;
  SlopeGates gates;
  /// ε values at which the adjoint problem is solved for the duality check.
  std::vector<double> duality_eps = {0.125};
  int workers = 1;

  int mesh_for(double eps) const;
};

/// Defaults overlaid with `j`; throws ConfigError naming the offending key.
StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StudyConfig& cfg);
/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const StudyConfig& cfg);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least squares on (log ε, log err). Needs ≥ 3 points with err > 0.
SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points);

/// Problem data for a study; they depend on Â for the default generator.
ProblemData study_data(const std::string& generator, const EffectiveTensor& ahat);

/// Smooth forcing H of the adjoint problem used by the duality check.
Vec duality_forcing(const Point& x);

struct StudyRow {
  double eps = 0.0;
  int m = 0;
  double l2_u_err = 0.0;
  double h1_v_err = 0.0;
  double l2_p_err = 0.0;
  double div_v = 0.0;
  double u0_h2 = 0.0;
  double h1_v_err_nodal = 0.0;
  double div_identity_rel = 0.0;   // ‖div_v + εχ^ε ∂S_ε(∇ũ_0)‖ / ‖∇v‖
  double div_pointwise = 0.0;      // ‖div v‖ at quadrature points, for reference
  double residual_eps = 0.0;
  double residual_0 = 0.0;
  double c_ext = 0.0;
  double boundary_layer_ratio = 0.0;  // ‖∇v‖_{L²(Ω_{2ε})} / √ε
  double flux_error = 0.0;
  double u0_l2 = 0.0;
  double u0_h1 = 0.0;
  double p0_l2 = 0.0;
};

struct DualityRow {
  double eps = 0.0;
  double direct = 0.0;       // ∫ v·(H − ⨍H)
  double via_adjoint = 0.0;  // a(v, φ_ε) − ∫ σ_ε div v
  double rel_diff = 0.0;
  double boundary_layer_ratio = 0.0;  // ‖∇φ_ε‖_{L²(Ω_{2ε})} / √ε
};

struct SlopeEntry {
  std::string column;
  std::optional<SlopeFit> fit;
  bool noise_floor = false;
};

struct RateReport {
  StudyConfig config;
  std::string hash;
  Tensor4 a_hat;
  double cell_residual = 0.0;
  std::vector<StudyRow> rows;
  std::vector<DualityRow> duality;
  std::vector<SlopeEntry> slopes;  // empty when fewer than 3 rows
  std::vector<std::string> warnings;
  // Wall-clock seconds, kept out of the report files so they stay reproducible.
  double seconds_cell = 0.0;
  std::vector<double> seconds_per_eps;
};

/// Fixed smooth matrix test field Ψ_i^α of the flux diagnostic, seeded.
using MatrixField = std::function<Mat(const Point&)>;
MatrixField default_flux_test_field(std::uint64_t seed);

RateReport run_study(const StudyConfig& cfg);

/// e(ε) = |∫(A^ε∇u_ε − Â∇u_0)·Ψ| for every ε of the study.
std::vector<double> flux_convergence(const StudyConfig& cfg, const MatrixField& psi);
/// Same pairing for given flows.
double flux_pairing(const CoefficientField& a, double eps, const EffectiveTensor& ahat, const FlowField& ue,
                    const FlowField& u0, const MatrixField& psi);

struct BoundaryLayer {
  double strip_norm = 0.0;  // ‖∇u‖_{L²(Ω_{2ε})}
  double ratio = 0.0;       // strip_norm / √ε
};
BoundaryLayer boundary_layer_profile(const GridFunction& u, double eps);
BoundaryLayer boundary_layer_profile(const QuadratureField& u, double eps);

/// Both sides of the discrete duality identity for a Q2 field v.
DualityRow duality_pairing(const CoefficientField& a, double eps, const GridFunction& v, const FlowField& adj,
                           const std::function<Vec(const Point&)>& forcing);

struct GateResult {
  bool insufficient = false;  // fewer than 3 rows
  bool passed = true;         // all non-flagged gates hold
  std::vector<std::string> failures;
};
GateResult evaluate_gates(const RateReport& r);

/// Manufactured Neumann problem with coefficient δ_ij δ_αβ:
/// u* = (sin πx₂, sin πx₁), p* = cos πx₁.
struct MmsRow {
  int m = 0;
  double l2_u = 0.0;   // ‖u_h − (u* − ⨍u*)‖_{L²}
  double h1_u = 0.0;   // |u_h − u*|_{H¹}
  double l2_p = 0.0;   // ‖p_h − p*‖_{L²}
  double residual = 0.0;
  double compat_defect = 0.0;
};
std::vector<MmsRow> run_mms(const std::vector<int>& m_list, double tol = kDefaultTol);
/// log(e_k / e_{k+1}) / log(m_{k+1} / m_k) for successive rows.
std::vector<double> observed_orders(const std::vector<MmsRow>& rows, double MmsRow::*err);

nlohmann::json to_json(const RateReport& r);
/// Columns eps,l2_u_err,h1_v_err,l2_p_err,div_v,u0_h2.
std::string to_csv(const RateReport& r);
nlohmann::json timings_json(const RateReport& r);

}  // namespace stokeshom
