#include "stokeshom/rates.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "stokeshom/errors.hpp"
#include "stokeshom/parallel.hpp"
#include "stokeshom/random.hpp"

namespace stokeshom {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNoiseFactor = 10.0;
constexpr double kInversionTolerance = 0.05;
const std::set<std::string> kFamilies = {"constant", "classical", "laminate", "trig", "checkerboard"};
const std::set<std::string> kGenerators = {"homogenized_mms", "uniform_traction"};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw ConfigError(key, "config key '" + key + "': " + why);
}

void check_keys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : obj.items()) {
    (void)v;
    if (!allowed.count(k)) bad(prefix + k, "unknown key");
  }
}

double get_number(const json& obj, const std::string& name, const std::string& key) {
  const json& v = obj.at(name);
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& name, const std::string& key) {
  const json& v = obj.at(name);
  if (!v.is_number_integer()) bad(key, "expected an integer");
  return v.get<int>();
}

std::vector<double> get_numbers(const json& obj, const std::string& name, const std::string& key) {
  const json& v = obj.at(name);
  if (!v.is_array()) bad(key, "expected an array of numbers");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) bad(key, "expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

const json& get_object(const json& obj, const std::string& name, const std::string& key) {
  const json& v = obj.at(name);
  if (!v.is_object()) bad(key, "expected an object");
  return v;
}

// Homogenized manufactured solution: solenoidal velocity, smooth pressure.
AnalyticVector mms_velocity() {
  AnalyticVector u;
  u.value = [](const Point& x) {
    return Vec{std::sin(kPi * x[0]) * std::cos(kPi * x[1]), -std::cos(kPi * x[0]) * std::sin(kPi * x[1])};
  };
  u.gradient = [](const Point& x) {
    const double s0 = std::sin(kPi * x[0]), c0 = std::cos(kPi * x[0]);
    const double s1 = std::sin(kPi * x[1]), c1 = std::cos(kPi * x[1]);
    Mat m{};
    m[mat_index(0, 0)] = kPi * c0 * c1;
    m[mat_index(1, 0)] = -kPi * s0 * s1;
    m[mat_index(0, 1)] = kPi * s0 * s1;
    m[mat_index(1, 1)] = -kPi * c0 * c1;
    return m;
  };
  u.hessian = [](const Point& x) {
    const double s0 = std::sin(kPi * x[0]), c0 = std::cos(kPi * x[0]);
    const double s1 = std::sin(kPi * x[1]), c1 = std::cos(kPi * x[1]);
    const double p2 = kPi * kPi;
    auto at = [](int j, int k, int b) { return static_cast<std::size_t>((j * kDim + k) * kDim + b); };
    std::array<double, kDim * kDim * kDim> h{};
    h[at(0, 0, 0)] = -p2 * s0 * c1;
    h[at(0, 1, 0)] = -p2 * c0 * s1;
    h[at(1, 0, 0)] = -p2 * c0 * s1;
    h[at(1, 1, 0)] = -p2 * s0 * c1;
    h[at(0, 0, 1)] = p2 * c0 * s1;
    h[at(0, 1, 1)] = -p2 * s0 * c1;
    h[at(1, 0, 1)] = -p2 * s0 * c1;
    h[at(1, 1, 1)] = p2 * c0 * s1;
    return h;
  };
  return u;
}

AnalyticScalar mms_pressure() {
  AnalyticScalar p;
  p.value = [](const Point& x) { return std::cos(kPi * x[0]) * std::cos(kPi * x[1]); };
  p.gradient = [](const Point& x) {
    return Vec{-kPi * std::sin(kPi * x[0]) * std::cos(kPi * x[1]), -kPi * std::cos(kPi * x[0]) * std::sin(kPi * x[1])};
  };
  return p;
}

struct EpsOutcome {
  StudyRow row;
  std::optional<DualityRow> duality;
  double seconds = 0.0;
};

bool contains(const std::vector<double>& list, double v) {
  return std::any_of(list.begin(), list.end(), [v](double e) { return std::fabs(e - v) <= 1e-12 * v; });
}

EpsOutcome run_eps(const StudyConfig& cfg, const CoefficientField& a, const Corrector& c, const EffectiveTensor& ahat,
                   const ProblemData& data, const MatrixField& psi, double eps) {
  const auto t0 = std::chrono::steady_clock::now();
  const int m = cfg.mesh_for(eps);
  const DomainMesh dm(m, static_cast<int>(std::ceil(eps * m)) + 1);
  const FlowField ue = solve_oscillating(a, eps, data, dm, cfg.solver_tol);
  const FlowField u0 = solve_homogenized(ahat, data, dm, cfg.solver_tol);
  const ResidualFields r = assemble_residuals(ue, u0, c, eps, dm);

  EpsOutcome out;
  StudyRow& row = out.row;
  row.eps = eps;
  row.m = m;
  row.l2_u_err = l2_distance(ue.u, u0.u);
  row.h1_v_err = h1_norm(r.v);
  row.l2_p_err = l2_norm(r.p_res);
  row.div_v = l2_norm(r.div_v);
  row.u0_h2 = u0.u_h2.value_or(h2_surrogate_norm(u0.u));
  row.h1_v_err_nodal = h1_norm(r.v_nodal);
  const double grad_v = h1_seminorm(r.v);
  row.div_identity_rel = grad_v > 0.0 ? l2_norm(r.div_identity) / grad_v : l2_norm(r.div_identity);
  {
    QuadratureField div(r.v.mesh(), 1, false);
    for (int qp = 0; qp < div.num_points(); ++qp) {
      double s = 0.0;
      for (int al = 0; al < kDim; ++al) s += r.v.grad(qp, al, al);
      div.value(qp, 0) = s;
    }
    row.div_pointwise = l2_norm(div);
  }
  row.residual_eps = ue.residual;
  row.residual_0 = u0.residual;
  row.c_ext = r.c_ext;
  row.boundary_layer_ratio = boundary_layer_profile(r.v, eps).ratio;
  row.flux_error = flux_pairing(a, eps, ahat, ue, u0, psi);
  row.u0_l2 = l2_norm(u0.u);
  row.u0_h1 = h1_norm(u0.u);
  row.p0_l2 = l2_norm(subtract_mean(u0.p));

  if (contains(cfg.duality_eps, eps)) {
    const FlowField adj = solve_adjoint(a, eps, duality_forcing, dm, cfg.solver_tol);
    out.duality = duality_pairing(a, eps, r.v_nodal, adj, duality_forcing);
  }
  out.seconds = seconds_since(t0);
  return out;
}

RateReport run_impl(const StudyConfig& cfg, const MatrixField& psi) {
  RateReport rep;
  rep.config = cfg;
  rep.hash = config_hash(cfg);
  const CoefficientField a = builtin_family(cfg.family, cfg.params);
  const auto t0 = std::chrono::steady_clock::now();
  const CellGrid g(cfg.cell_n);
  const Corrector c = solve_cell(a, g, cfg.solver_tol, cfg.workers);
  const EffectiveTensor ahat = effective_tensor(a, c, g);
  rep.seconds_cell = seconds_since(t0);
  rep.a_hat = ahat.a_hat;
  rep.cell_residual = c.residual;
  const ProblemData data = study_data(cfg.data_generator, ahat);

  const int n = static_cast<int>(cfg.eps_list.size());
  std::vector<EpsOutcome> outcomes(static_cast<std::size_t>(n));
  parallel_for(n, cfg.workers, [&](int k) {
    outcomes[static_cast<std::size_t>(k)] = run_eps(cfg, a, c, ahat, data, psi, cfg.eps_list[static_cast<std::size_t>(k)]);
  });
  for (const EpsOutcome& o : outcomes) {
    rep.rows.push_back(o.row);
    if (o.duality) rep.duality.push_back(*o.duality);
    rep.seconds_per_eps.push_back(o.seconds);
  }

  struct Column {
    const char* name;
    double StudyRow::*err;
    double StudyRow::*scale;
  };
  const Column columns[] = {
      {"l2_u_err", &StudyRow::l2_u_err, &StudyRow::u0_l2},
      {"h1_v_err", &StudyRow::h1_v_err, &StudyRow::u0_h1},
      {"l2_p_err", &StudyRow::l2_p_err, &StudyRow::p0_l2},
      {"div_v", &StudyRow::div_v, &StudyRow::u0_h1},
      {"flux_error", &StudyRow::flux_error, &StudyRow::u0_h1},
  };
  const bool enough = rep.rows.size() >= 3;
  if (!enough) rep.warnings.emplace_back("fewer than 3 eps values: slopes omitted");
  for (const Column& col : columns) {
    SlopeEntry entry;
    entry.column = col.name;
    std::vector<std::pair<double, double>> pts;
    for (const StudyRow& row : rep.rows) {
      const double floor = kNoiseFactor * std::max(row.residual_eps, row.residual_0) * std::max(1.0, row.*col.scale);
      if (!(row.*col.err > floor)) entry.noise_floor = true;
      pts.emplace_back(row.eps, row.*col.err);
    }
    if (entry.noise_floor) {
      rep.warnings.push_back(std::string(col.name) + ": errors at the solver noise floor, slope not fitted");
    } else {
      for (std::size_t k = 1; k < rep.rows.size(); ++k) {
        const double prev = rep.rows[k - 1].*col.err;
        const double cur = rep.rows[k].*col.err;
        if (cur > prev) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "%s increases from eps=%g to eps=%g by %.1f%%%s", col.name,
                        rep.rows[k - 1].eps, rep.rows[k].eps, 100.0 * (cur / prev - 1.0),
                        cur > (1.0 + kInversionTolerance) * prev ? "" : " (within tolerance)");
          rep.warnings.emplace_back(buf);
        }
      }
      if (enough) entry.fit = fit_slope(pts);
    }
    if (enough) rep.slopes.push_back(entry);
  }
  if (!enough) return rep;
  {
    SlopeEntry entry;
    entry.column = "l2_u_err_normalized";
    entry.noise_floor = rep.slopes.front().noise_floor;
    if (!entry.noise_floor) {
      std::vector<std::pair<double, double>> pts;
      for (const StudyRow& row : rep.rows) pts.emplace_back(row.eps, row.l2_u_err / row.u0_h2);
      entry.fit = fit_slope(pts);
    }
    rep.slopes.push_back(entry);
  }
  return rep;
}

json fit_json(const SlopeEntry& e) {
  json j;
  j["noise_floor"] = e.noise_floor;
  if (e.fit) {
    j["slope"] = e.fit->slope;
    j["intercept"] = e.fit->intercept;
    j["r2"] = e.fit->r2;
  } else {
    j["slope"] = nullptr;
  }
  return j;
}

}  // namespace

int StudyConfig::mesh_for(double eps) const {
  return static_cast<int>(std::ceil(mesh_factor / eps - 1e-9));
}

StudyConfig study_config_from_json(const json& j) {
  if (!j.is_object()) bad("<root>", "config must be a JSON object");
  check_keys(j, "", {"coefficient", "eps_list", "mesh_rule", "cell_n", "data_spec", "seed", "tolerances", "gates",
                     "duality_eps", "workers"});
  StudyConfig cfg;
  if (j.contains("coefficient")) {
    const json& co = get_object(j, "coefficient", "coefficient");
    check_keys(co, "coefficient.", {"family", "params"});
    if (co.contains("family")) {
      if (!co.at("family").is_string()) bad("coefficient.family", "expected a string");
      cfg.family = co.at("family").get<std::string>();
      if (!kFamilies.count(cfg.family)) bad("coefficient.family", "unknown family '" + cfg.family + "'");
      if (!co.contains("params")) cfg.params.clear();
    }
    if (co.contains("params")) cfg.params = get_numbers(co, "params", "coefficient.params");
  }
  try {
    (void)builtin_family(cfg.family, cfg.params);
  } catch (const InvalidInput& e) {
    bad("coefficient.params", e.what());
  }
  if (j.contains("eps_list")) cfg.eps_list = get_numbers(j, "eps_list", "eps_list");
  if (cfg.eps_list.empty()) bad("eps_list", "must not be empty");
  for (std::size_t k = 0; k < cfg.eps_list.size(); ++k) {
    const double e = cfg.eps_list[k];
    if (!(e > 0.0 && e <= 0.5)) bad("eps_list", "entries must lie in (0, 1/2]");
    if (k > 0 && !(e < cfg.eps_list[k - 1])) bad("eps_list", "must be strictly decreasing");
  }
  if (j.contains("mesh_rule")) {
    const json& mr = get_object(j, "mesh_rule", "mesh_rule");
    check_keys(mr, "mesh_rule.", {"factor"});
    if (mr.contains("factor")) cfg.mesh_factor = get_number(mr, "factor", "mesh_rule.factor");
  }
  if (!(cfg.mesh_factor >= 8.0)) bad("mesh_rule.factor", "must be >= 8 (resolution h <= eps/8)");
  for (double e : cfg.eps_list)
    if (cfg.mesh_for(e) > 4096) bad("mesh_rule.factor", "mesh size above 4096 cells per axis");
  if (j.contains("cell_n")) cfg.cell_n = get_int(j, "cell_n", "cell_n");
  if (cfg.cell_n < 4 || cfg.cell_n % 2 != 0) bad("cell_n", "must be even and >= 4");
  if (j.contains("data_spec")) {
    const json& ds = get_object(j, "data_spec", "data_spec");
    check_keys(ds, "data_spec.", {"generator"});
    if (ds.contains("generator")) {
      if (!ds.at("generator").is_string()) bad("data_spec.generator", "expected a string");
      cfg.data_generator = ds.at("generator").get<std::string>();
    }
  }
  if (!kGenerators.count(cfg.data_generator)) bad("data_spec.generator", "unknown generator '" + cfg.data_generator + "'");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) bad("seed", "expected a nonnegative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("tolerances")) {
    const json& t = get_object(j, "tolerances", "tolerances");
    check_keys(t, "tolerances.", {"solver"});
    if (t.contains("solver")) cfg.solver_tol = get_number(t, "solver", "tolerances.solver");
  }
  if (!(cfg.solver_tol > 0.0 && cfg.solver_tol < 1e-2)) bad("tolerances.solver", "must lie in (0, 1e-2)");
  if (j.contains("gates")) {
    const json& gt = get_object(j, "gates", "gates");
    check_keys(gt, "gates.", {"l2_u_slope", "l2_u_r2", "h1_v_slope", "l2_p_slope"});
    if (gt.contains("l2_u_slope")) cfg.gates.l2_u_slope = get_number(gt, "l2_u_slope", "gates.l2_u_slope");
    if (gt.contains("l2_u_r2")) cfg.gates.l2_u_r2 = get_number(gt, "l2_u_r2", "gates.l2_u_r2");
    if (gt.contains("h1_v_slope")) cfg.gates.h1_v_slope = get_number(gt, "h1_v_slope", "gates.h1_v_slope");
    if (gt.contains("l2_p_slope")) cfg.gates.l2_p_slope = get_number(gt, "l2_p_slope", "gates.l2_p_slope");
  }
  if (j.contains("duality_eps")) cfg.duality_eps = get_numbers(j, "duality_eps", "duality_eps");
  if (j.contains("workers")) cfg.workers = get_int(j, "workers", "workers");
  if (cfg.workers < 1) bad("workers", "must be >= 1");
  return cfg;
}

json to_json(const StudyConfig& cfg) {
  json j;
  j["coefficient"] = {{"family", cfg.family}, {"params", cfg.params}};
  j["eps_list"] = cfg.eps_list;
  j["mesh_rule"] = {{"factor", cfg.mesh_factor}};
  j["cell_n"] = cfg.cell_n;
  j["data_spec"] = {{"generator", cfg.data_generator}};
  j["seed"] = cfg.seed;
  j["tolerances"] = {{"solver", cfg.solver_tol}};
  j["gates"] = {{"l2_u_slope", cfg.gates.l2_u_slope},
                {"l2_u_r2", cfg.gates.l2_u_r2},
                {"h1_v_slope", cfg.gates.h1_v_slope},
                {"l2_p_slope", cfg.gates.l2_p_slope}};
  j["duality_eps"] = cfg.duality_eps;
  j["workers"] = cfg.workers;
  return j;
}

std::string config_hash(const StudyConfig& cfg) {
  json j = to_json(cfg);
  j.erase("workers");  // results do not depend on the worker count
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw InvalidInput("fit_slope: needs at least 3 points");
  const double n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [e, err] : points) {
    if (!(e > 0.0)) throw InvalidInput("fit_slope: eps values must be positive");
    if (!(err > 0.0)) throw InvalidInput("fit_slope: error values must be positive");
    sx += std::log(e);
    sy += std::log(err);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [e, err] : points) {
    const double dx = std::log(e) - mx, dy = std::log(err) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw InvalidInput("fit_slope: eps values must not all coincide");
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

ProblemData study_data(const std::string& generator, const EffectiveTensor& ahat) {
  if (generator == "homogenized_mms")
    return manufactured_problem(constant_coefficient(ahat.a_hat), 1.0, mms_velocity(), mms_pressure());
  if (generator == "uniform_traction") {
    // ∫F = (1/2 + 1/π, 1/3); the constant traction cancels it over |∂Ω| = 4.
    ProblemData d;
    d.force = [](const Point& x) { return Vec{x[1] + 0.5 * std::sin(kPi * x[0]), x[0] * x[0]}; };
    const Vec t = {-(0.5 + 1.0 / kPi) / 4.0, -(1.0 / 3.0) / 4.0};
    d.traction = [t](const Point&, const Vec&) { return t; };
    return d;
  }
  throw InvalidInput("study_data: unknown generator '" + generator + "'");
}

Vec duality_forcing(const Point& x) {
  const double r2 = (x[0] - 0.4) * (x[0] - 0.4) + (x[1] - 0.6) * (x[1] - 0.6);
  const double bump = std::exp(-r2 / 0.05);
  return Vec{bump, -0.5 * bump + std::sin(kPi * x[0]) * std::cos(kPi * x[1])};
}

MatrixField default_flux_test_field(std::uint64_t seed) {
  SeededRng rng(seed);
  std::array<std::array<double, 4>, kDim * kDim> c{};
  for (auto& row : c)
    for (double& v : row) v = rng.uniform(-1.0, 1.0);
  return [c](const Point& x) {
    Mat m{};
    for (int k = 0; k < kDim * kDim; ++k)
      m[static_cast<std::size_t>(k)] = c[k][0] + c[k][1] * std::sin(kPi * x[0] + c[k][3]) * std::cos(kPi * x[1]) +
                                       c[k][2] * x[0] * x[1];
    return m;
  };
}

double flux_pairing(const CoefficientField& a, double eps, const EffectiveTensor& ahat, const FlowField& ue,
                    const FlowField& u0, const MatrixField& psi) {
  if (ue.u.mesh()->id() != u0.u.mesh()->id()) throw InvalidInput("flux_pairing: flows live on different meshes");
  const QuadratureField ge = sample_at_quadrature(ue.u);
  const QuadratureField g0 = sample_at_quadrature(u0.u);
  const TensorMesh& mesh = *ue.u.mesh();
  double s = 0.0;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const int qp = mesh.element_index(ex, ey) * fe::kQuadPerElement + q;
        const Point x = mesh.quad_point(ex, ey, q);
        const Tensor4 ae = a({x[0] / eps, x[1] / eps});
        const Mat w = psi(x);
        double v = 0.0;
        for (int i = 0; i < kDim; ++i)
          for (int j = 0; j < kDim; ++j)
            for (int al = 0; al < kDim; ++al)
              for (int be = 0; be < kDim; ++be)
                v += (ae(i, j, al, be) * ge.grad(qp, be, j) - ahat.a_hat(i, j, al, be) * g0.grad(qp, be, j)) *
                     w[mat_index(i, al)];
        s += mesh.quad_weight(q) * v;
      }
  return std::fabs(s);
}

std::vector<double> flux_convergence(const StudyConfig& cfg, const MatrixField& psi) {
  StudyConfig c = cfg;
  c.duality_eps.clear();
  const RateReport r = run_impl(c, psi);
  std::vector<double> out;
  for (const StudyRow& row : r.rows) out.push_back(row.flux_error);
  return out;
}

BoundaryLayer boundary_layer_profile(const GridFunction& u, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("boundary_layer_profile: eps must be positive");
  BoundaryLayer b;
  b.strip_norm = strip_gradient_norm(u, 2.0 * eps);
  b.ratio = b.strip_norm / std::sqrt(eps);
  return b;
}

BoundaryLayer boundary_layer_profile(const QuadratureField& u, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("boundary_layer_profile: eps must be positive");
  BoundaryLayer b;
  b.strip_norm = strip_gradient_norm(u, 2.0 * eps);
  b.ratio = b.strip_norm / std::sqrt(eps);
  return b;
}

DualityRow duality_pairing(const CoefficientField& a, double eps, const GridFunction& v, const FlowField& adj,
                           const std::function<Vec(const Point&)>& forcing) {
  if (v.mesh()->id() != adj.u.mesh()->id()) throw InvalidInput("duality_pairing: fields live on different meshes");
  if (v.space() != Space::kQ2 || v.components() != kDim)
    throw InvalidInput("duality_pairing: v must be a Q2 velocity field");
  const TensorMesh& mesh = *v.mesh();
  const auto& tab = fe::tables();
  Vec hmean{};
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const Vec h = forcing(mesh.quad_point(ex, ey, q));
        for (int c = 0; c < kDim; ++c) hmean[c] += mesh.quad_weight(q) * h[c];
      }
  const double area = mesh.length() * mesh.length();
  for (double& h : hmean) h /= area;
  double direct = 0.0;
  double pressure = 0.0;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const double w = mesh.quad_weight(q);
        const Vec h = forcing(mesh.quad_point(ex, ey, q));
        double div = 0.0;
        for (int c = 0; c < kDim; ++c) {
          direct += w * (h[c] - hmean[c]) * v.value(c, ex, ey, tab.local[q]);
          div += v.gradient(c, ex, ey, tab.local[q])[c];
        }
        pressure += w * adj.p.value(0, ex, ey, tab.local[q]) * div;
      }
  DualityRow row;
  row.eps = eps;
  row.direct = direct;
  row.via_adjoint = bilinear_form(a, eps, v, adj.u) - pressure;
  const double scale = std::max(std::fabs(direct), std::fabs(row.via_adjoint));
  row.rel_diff = scale > 0.0 ? std::fabs(direct - row.via_adjoint) / scale : 0.0;
  row.boundary_layer_ratio = boundary_layer_profile(adj.u, eps).ratio;
  return row;
}

RateReport run_study(const StudyConfig& cfg) { return run_impl(cfg, default_flux_test_field(cfg.seed)); }

std::vector<MmsRow> run_mms(const std::vector<int>& m_list, double tol) {
  AnalyticVector u;
  u.value = [](const Point& x) { return Vec{std::sin(kPi * x[1]), std::sin(kPi * x[0])}; };
  u.gradient = [](const Point& x) {
    Mat g{};
    g[mat_index(1, 0)] = kPi * std::cos(kPi * x[1]);
    g[mat_index(0, 1)] = kPi * std::cos(kPi * x[0]);
    return g;
  };
  u.hessian = [](const Point& x) {
    std::array<double, kDim * kDim * kDim> h{};
    h[(1 * kDim + 1) * kDim + 0] = -kPi * kPi * std::sin(kPi * x[1]);
    h[(0 * kDim + 0) * kDim + 1] = -kPi * kPi * std::sin(kPi * x[0]);
    return h;
  };
  AnalyticScalar p;
  p.value = [](const Point& x) { return std::cos(kPi * x[0]); };
  p.gradient = [](const Point& x) { return Vec{-kPi * std::sin(kPi * x[0]), 0.0}; };
  const std::vector<double> one = {1.0};
  const CoefficientField a = builtin_family("classical", one);
  const ProblemData data = manufactured_problem(a, 1.0, u, p);
  const double umean = 2.0 / kPi;

  std::vector<MmsRow> rows;
  for (int m : m_list) {
    const DomainMesh dm(m, 0);
    MmsRow row;
    row.m = m;
    row.compat_defect = check_compatibility(data, dm).defect;
    const FlowField sol = solve_oscillating(a, 1.0, data, dm, tol);
    row.residual = sol.residual;
    const TensorMesh& mesh = *dm.mesh();
    const auto& tab = fe::tables();
    double eu = 0.0, eg = 0.0, ep = 0.0;
    for (int ey = 0; ey < m; ++ey)
      for (int ex = 0; ex < m; ++ex)
        for (int q = 0; q < fe::kQuadPerElement; ++q) {
          const Point x = mesh.quad_point(ex, ey, q);
          const double w = mesh.quad_weight(q);
          const Vec ux = u.value(x);
          const Mat gx = u.gradient(x);
          for (int c = 0; c < kDim; ++c) {
            const double d = sol.u.value(c, ex, ey, tab.local[q]) - (ux[c] - umean);
            eu += w * d * d;
            const Vec g = sol.u.gradient(c, ex, ey, tab.local[q]);
            for (int k = 0; k < kDim; ++k) eg += w * (g[k] - gx[mat_index(k, c)]) * (g[k] - gx[mat_index(k, c)]);
          }
          const double dp = sol.p.value(0, ex, ey, tab.local[q]) - p.value(x);
          ep += w * dp * dp;
        }
    row.l2_u = std::sqrt(eu);
    row.h1_u = std::sqrt(eg);
    row.l2_p = std::sqrt(ep);
    rows.push_back(row);
  }
  return rows;
}

std::vector<double> observed_orders(const std::vector<MmsRow>& rows, double MmsRow::*err) {
  std::vector<double> out;
  for (std::size_t k = 1; k < rows.size(); ++k)
    out.push_back(std::log(rows[k - 1].*err / rows[k].*err) /
                  std::log(static_cast<double>(rows[k].m) / rows[k - 1].m));
  return out;
}

GateResult evaluate_gates(const RateReport& r) {
  GateResult g;
  if (r.rows.size() < 3 || r.slopes.empty()) {
    g.insufficient = true;
    g.passed = false;
    return g;
  }
  auto find = [&](const std::string& name) -> const SlopeEntry& {
    for (const SlopeEntry& e : r.slopes)
      if (e.column == name) return e;
    throw InvalidInput("evaluate_gates: missing slope " + name);
  };
  auto gate = [&](const std::string& col, double value, double threshold, const char* what) {
    if (!(value >= threshold)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s %s %.4f below %.4f", col.c_str(), what, value, threshold);
      g.failures.emplace_back(buf);
      g.passed = false;
    }
  };
  const SlopeEntry& l2u = find("l2_u_err");
  if (l2u.fit) {
    gate("l2_u_err", l2u.fit->slope, r.config.gates.l2_u_slope, "slope");
    gate("l2_u_err", l2u.fit->r2, r.config.gates.l2_u_r2, "r2");
  }
  const SlopeEntry& h1v = find("h1_v_err");
  if (h1v.fit) gate("h1_v_err", h1v.fit->slope, r.config.gates.h1_v_slope, "slope");
  const SlopeEntry& l2p = find("l2_p_err");
  if (l2p.fit) gate("l2_p_err", l2p.fit->slope, r.config.gates.l2_p_slope, "slope");
  return g;
}

json to_json(const RateReport& r) {
  json j;
  j["config"] = to_json(r.config);
  j["config_hash"] = r.hash;
  j["a_hat"] = r.a_hat.data();
  j["cell_residual"] = r.cell_residual;
  json rows = json::array();
  for (const StudyRow& row : r.rows) {
    rows.push_back({{"eps", row.eps},
                    {"m", row.m},
                    {"l2_u_err", row.l2_u_err},
                    {"h1_v_err", row.h1_v_err},
                    {"l2_p_err", row.l2_p_err},
                    {"div_v", row.div_v},
                    {"u0_h2", row.u0_h2},
                    {"l2_u_err_normalized", row.l2_u_err / row.u0_h2},
                    {"h1_v_err_nodal", row.h1_v_err_nodal},
                    {"div_identity_rel", row.div_identity_rel},
                    {"div_v_pointwise", row.div_pointwise},
                    {"residual_eps", row.residual_eps},
                    {"residual_0", row.residual_0},
                    {"c_ext", row.c_ext},
                    {"boundary_layer_ratio", row.boundary_layer_ratio},
                    {"flux_error", row.flux_error}});
  }
  j["rows"] = rows;
  json dual = json::array();
  for (const DualityRow& d : r.duality)
    dual.push_back({{"eps", d.eps},
                    {"direct", d.direct},
                    {"via_adjoint", d.via_adjoint},
                    {"rel_diff", d.rel_diff},
                    {"boundary_layer_ratio", d.boundary_layer_ratio}});
  j["duality"] = dual;
  if (!r.slopes.empty()) {
    json s;
    for (const SlopeEntry& e : r.slopes) s[e.column] = fit_json(e);
    j["slopes"] = s;
    const GateResult g = evaluate_gates(r);
    j["gates"] = {{"passed", g.passed}, {"failures", g.failures}};
  }
  j["warnings"] = r.warnings;
  return j;
}

std::string to_csv(const RateReport& r) {
  std::ostringstream os;
  os << "eps,l2_u_err,h1_v_err,l2_p_err,div_v,u0_h2\n";
  char buf[256];
  for (const StudyRow& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.eps, row.l2_u_err, row.h1_v_err,
                  row.l2_p_err, row.div_v, row.u0_h2);
    os << buf;
  }
  return os.str();
}

json timings_json(const RateReport& r) {
  json j;
  j["config_hash"] = r.hash;
  j["cell_seconds"] = r.seconds_cell;
  json per = json::array();
  for (std::size_t k = 0; k < r.rows.size(); ++k)
    per.push_back({{"eps", r.rows[k].eps}, {"seconds", r.seconds_per_eps[k]}});
  j["per_eps"] = per;
  return j;
}

}  // namespace stokeshom
