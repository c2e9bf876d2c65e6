// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stokeshom/cell.hpp"
#include "stokeshom/coeff.hpp"
#include "stokeshom/rates.hpp"
#include "stokeshom/twoscale.hpp"
#include "support.hpp"

namespace {

using namespace stokeshom;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

// Runs one criterion and prints its line. budget <= 0 means no runtime limit.
template <class Fn>
void criterion(int id, const char* name, double budget, Fn&& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    fn(o);
  } catch (const std::exception& e) {
    o.passed = false;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + "exception: " + e.what();
  }
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget > 0.0) o.require(s <= budget, fmt("runtime %.1f s", s) + fmt(" <= %.0f s", budget));
  else o.detail += fmt("; runtime %.1f s", s);
  if (!o.passed) ++failures;
  std::printf("%s  %2d  %-28s %s\n", o.passed ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
}

double corrector_norm(const Corrector& c) {
  double s = 0.0;
  for (const auto& f : c.chi_q) s = std::max(s, l2_norm(f));
  for (const auto& f : c.pi_q) s = std::max(s, l2_norm(f));
  return s;
}

Tensor4 tensor_from(const std::vector<double>& v) {
  Tensor4 t;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int al = 0; al < 2; ++al)
        for (int be = 0; be < 2; ++be) t(i, j, al, be) = v[static_cast<std::size_t>(b_index(i, j, al, be))];
  return t;
}

DomainMesh padded_mesh(int m, double eps) { return DomainMesh(m, static_cast<int>(std::ceil(eps * m)) + 1); }

double max_deviation(const QuadratureField& f, const std::function<double(const Point&)>& expect) {
  const auto& mesh = *f.mesh();
  double d = 0.0;
  for (int ey = 0; ey < mesh.cells(); ++ey)
    for (int ex = 0; ex < mesh.cells(); ++ex)
      for (int q = 0; q < fe::kQuadPerElement; ++q) {
        const int qp = mesh.element_index(ex, ey) * fe::kQuadPerElement + q;
        d = std::max(d, std::fabs(f.value(qp, 0) - expect(mesh.quad_point(ex, ey, q))));
      }
  return d;
}

double product_norm(const QuadratureField& f, const QuadratureField& u) {
  const auto& mesh = *f.mesh();
  double s = 0.0;
  for (int qp = 0; qp < f.num_points(); ++qp)
    s += mesh.quad_weight(qp % fe::kQuadPerElement) * std::pow(f.value(qp, 0) * u.value(qp, 0), 2);
  return std::sqrt(s);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct RatesRun {
  int exit_code = -1;
  double seconds = 0.0;
  json report;
  std::string csv;
};

RatesRun run_rates(const fs::path& out) {
  fs::remove_all(out);
  fs::create_directories(out);
  const std::string cmd = std::string(STOKESHOM_EXE) + " --out " + out.string() + " rates > " +
                          (out / "stdout.txt").string() + " 2>&1";
  RatesRun r;
  const auto t0 = Clock::now();
  const int status = std::system(cmd.c_str());
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (fs::exists(out / "report.json")) r.report = json::parse(slurp(out / "report.json"));
  r.csv = slurp(out / "report.csv");
  return r;
}

void cell_oracles(Outcome& o) {
  double zero = 0.0, exact = 0.0;
  const std::vector<double> aniso = {2, 0, 0, 1, 0, 0.5, 0.5, 0, 0, 0.5, 0.5, 0, 1, 0, 0, 2};
  const CoefficientField families[] = {builtin_family("classical", std::vector<double>{1.0}),
                                       builtin_family("classical", std::vector<double>{2.5}),
                                       builtin_family("constant", aniso)};
  const Tensor4 expect[] = {Tensor4::isotropic(1.0), Tensor4::isotropic(2.5), tensor_from(aniso)};
  const CellGrid g16(16);
  for (int k = 0; k < 3; ++k) {
    const Corrector c = solve_cell(families[k], g16);
    zero = std::max(zero, corrector_norm(c));
    exact = std::max(exact, effective_tensor(families[k], c, g16).a_hat.max_abs_diff(expect[k]));
  }
  o.require(zero <= 1e-10, fmt("max ||chi||,||pi|| %.2e <= 1e-10", zero));
  o.require(exact <= 1e-12, fmt("|A_hat - A| %.2e <= 1e-12", exact));
  const CoefficientField lam = builtin_family("laminate", std::vector<double>{1.0, 4.0});
  const CellGrid g(128);
  const Corrector c = solve_cell(lam, g);
  const double d = effective_tensor(lam, c, g).a_hat.max_abs_diff(testing::LaminateOracle({1.0, 4.0}).a_hat());
  o.require(d <= 1e-6, fmt("laminate n=128 |A_hat - oracle| %.2e <= 1e-6", d));
}

void dual_identities(Outcome& o) {
  const CoefficientField a = builtin_family("trig", std::vector<double>{0.5, 0.4});
  std::vector<double> dec, pr;
  double anti = 0.0;
  for (int n : {32, 64, 128}) {
    const CellGrid g(n);
    const Corrector c = solve_cell(a, g);
    const EffectiveTensor e = effective_tensor(a, c, g);
    const BField bf = b_field(a, c, e, g);
    const DualCorrector dc = dual_correctors(bf, c, g);
    dec.push_back(decomposition_residual(bf, dc));
    pr.push_back(pressure_relation_residual(c, dc));
    anti = std::max(anti, antisymmetry_defect(dc));
  }
  for (std::size_t k = 0; k + 1 < dec.size(); ++k) {
    const double od = std::log2(dec[k] / dec[k + 1]), op = std::log2(pr[k] / pr[k + 1]);
    const std::string tag = k == 0 ? " 32->64" : " 64->128";
    o.require(od >= 1.8, "decomposition order" + tag + fmt(" %.3f >= 1.8", od));
    o.require(op >= 1.8, "pressure relation order" + tag + fmt(" %.3f >= 1.8", op));
  }
  o.require(anti <= 1e-12, fmt("antisymmetry %.1e <= 1e-12", anti));
}

void solver_mms(Outcome& o) {
  const std::vector<MmsRow> rows = run_mms({16, 32, 64});
  const auto oh = observed_orders(rows, &MmsRow::h1_u);
  const auto ou = observed_orders(rows, &MmsRow::l2_u);
  const auto op = observed_orders(rows, &MmsRow::l2_p);
  for (std::size_t k = 0; k < oh.size(); ++k) {
    o.require(std::fabs(oh[k] - 2.0) <= 0.2, fmt("H1 order %.3f in 2+-0.2", oh[k]));
    o.require(std::fabs(ou[k] - 3.0) <= 0.3, fmt("L2 order %.3f in 3+-0.3", ou[k]));
    o.require(std::fabs(op[k] - 2.0) <= 0.3, fmt("p order %.3f in 2+-0.3", op[k]));
  }
}

void steklov_suite(Outcome& o) {
  double cst = 0.0, lin = 0.0;
  for (double eps : {0.25, 0.125, 0.0625}) {
    const DomainMesh dm = padded_mesh(32, eps);
    const GridFunction c = interpolate(dm.padded(), Space::kQ2, 1, [](const Point&) { return -1.75; });
    cst = std::max(cst, max_deviation(steklov(c, eps, dm.mesh(), false), [](const Point&) { return -1.75; }));
    const GridFunction x1 = interpolate(dm.padded(), Space::kQ2, 1, [](const Point& x) { return x[0]; });
    lin = std::max(lin,
                   max_deviation(steklov(x1, eps, dm.mesh(), false), [eps](const Point& x) { return x[0] - eps / 2.0; }));
  }
  o.require(cst <= 1e-12, fmt("S(const) %.1e <= 1e-12", cst));
  o.require(lin <= 1e-10, fmt("S(x1) - (x1 - eps/2) %.1e <= 1e-10", lin));

  // ‖S_ε u − u‖_Ω ≤ ε ‖∇u‖_{Ω+εY} and ‖f^ε S_ε u‖_Ω ≤ ‖f‖_Y ‖u‖_{Ω+εY}.
  SeededRng rng(2025);
  const CellGrid g(16);
  double worst5 = 0.0, worst6 = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double eps = std::ldexp(1.0, -2 - k % 2);
    const DomainMesh dm = padded_mesh(static_cast<int>(8.0 / eps), eps);
    const testing::RandomSmooth ux(rng);
    const testing::RandomPeriodic fy(rng);
    const GridFunction up = interpolate(dm.padded(), Space::kQ2, 1, ux);
    const QuadratureField u = sample_at_quadrature(interpolate(dm.mesh(), Space::kQ2, 1, ux));
    const QuadratureField su = steklov(up, eps, dm.mesh(), false);
    worst5 = std::max(worst5, l2_distance(su, u) / (eps * h1_seminorm(up)));
    const GridFunction f = interpolate(g.mesh(), Space::kQ2, 1, fy);
    worst6 = std::max(worst6, product_norm(sample_periodic(f, eps, dm.mesh()), su) / (l2_norm(f) * l2_norm(up)));
  }
  o.require(worst5 <= 1.0, fmt("smoothing bound worst %.3f <= 1", worst5));
  o.require(worst6 <= 1.0, fmt("periodic weight bound worst %.3f <= 1", worst6));

  const GridFunction fcell = interpolate(g.mesh(), Space::kQ2, 1, [](const Point& y) {
    return 1.0 + 0.5 * std::cos(2 * testing::kPi * y[0]) * std::sin(2 * testing::kPi * y[1]);
  });
  std::vector<double> scaled;
  for (double eps : {0.25, 0.125, 0.0625, 0.03125}) {
    const DomainMesh dm = padded_mesh(64, eps);
    const GridFunction u = interpolate(dm.padded(), Space::kQ2, 1,
                                       [](const Point& x) { return std::cos(testing::kPi * x[0]) + x[1]; });
    scaled.push_back(boundary_layer_norm(fcell, u, eps, dm.mesh()) / std::sqrt(eps));
  }
  double lo = INFINITY, hi = 0.0;
  for (std::size_t k = 1; k < scaled.size(); ++k) {
    lo = std::min(lo, scaled[k] / scaled[k - 1]);
    hi = std::max(hi, scaled[k] / scaled[k - 1]);
  }
  o.require(lo >= 0.5 && hi <= 1.5, fmt("boundary layer halving ratios [%.3f, ", lo) + fmt("%.3f] in [0.5, 1.5]", hi));
}

void adjoint_symmetry(Outcome& o) {
  const CellGrid g(64);
  const struct {
    const char* name;
    std::vector<double> params;
  } fams[] = {{"trig", {0.5, 0.4}}, {"checkerboard", {1.0, 9.0}}};
  for (const auto& f : fams) {
    const CoefficientField a = builtin_family(f.name, f.params);
    const CoefficientField as = adjoint(a);
    const Tensor4 ah = effective_tensor(a, solve_cell(a, g), g).a_hat;
    const Tensor4 ahs = effective_tensor(as, solve_cell(as, g), g).a_hat;
    const double d = ahs.max_abs_diff(ah.swapped());
    o.require(d <= 1e-8, std::string(f.name) + fmt(" %.2e <= 1e-8", d));
  }
}

const json& slope(const json& report, const char* column) { return report.at("slopes").at(column); }

}  // namespace

int main() {
  std::printf("acceptance (pinned tolerances)\n");
  criterion(1, "cell oracles", 60.0, cell_oracles);
  criterion(2, "dual corrector identities", 120.0, dual_identities);
  criterion(3, "solver MMS orders", 120.0, solver_mms);

  const fs::path base = fs::path(STOKESHOM_ACCEPT_DIR);
  const RatesRun first = run_rates(base / "rates_a");
  const bool have_report = first.report.is_object() && first.report.contains("slopes");
  criterion(4, "L2 rate of u_eps - u_0", 0.0, [&](Outcome& o) {
    o.require(have_report, "report written (exit " + std::to_string(first.exit_code) + ")");
    const json& s = slope(first.report, "l2_u_err");
    o.require(s.at("slope").get<double>() >= 0.9, fmt("slope %.4f >= 0.9", s.at("slope").get<double>()));
    o.require(s.at("r2").get<double>() >= 0.98, fmt("r2 %.5f >= 0.98", s.at("r2").get<double>()));
    o.require(first.seconds <= 600.0, fmt("study runtime %.1f s <= 600 s", first.seconds));
  });
  criterion(5, "H1 and pressure rates", 0.0, [&](Outcome& o) {
    const double h = slope(first.report, "h1_v_err").at("slope").get<double>();
    const double p = slope(first.report, "l2_p_err").at("slope").get<double>();
    o.require(h >= 0.45, fmt("h1_v slope %.4f >= 0.45", h));
    o.require(p >= 0.45, fmt("l2_p slope %.4f >= 0.45", p));
  });
  criterion(6, "div identity", 0.0, [&](Outcome& o) {
    double worst = 0.0;
    for (const json& r : first.report.at("rows")) worst = std::max(worst, r.at("div_identity_rel").get<double>());
    o.require(!first.report.at("rows").empty(), "rows present");
    o.require(worst <= 1e-6, fmt("max relative defect %.2e <= 1e-6", worst));
  });
  criterion(7, "Steklov suite", 60.0, steklov_suite);
  criterion(8, "adjoint symmetry n=64", 0.0, adjoint_symmetry);
  criterion(9, "duality pairing eps=1/8", 0.0, [&](Outcome& o) {
    bool found = false;
    for (const json& r : first.report.at("duality"))
      if (std::fabs(r.at("eps").get<double>() - 0.125) < 1e-12) {
        found = true;
        const double d = r.at("rel_diff").get<double>();
        o.require(d <= 1e-8, fmt("rel diff %.2e <= 1e-8", d));
      }
    o.require(found, "eps = 1/8 evaluated");
  });
  criterion(10, "deterministic report.csv", 0.0, [&](Outcome& o) {
    const RatesRun second = run_rates(base / "rates_b");
    o.require(!first.csv.empty() && first.csv == second.csv,
              std::string(first.csv == second.csv ? "byte-identical" : "differs") + fmt(" (%.0f bytes)", first.csv.size()));
  });
  std::printf("%s: %d of 10 criteria failed\n", failures == 0 ? "ALL PASS" : "FAILED", failures);
  return failures == 0 ? 0 : 1;
}
