#include "stokeshom/coeff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stokeshom/errors.hpp"
#include "stokeshom/random.hpp"

namespace stokeshom {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEllipticityTol = 1e-12;

double mu_from_range(double lo, double hi) { return std::min(lo, 1.0 / hi); }

void require_positive(std::span<const double> values, const std::string& family) {
  for (double v : values)
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidInput(family + ": parameters must be finite and positive (mu > 0)");
}

// Antisymmetric (in (i,α) <-> (j,β)) unit pattern used by the trig family.
Tensor4 skew_pattern() {
  Tensor4 e;
  e(0, 1, 0, 1) = 1.0;
  e(1, 0, 1, 0) = -1.0;
  e(0, 1, 1, 0) = 1.0;
  e(1, 0, 0, 1) = -1.0;
  return e;
}

CoefficientField make_constant(std::span<const double> params) {
  if (params.size() != Tensor4::kSize && params.size() != Tensor4::kSize + 1)
    throw InvalidInput("constant: expected 16 tensor entries (optionally followed by mu)");
  Tensor4 a0;
  std::copy_n(params.begin(), Tensor4::kSize, a0.data().begin());
  const auto [lo, hi] = quotient_range(a0);
  if (!(lo > 0.0)) throw InvalidInput("constant: tensor is not elliptic (mu > 0 violated)");
  double mu = mu_from_range(lo, hi);
  if (params.size() == Tensor4::kSize + 1) {
    mu = params.back();
    if (!(mu > 0.0)) throw InvalidInput("constant: mu must be positive");
    if (lo < mu - kEllipticityTol || hi > 1.0 / mu + kEllipticityTol)
      throw InvalidInput("constant: tensor violates the ellipticity bounds for the given mu");
  }
  return CoefficientField(
      "constant", [a0](const Point&) { return a0; }, mu, Smoothness::kConstant,
      [](const Point&) { return Tensor4Gradient{}; });
}

CoefficientField make_classical(std::span<const double> params) {
  if (params.size() != 1) throw InvalidInput("classical: expected {mu}");
  require_positive(params, "classical");
  const double lambda = params[0];
  const Tensor4 a0 = Tensor4::isotropic(lambda);
  return CoefficientField(
      "classical", [a0](const Point&) { return a0; }, mu_from_range(lambda, lambda),
      Smoothness::kConstant, [](const Point&) { return Tensor4Gradient{}; });
}

CoefficientField make_laminate(std::span<const double> params) {
  if (params.empty()) throw InvalidInput("laminate: expected at least one layer value");
  require_positive(params, "laminate");
  std::vector<double> layers(params.begin(), params.end());
  const auto [lo, hi] = std::minmax_element(layers.begin(), layers.end());
  const double mu = mu_from_range(*lo, *hi);
  const auto n_layers = static_cast<int>(layers.size());
  return CoefficientField(
      "laminate",
      [layers, n_layers](const Point& y) {
        const int k = std::min(n_layers - 1, static_cast<int>(std::floor(y[0] * n_layers)));
        return Tensor4::isotropic(layers[static_cast<std::size_t>(k)]);
      },
      mu, layers.size() == 1 ? Smoothness::kConstant : Smoothness::kPiecewiseConstant);
}

CoefficientField make_trig(std::span<const double> params) {
  if (params.size() != 2 && params.size() != 3)
    throw InvalidInput("trig: expected {mu, amplitude[, skew]}");
  const double mu = params[0];
  const double amp = params[1];
  const double skew = params.size() == 3 ? params[2] : kTrigDefaultSkew;
  if (!(mu > 0.0) || mu > 1.0) throw InvalidInput("trig: mu must lie in (0, 1]");
  if (!(amp >= 0.0) || amp >= 1.0) throw InvalidInput("trig: amplitude must lie in [0, 1)");
  if (1.0 - amp < mu || 1.0 + amp > 1.0 / mu)
    throw InvalidInput("trig: amplitude incompatible with mu (need mu <= 1 - amp and 1 + amp <= 1/mu)");
  if (!std::isfinite(skew)) throw InvalidInput("trig: skew must be finite");

  // a(y) = c(y) δ_ij δ_αβ + t(y) E with E antisymmetric under (i,α) <-> (j,β),
  // so the quadratic form only sees c(y) ∈ [1 - amp, 1 + amp].
  const Tensor4 e = skew_pattern();
  auto eval = [amp, skew, e](const Point& y) {
    const double c = 1.0 + 0.5 * amp * (std::sin(kTwoPi * y[0]) + std::sin(kTwoPi * (y[0] + y[1])));
    const double t = skew * std::cos(kTwoPi * y[1]);
    Tensor4 a = Tensor4::isotropic(c);
    for (std::size_t k = 0; k < Tensor4::kSize; ++k) a.data()[k] += t * e.data()[k];
    return a;
  };
  auto grad = [amp, skew, e](const Point& y) {
    const double dc0 =
        0.5 * amp * kTwoPi * (std::cos(kTwoPi * y[0]) + std::cos(kTwoPi * (y[0] + y[1])));
    const double dc1 = 0.5 * amp * kTwoPi * std::cos(kTwoPi * (y[0] + y[1]));
    const double dt1 = -skew * kTwoPi * std::sin(kTwoPi * y[1]);
    Tensor4Gradient g;
    g[0] = Tensor4::isotropic(dc0);
    g[1] = Tensor4::isotropic(dc1);
    for (std::size_t k = 0; k < Tensor4::kSize; ++k) g[1].data()[k] += dt1 * e.data()[k];
    return g;
  };
  return CoefficientField("trig", eval, mu, Smoothness::kSmooth, grad);
}

CoefficientField make_checkerboard(std::span<const double> params) {
  if (params.size() != 2) throw InvalidInput("checkerboard: expected {v1, v2}");
  require_positive(params, "checkerboard");
  const double v1 = params[0];
  const double v2 = params[1];
  return CoefficientField(
      "checkerboard",
      [v1, v2](const Point& y) {
        const int cell = static_cast<int>(std::floor(2.0 * y[0])) + static_cast<int>(std::floor(2.0 * y[1]));
        return Tensor4::isotropic(cell % 2 == 0 ? v1 : v2);
      },
      mu_from_range(std::min(v1, v2), std::max(v1, v2)), Smoothness::kPiecewiseConstant);
}

}  // namespace

const char* to_string(Smoothness s) {
  switch (s) {
    case Smoothness::kConstant: return "constant";
    case Smoothness::kSmooth: return "smooth";
    case Smoothness::kPiecewiseConstant: return "piecewise-constant";
  }
  return "unknown";
}

CoefficientField::CoefficientField(std::string name, EvalFn eval, double mu, Smoothness tag,
                                   std::optional<GradFn> gradient)
    : name_(std::move(name)), eval_(std::move(eval)), mu_(mu), tag_(tag), gradient_(std::move(gradient)) {
  if (!(mu_ > 0.0)) throw InvalidInput("coefficient field: mu must be positive");
}

Tensor4Gradient CoefficientField::gradient(const Point& y) const {
  if (!gradient_) throw InvalidInput("coefficient family '" + name_ + "' has no analytic gradient");
  return (*gradient_)(reduce(y));
}

Point CoefficientField::reduce(const Point& y) {
  Point r;
  for (int k = 0; k < kDim; ++k) {
    double v = y[k] - std::floor(y[k]);
    // floor can round y - floor(y) up to exactly 1 for tiny negative y.
    if (v >= 1.0) v = 0.0;
    r[k] = v;
  }
  return r;
}

CoefficientField builtin_family(const std::string& name, std::span<const double> params) {
  if (name == "constant") return make_constant(params);
  if (name == "classical") return make_classical(params);
  if (name == "laminate") return make_laminate(params);
  if (name == "trig") return make_trig(params);
  if (name == "checkerboard") return make_checkerboard(params);
  throw InvalidInput("unknown coefficient family '" + name + "'");
}

std::pair<double, double> quotient_range(const Tensor4& a) {
  constexpr int n = kDim * kDim;
  Eigen::Matrix<double, n, n> m;
  for (int i = 0; i < kDim; ++i)
    for (int j = 0; j < kDim; ++j)
      for (int al = 0; al < kDim; ++al)
        for (int be = 0; be < kDim; ++be) m(mat_index(i, al), mat_index(j, be)) = a(i, j, al, be);
  const Eigen::Matrix<double, n, n> sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, n, n>> es(sym, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

namespace {

Mat random_unit_matrix(SeededRng& rng) {
  Mat xi;
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& v : xi) {
      v = rng.normal();
      norm2 += v * v;
    }
  } while (norm2 < 1e-24);
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : xi) v *= inv;
  return xi;
}

template <class EvalAt>
EllipticityReport sample_quotients(EvalAt&& eval_at, double mu, std::int64_t samples, std::uint64_t seed) {
  if (samples < 1) throw InvalidInput("check_ellipticity: samples must be >= 1");
  SeededRng rng(seed);
  EllipticityReport r;
  r.min_quotient = INFINITY;
  r.max_quotient = -INFINITY;
  for (std::int64_t s = 0; s < samples; ++s) {
    Point y;
    for (double& c : y) c = rng.uniform();
    const Mat xi = random_unit_matrix(rng);
    const double q = eval_at(y).contract(xi, xi);
    r.min_quotient = std::min(r.min_quotient, q);
    r.max_quotient = std::max(r.max_quotient, q);
  }
  r.passed = r.min_quotient >= mu - kEllipticityTol && r.max_quotient <= 1.0 / mu + kEllipticityTol;
  return r;
}

}  // namespace

EllipticityReport check_ellipticity(const CoefficientField& a, std::int64_t samples, std::uint64_t seed) {
  return sample_quotients([&a](const Point& y) { return a(y); }, a.mu(), samples, seed);
}

EllipticityReport check_ellipticity(const Tensor4& a, double mu, std::int64_t samples, std::uint64_t seed) {
  return sample_quotients([&a](const Point&) { return a; }, mu, samples, seed);
}

CoefficientField adjoint(const CoefficientField& a) {
  std::optional<CoefficientField::GradFn> grad;
  if (a.has_gradient()) {
    grad = [a](const Point& y) {
      Tensor4Gradient g = a.gradient(y);
      for (auto& t : g) t = t.swapped();
      return g;
    };
  }
  return CoefficientField(
      a.name() + "*", [a](const Point& y) { return a(y).swapped(); }, a.mu(), a.smoothness(), grad);
}

}  // namespace stokeshom
