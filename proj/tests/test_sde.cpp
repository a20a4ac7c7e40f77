#include <doctest.h>

#include <cmath>

#include "flock/sde.hpp"
#include "flock/wiener.hpp"

using namespace flock;

namespace {

double max_err(const Trajectory<double>& a, const Trajectory<double>& b) {
  double e = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) e = std::max(e, std::abs(a.states[k] - b.states[k]));
  return e;
}

AffineGbmSpec forced_spec(const WienerPath& p, double c, double shift = 0.0) {
  AffineGbmSpec s;
  s.x0 = 1.0;
  s.c = c;
  s.a.resize(p.steps() + 1);
  s.b = Eigen::VectorXd::Constant(p.steps() + 1, -1.0);
  for (Eigen::Index k = 0; k <= p.steps(); ++k) s.a[k] = 1.0 + std::sin(4.0 * M_PI * p.time(k)) + shift;
  return s;
}

}  // namespace

TEST_SUITE("sde") {

TEST_CASE("closed form without dynamics is constant") {
  const auto p = wiener_sample(1, 1.0, 0.01);
  const auto x = gbm_affine_closed_form(AffineGbmSpec::constant(5.0, 0.0, 0.0, 0.0, p.steps() + 1), p);
  REQUIRE(x.size() == static_cast<std::size_t>(p.steps() + 1));
  for (double v : x.states) CHECK(v == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("closed form with unit forcing is x0 + t") {
  const auto p = wiener_sample(2, 1.0, 0.01);
  const auto x = gbm_affine_closed_form(AffineGbmSpec::constant(0.5, 1.0, 0.0, 0.0, p.steps() + 1), p);
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(x.states[k] - 0.5 - x.time(k)) <= p.dt * p.dt);
}

TEST_CASE("closed form of geometric motion") {
  const auto p = wiener_sample(3, 1.0, 0.01);
  const double b = 0.3, c = 0.4;
  const auto x = gbm_affine_closed_form(AffineGbmSpec::constant(2.0, 0.0, b, c, p.steps() + 1), p);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double t = x.time(k);
    CHECK(x.states[k] == doctest::Approx(2.0 * std::exp((b - 0.5 * c * c) * t + c * p.values[k])).epsilon(1e-12));
  }
}

TEST_CASE("closed form rejects a spec on another grid") {
  const auto p = wiener_sample(3, 1.0, 0.01);
  CHECK_THROWS_AS(gbm_affine_closed_form(AffineGbmSpec::constant(1.0, 0.0, 0.0, 0.0, 50), p), ShapeError);
}

TEST_CASE("euler-maruyama error halves with dt against the oracle") {
  const auto base = wiener_sample(77, 1.0, 1.0 / 256);
  const double c = 0.1;
  double errs[3];
  for (int level = 0; level < 3; ++level) {
    const auto p = level == 0 ? base : wiener_refine(base, 1 << level);
    const auto spec = forced_spec(p, c);
    const auto oracle = gbm_affine_closed_form(spec, p);
    Eigen::Index idx = 0;
    const auto em = integrate_ito([&](double t, double x) { return spec.a[idx = p.index_of(t)] + spec.b[idx] * x; },
                                  [&](double, double x) { return c * x; }, spec.x0, p);
    errs[level] = max_err(em, oracle);
  }
  CHECK(errs[0] / errs[1] == doctest::Approx(2.0).epsilon(0.3));
  CHECK(errs[1] / errs[2] == doctest::Approx(2.0).epsilon(0.3));
}

TEST_CASE("integrators on trivial problems") {
  const auto p = wiener_sample(4, 1.0, 0.01);
  auto zero = [](double, double) { return 0.0; };
  const auto a = integrate_ito(zero, zero, 3.0, p);
  for (double v : a.states) CHECK(v == 3.0);
  const auto decay = integrate_ito([](double, double x) { return -x; }, zero, 1.0, p);
  CHECK(std::abs(decay.back() - std::exp(-1.0)) <= 5 * p.dt);
  const auto heun = integrate_stratonovich([](double, double x) { return -x; }, zero, 1.0, p);
  double x = 1.0;
  for (int k = 0; k < 100; ++k) {
    const double pred = x - x * p.dt;
    x = x + 0.5 * (-x - pred) * p.dt;
  }
  CHECK(heun.back() == doctest::Approx(x).epsilon(1e-14));
}

TEST_CASE("heun converges to exp(-W) for dX = -X o dW") {
  double errs[3] = {0, 0, 0};
  const int paths = 50;
  for (int r = 0; r < paths; ++r) {
    const auto base = wiener_sample(derive_seed(5, r), 1.0, 1.0 / 256);
    for (int level = 0; level < 3; ++level) {
      const auto p = level == 0 ? base : wiener_refine(base, 1 << level);
      const auto h =
          integrate_stratonovich([](double, double) { return 0.0; }, [](double, double x) { return -x; }, 1.0, p);
      double e = 0.0;
      for (Eigen::Index k = 0; k <= p.steps(); ++k) e = std::max(e, std::abs(h.states[k] - std::exp(-p.values[k])));
      errs[level] += e / paths;
    }
  }
  CHECK(errs[0] / errs[1] == doctest::Approx(2.0).epsilon(0.3));
  CHECK(errs[1] / errs[2] == doctest::Approx(2.0).epsilon(0.3));
  CHECK(errs[2] < 5e-3);
}

TEST_CASE("vector states") {
  const auto p = wiener_sample(6, 1.0, 0.01);
  const Eigen::Vector2d x0(1.0, -2.0);
  const auto tr = integrate_ito([](double, const Eigen::Vector2d& x) { return Eigen::Vector2d(-x); },
                                [](double, const Eigen::Vector2d&) { return Eigen::Vector2d::Zero(); }, x0, p);
  CHECK(tr.back()[0] == doctest::Approx(std::pow(0.99, 100)));
  CHECK(tr.back()[1] == doctest::Approx(-2 * std::pow(0.99, 100)));
}

TEST_CASE("blowup reports the first bad step") {
  const auto p = wiener_sample(7, 1.0, 0.1);
  try {
    integrate_ito([](double t, double x) { return t > 0.45 ? INFINITY : x; }, [](double, double) { return 0.0; }, 1.0, p);
    FAIL("expected blowup");
  } catch (const NumericalBlowup& e) {
    CHECK(e.step() == 6);
  }
  CHECK_THROWS_AS(integrate_stratonovich([](double, double x) { return x * x * 1e200; }, [](double, double) { return 0.0; },
                                         1e200, p),
                  NumericalBlowup);
}

TEST_CASE("ito drift correction examples") {
  CHECK(ito_drift_correction(0.0)(0.3, 2.0) == 0.0);
  CHECK(ito_drift_correction(1.0)(0.0, 2.0) == doctest::Approx(1.0));
  const Eigen::Vector3d vbar = Eigen::Vector3d::Zero(), v(2.0, 2.0, -2.0);
  const Eigen::Vector3d adj = ito_drift_correction(1.0)(vbar, v);
  CHECK(adj[0] == doctest::Approx(1.0));
  CHECK(adj[2] == doctest::Approx(-1.0));
  CHECK_THROWS_AS(ito_drift_correction(-1.0), DomainError);
}

TEST_CASE("comparison principle on sampled paths") {
  int holds = 0, violated = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = wiener_sample(derive_seed(99, seed), 1.0, 1.0 / 128);
    const auto y = gbm_affine_closed_form(forced_spec(p, 0.3), p);
    const auto x = gbm_affine_closed_form(forced_spec(p, 0.3, -0.5), p);
    const auto z = gbm_affine_closed_form(forced_spec(p, 0.3, 0.5), p);
    holds += comparison_check(x, y).holds;
    const auto r = comparison_check(z, y);
    if (!r.holds && r.first_violation && *r.first_violation > 0) ++violated;
    CHECK(r.max_excess > 0.0);
  }
  CHECK(holds == 100);
  CHECK(violated == 100);
}

TEST_CASE("comparison of a trajectory with itself") {
  const auto p = wiener_sample(8, 1.0, 0.01);
  const auto y = gbm_affine_closed_form(forced_spec(p, 0.2), p);
  const auto r = comparison_check(y, y);
  CHECK(r.holds);
  CHECK(!r.first_violation);
  CHECK(r.max_excess == 0.0);
}

TEST_CASE("comparison rejects mismatched grids") {
  const auto p = wiener_sample(8, 1.0, 0.01), q = wiener_sample(8, 1.0, 0.02);
  const auto a = gbm_affine_closed_form(forced_spec(p, 0.2), p);
  const auto b = gbm_affine_closed_form(forced_spec(q, 0.2), q);
  CHECK_THROWS_AS(comparison_check(a, b), ShapeError);
}

}
