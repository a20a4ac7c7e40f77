#include <doctest.h>

#include <cmath>

#include "flock/experiments.hpp"
#include "flock/kinetic.hpp"
#include "flock/observables.hpp"

using namespace flock;

namespace {

double bump(double x, double v) {
  const double r2 = (x * x + v * v) / 0.25;
  return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
}

KineticState normalized(KineticState s) {
  s.f /= moments(s).m0;
  return s;
}

KineticState smooth_datum(int n = 48) { return normalized(sample_density(PhaseGrid::make(-1.5, 1.5, -1.5, 1.5, n, n), bump)); }

KineticState zero_state(const PhaseGrid& g) {
  KineticState s;
  s.grid = g;
  s.f = Eigen::MatrixXd::Zero(g.nx + 1, g.nv + 1);
  return s;
}

}  // namespace

TEST_SUITE("kinetic") {

TEST_CASE("phase grid validation") {
  CHECK_NOTHROW(PhaseGrid::make(-1, 1, -1, 1, 8, 8));
  CHECK_THROWS_AS(PhaseGrid::make(-1, 1, -1, 1, 7, 8), ConfigError);
  CHECK_THROWS_AS(PhaseGrid::make(1, -1, -1, 1, 8, 8), ConfigError);
  CHECK_THROWS_AS(PhaseGrid::make(-INFINITY, 1, -1, 1, 8, 8), ConfigError);
  const auto g = PhaseGrid::make(-1, 1, -2, 2, 10, 20);
  CHECK(g.hx() == doctest::Approx(0.2));
  CHECK(g.v(20) == doctest::Approx(2.0));
  CHECK(g.contains(0.0, -2.0));
  CHECK(!g.contains(1.01, 0.0));
}

TEST_CASE("bilinear evaluation") {
  const auto g = PhaseGrid::make(-1, 1, -1, 1, 8, 8);
  const auto s = sample_density(g, [](double x, double v) { return 2.0 + x - 3.0 * v + x * v; });
  CHECK(s.at(0.13, -0.41) == doctest::Approx(2.0 + 0.13 + 1.23 - 0.13 * 0.41));
  CHECK(s.at(1.5, 0.0) == 0.0);
}

TEST_CASE("mollified indicator keeps unit mass and sup norm") {
  const auto g = PhaseGrid::make(-1, 1, -1, 1, 64, 64);
  const auto raw = normalized(sample_density(g, [](double x, double v) { return (std::abs(x) <= 0.4 && std::abs(v) <= 0.3) ? 1.0 : 0.0; }));
  const auto m = mollify_initial(raw, 0.1);
  CHECK(moments(m).m0 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m.sup_norm() <= raw.sup_norm() * (1 + 1e-6));
  CHECK(m.f.minCoeff() >= 0.0);
  CHECK(std::abs(moments(m).m1[0]) < 1e-10);
}

TEST_CASE("mollification with eps below the spacing is the identity") {
  const auto raw = smooth_datum(32);
  const auto m = mollify_initial(raw, 0.5 * raw.grid.hx());
  CHECK((m.f - raw.f).cwiseAbs().maxCoeff() < 1e-6 * raw.sup_norm());
}

TEST_CASE("mollification refuses to reach the grid edge") {
  const auto g = PhaseGrid::make(-1, 1, -1, 1, 16, 16);
  const auto raw = sample_density(g, [](double x, double) { return std::abs(x) <= 0.9 ? 1.0 : 0.0; });
  CHECK_THROWS_AS(mollify_initial(raw, 0.3), ConfigError);
  CHECK_THROWS_AS(mollify_initial(raw, 0.0), ConfigError);
}

TEST_CASE("field examples") {
  const auto s = smooth_datum();
  const auto rational = CommWeight::rational(0.2, 1.0), one = CommWeight::constant(1.0);
  CHECK(std::abs(field_Fa(s, rational, 0.3, 0.0)) < 1e-12);
  CHECK(field_Fa(s, one, 0.0, 1.4) == doctest::Approx(-1.4).epsilon(1e-10));
  CHECK(div_v_Fa(s, one, 0.7) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(div_v_Fa(zero_state(s.grid), rational, 0.1) == 0.0);
  CHECK_THROWS_AS(field_Fa(s, one, 2.0, 0.0), DomainError);
  CHECK_THROWS_AS(div_v_Fa(s, one, -1.6), DomainError);
}

TEST_CASE("field of a concentrated density") {
  const double x0 = 0.2, v0 = 0.5, w = 0.05;
  const auto g = PhaseGrid::make(-1, 1, -1, 1, 200, 200);
  auto s = normalized(sample_density(g, [&](double x, double v) {
    const double r2 = ((x - x0) * (x - x0) + (v - v0) * (v - v0)) / (w * w);
    return r2 < 1.0 ? 1.0 - r2 : 0.0;
  }));
  for (double v : {-0.5, 0.0, 0.9}) CHECK(std::abs(field_Fa(s, CommWeight::constant(1.0), 0.0, v) - (v0 - v)) <= 10 * w * w);
}

TEST_CASE("characteristics in a zero field") {
  const FrozenField zero(zero_state(PhaseGrid::make(-1, 1, -1, 1, 8, 8)), CommWeight::constant(1.0));
  auto s = characteristics_step(0.3, -0.7, zero, 0.0, 0.2, 0.05);
  CHECK(s.x == doctest::Approx(0.3 - 0.7 * 0.05));
  CHECK(s.v == -0.7);
  CHECK(!s.clamped);
  const double sigma = 0.5, dW = 0.1, v = 0.8;
  s = characteristics_step(0.0, v, zero, sigma, dW, 0.01);
  CHECK(std::abs(s.v - v * std::exp(-sigma * dW)) <= v * std::pow(sigma * dW, 3));
  s = characteristics_step(0.0, 10.0, zero, 0.0, 0.0, 1.0, 5.0);
  CHECK(s.clamped);
  CHECK(s.x == 5.0);
}

TEST_CASE("backward steps undo forward steps to second order") {
  const auto st = smooth_datum();
  const FrozenField f(st, CommWeight::rational(0.3, 1.0));
  const auto fwd = characteristics_step(0.2, 0.4, f, 0.3, 0.05, 0.01);
  const auto back = characteristics_step(fwd.x, fwd.v, f, 0.3, -0.05, -0.01);
  CHECK(std::abs(back.x - 0.2) < 1e-5);
  CHECK(std::abs(back.v - 0.4) < 1e-4);
}

TEST_CASE("free transport without weight and noise") {
  const auto f_in = smooth_datum(64);
  const auto path = wiener_sample(3, 0.4, 0.05);
  const KineticTrajectory prev(path.steps() + 1, f_in);
  const auto it = successive_step(prev, f_in, CommWeight::constant(0.0), 0.0, path);
  REQUIRE(it.states.size() == prev.size());
  const auto& g = f_in.grid;
  const double t = path.horizon();
  double err = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) err = std::max(err, std::abs(it.states.back().f(i, j) - bump(g.x(i) - g.v(j) * t, g.v(j)) / moments(sample_density(g, bump)).m0));
  CHECK(err / f_in.sup_norm() < 0.02);
  CHECK_THROWS_AS(successive_step(KineticTrajectory(2, f_in), f_in, CommWeight::constant(0.0), 0.0, path), ShapeError);
}

TEST_CASE("pure noise transport conserves mass") {
  const auto f_in = smooth_datum(64);
  const auto path = wiener_sample(8, 0.5, 0.05);
  const KineticTrajectory prev(path.steps() + 1, f_in);
  const auto it = successive_step(prev, f_in, CommWeight::constant(0.0), 0.5, path);
  for (const auto& s : it.states) CHECK(moments(s).m0 == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("zero weight reaches its fixed point at once") {
  const auto f_in = smooth_datum(32);
  const auto path = wiener_sample(4, 0.3, 0.05);
  const auto r = solve_fixed_point(f_in, CommWeight::constant(0.0), 0.3, path, 1e-9, 5);
  CHECK(r.diagnostics.converged);
  CHECK(r.diagnostics.iterations == 2);
  CHECK(r.diagnostics.converged_at == 2);
  CHECK(r.diagnostics.f_gap[1] == 0.0);
  CHECK(r.states.back().f == r.first.back().f);
  for (double d : r.diagnostics.delta) CHECK(d >= 0.0);
}

TEST_CASE("fixed point arguments") {
  const auto f_in = smooth_datum(16);
  const auto path = wiener_sample(4, 0.1, 0.05);
  CHECK_THROWS_AS(solve_fixed_point(f_in, CommWeight::constant(1.0), 0.3, path, 0.0, 5), ConfigError);
  CHECK_THROWS_AS(solve_fixed_point(f_in, CommWeight::constant(1.0), 0.3, path, 1e-6, 0), ConfigError);
  CHECK_THROWS_AS(solve_fixed_point(f_in, CommWeight::constant(1.0), 0.3, path, 1e-6, 2, 1, 3), ConfigError);
  const auto r = solve_fixed_point(f_in, CommWeight::constant(1.0), 0.3, path, 1e-30, 2);
  CHECK(!r.diagnostics.converged);
  CHECK(r.diagnostics.iterations == 2);
}

TEST_CASE("fixed point is thread invariant") {
  const auto f_in = smooth_datum(24);
  const auto path = wiener_sample(4, 0.2, 0.05);
  const auto a = solve_fixed_point(f_in, CommWeight::rational(0.3, 1.0), 0.3, path, 1e-8, 4, 1);
  const auto b = solve_fixed_point(f_in, CommWeight::rational(0.3, 1.0), 0.3, path, 1e-8, 4, 3);
  CHECK(a.states.back().f == b.states.back().f);
  CHECK(a.diagnostics.delta == b.diagnostics.delta);
}

TEST_CASE("semi-lagrangian free transport") {
  const auto f_in = smooth_datum(64);
  const auto path = wiener_sample(5, 0.4, 0.05);
  const auto traj = semi_lagrangian_solve(f_in, CommWeight::constant(0.0), 0.0, path, 0.1);
  REQUIRE(traj.size() == 5);
  CHECK(traj.back().t == doctest::Approx(0.4));
  const auto& g = f_in.grid;
  const double m0 = moments(sample_density(g, bump)).m0;
  double err = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) err = std::max(err, std::abs(traj.back().f(i, j) - bump(g.x(i) - g.v(j) * 0.4, g.v(j)) / m0));
  CHECK(err / f_in.sup_norm() < 0.05);
  CHECK_THROWS_AS(semi_lagrangian_solve(f_in, CommWeight::constant(0.0), 0.0, path, 0.07), ConfigError);
  CHECK_THROWS_AS(semi_lagrangian_solve(f_in, CommWeight::constant(0.0), 0.0, path, 0.15), ConfigError);
}

TEST_CASE("semi-lagrangian step keeps mass and momentum with a weight") {
  const auto f_in = smooth_datum(64);
  const auto path = wiener_sample(6, 0.5, 0.05);
  const auto traj = semi_lagrangian_solve(f_in, CommWeight::constant(1.0), 0.3, path, 0.1);
  const auto m = moments(traj.back());
  CHECK(m.m0 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(m.m1[0]) < 0.01);
  CHECK(m.m2 < moments(f_in).m2);
}

TEST_CASE("support envelope and grid check") {
  const auto path = wiener_sample(7, 0.5, 0.01);
  const auto env = support_envelope(0.5, 0.05, 1.0, 0.3, path);
  REQUIRE(env.t.size() == 51);
  CHECK(env.x.front() == doctest::Approx(0.5 * std::sqrt(2.0)));
  CHECK(env.v.front() == doctest::Approx(0.5));
  for (std::size_t k = 1; k < env.x.size(); ++k) CHECK(env.x[k] >= env.x[k - 1]);
  CHECK_NOTHROW(validate_grid(PhaseGrid::make(-5, 5, -5, 5, 8, 8), env));
  CHECK_THROWS_AS(validate_grid(PhaseGrid::make(-0.5, 0.5, -5, 5, 8, 8), env), ConfigError);
}

TEST_CASE("support radius") {
  const auto g = PhaseGrid::make(-1, 1, -1, 1, 20, 20);
  const auto s = sample_density(g, [](double x, double v) { return (std::abs(x) <= 0.3 && std::abs(v) <= 0.4) ? 1.0 : 0.0; });
  CHECK(support_radius(s, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("particle samples follow the density") {
  const auto s = kinetic_initial(PhaseGrid::make(-1.6, 1.6, -1.8, 1.8, 64, 64));
  const auto e = sample_particles(s, 20000, 42);
  CHECK(e.dim() == 1);
  CHECK(e.size() == 20000);
  CHECK(std::abs(e.mean_velocity()[0]) < 1e-14);
  CHECK(moments(e).m2 == doctest::Approx(moments(s).m2).epsilon(0.05));
  CHECK(e.x.cwiseAbs().maxCoeff() < 0.7);
  CHECK(sample_particles(s, 10, 42).x == sample_particles(s, 10, 42).x);
  CHECK_THROWS_AS(sample_particles(s, 0, 1), ConfigError);
  CHECK_THROWS_AS(sample_particles(zero_state(s.grid), 5, 1), DomainError);
}

TEST_CASE("experiment initial datum") {
  const auto s = kinetic_initial(PhaseGrid::make(-1.6, 1.6, -1.8, 1.8, 64, 64));
  CHECK(moments(s).m0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(moments(s).m1[0]) < 1e-12);
  CHECK(s.f.minCoeff() >= 0.0);
}

}
