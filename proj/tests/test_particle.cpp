#include <doctest.h>

#include <cmath>
#include <vector>

#include "flock/observables.hpp"
#include "flock/particle.hpp"

using namespace flock;

namespace {

SimConfig small_config(int d, int N, double sigma, NoiseMode mode = NoiseMode::Common) {
  SimConfig c;
  c.d = d;
  c.N = N;
  c.T = 1.0;
  c.dt = 0.01;
  c.sigma = sigma;
  c.weight = CommWeight::rational(0.3, 1.0);
  c.noise_mode = mode;
  c.seed = 31;
  return c;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_SUITE("particle") {

TEST_CASE("uniform initial data") {
  const auto e = uniform_initial(2, 50, 3);
  CHECK(e.dim() == 2);
  CHECK(e.size() == 50);
  CHECK(e.mean_velocity().norm() < 1e-15);
  CHECK(e.x.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(uniform_initial(2, 50, 3).x == e.x);
  CHECK_THROWS_AS(uniform_initial(0, 5, 1), ConfigError);
  CHECK_THROWS_AS(uniform_initial(1, 0, 1), ConfigError);
}

TEST_CASE("force examples") {
  ParticleEnsemble e;
  e.x = Eigen::RowVector2d(0.0, 0.5);
  e.v = Eigen::RowVector2d(1.0, -1.0);
  CHECK(flocking_force(e, CommWeight::constant(1.0), 0)[0] == doctest::Approx(-1.0));
  CHECK(flocking_force(e, CommWeight::constant(1.0), 1)[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(flocking_force(e, CommWeight::constant(1.0), 2), DomainError);

  auto consensus = uniform_initial(3, 20, 4);
  consensus.v.colwise() = Eigen::Vector3d(0.2, -0.1, 0.4);
  const auto F = flocking_forces(consensus.x, consensus.v, CommWeight::rational(0.1, 1.0));
  CHECK(F.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batched forces match the per-particle sum in every dimension") {
  const auto w = CommWeight::rational(0.2, 1.3);
  for (int d : {1, 2, 3, 4}) {
    const auto e = uniform_initial(d, 33, 10 + d);
    const auto F = flocking_forces(e.x, e.v, w);
    for (Eigen::Index i = 0; i < e.size(); ++i) CHECK((F.col(i) - flocking_force(e, w, i)).norm() < 1e-14);
    CHECK(F.rowwise().sum().norm() < 1e-13);
  }
}

TEST_CASE("forces do not depend on the thread count") {
  const auto e = uniform_initial(2, 101, 5);
  const auto w = CommWeight::rational(0.2, 1.0);
  const auto a = flocking_forces(e.x, e.v, w, 1);
  for (int t : {2, 3, 7}) CHECK(flocking_forces(e.x, e.v, w, t) == a);
}

TEST_CASE("noise-free heun step matches deterministic heun") {
  const auto e = uniform_initial(2, 10, 6);
  const auto w = CommWeight::constant(1.0);
  const double h = 0.05;
  const auto next = step_stratonovich(e, w, 0.0, 0.37, h);
  const Eigen::MatrixXd F0 = flocking_forces(e.x, e.v, w);
  const Eigen::MatrixXd xp = e.x + h * e.v, vp = e.v + h * F0;
  const Eigen::MatrixXd F1 = flocking_forces(xp, vp, w);
  CHECK(max_abs_diff(next.x, e.x + 0.5 * h * (e.v + vp)) < 1e-15);
  CHECK(max_abs_diff(next.v, e.v + 0.5 * h * (F0 + F1)) < 1e-15);
}

TEST_CASE("noise-free ito step is forward euler") {
  const auto e = uniform_initial(2, 10, 7);
  const auto w = CommWeight::constant(1.0);
  const auto next = step_ito(e, w, 0.0, 0.5, 0.05);
  CHECK(max_abs_diff(next.x, e.x + 0.05 * e.v) < 1e-15);
  CHECK(max_abs_diff(next.v, e.v + 0.05 * flocking_forces(e.x, e.v, w)) < 1e-15);
}

TEST_CASE("a single particle keeps its velocity") {
  ParticleEnsemble e;
  e.x = Eigen::Vector2d(0.5, 1.0);
  e.v = Eigen::Vector2d(-0.3, 0.2);
  auto s = step_stratonovich(e, CommWeight::constant(1.0), 0.8, 0.3, 0.1);
  CHECK(max_abs_diff(s.v, e.v) == 0.0);
  CHECK(max_abs_diff(s.x, e.x + 0.1 * e.v) < 1e-15);
  s = step_ito(e, CommWeight::constant(1.0), 0.8, -0.3, 0.1);
  CHECK(max_abs_diff(s.v, e.v) == 0.0);
}

TEST_CASE("common noise conserves momentum exactly in both schemes") {
  auto e = uniform_initial(2, 40, 8);
  const auto w = CommWeight::rational(0.2, 1.0);
  const Eigen::VectorXd m0 = e.v.rowwise().sum();
  for (int k = 0; k < 50; ++k) e = step_stratonovich(e, w, 0.5, 0.1 * std::sin(k), 0.01);
  CHECK((e.v.rowwise().sum() - m0).norm() < 1e-12);
  for (int k = 0; k < 50; ++k) e = step_ito(e, w, 0.5, 0.1 * std::cos(k), 0.01);
  CHECK((e.v.rowwise().sum() - m0).norm() < 1e-12);
}

TEST_CASE("increment count must match the noise mode") {
  auto e = uniform_initial(1, 4, 9);
  const std::vector<double> four(4, 0.01), three(3, 0.01);
  CHECK_THROWS_AS(step_stratonovich(e, CommWeight::constant(1.0), 0.5, four, 0.01), ShapeError);
  CHECK_THROWS_AS(step_stratonovich(e, CommWeight::constant(1.0), 0.5, three, 0.01), ShapeError);
  e.mode = NoiseMode::Independent;
  CHECK_NOTHROW(step_stratonovich(e, CommWeight::constant(1.0), 0.5, four, 0.01));
  CHECK_THROWS_AS(step_ito(e, CommWeight::constant(1.0), 0.5, 0.01, 0.01), ShapeError);
}

TEST_CASE("non-finite steps raise blowup") {
  auto e = uniform_initial(1, 3, 10);
  e.v(0, 0) = 1e308;
  e.v(0, 1) = -1e308;
  CHECK_THROWS_AS(step_stratonovich(e, CommWeight::constant(1.0), 0.0, 0.0, 10.0), NumericalBlowup);
}

TEST_CASE("T = 0 records only the initial ensemble") {
  auto c = small_config(2, 8, 0.3);
  c.T = 0.0;
  const auto init = replica_initial(c, 0);
  const auto rec = run(c, init, replica_path(c, 0));
  CHECK(rec.times.size() == 1);
  CHECK(rec.ensembles.size() == 1);
  CHECK(rec.final_ensemble().v == init.v);
  CHECK(rec.series.size() == 1);
}

TEST_CASE("runs are deterministic and thread invariant") {
  auto c = small_config(2, 24, 0.4);
  c.snapshot_every = 5;
  const auto init = replica_initial(c, 2);
  const auto path = replica_path(c, 2);
  const auto a = run(c, init, path);
  const auto b = run(c, init, path);
  RunOptions threaded;
  threaded.threads = 3;
  const auto m = run(c, init, path, threaded);
  CHECK(a.final_ensemble().v == b.final_ensemble().v);
  CHECK(a.series.m2 == b.series.m2);
  CHECK(a.times.size() == 21);
  CHECK(max_abs_diff(m.final_ensemble().v, a.final_ensemble().v) <= 1e-12 * a.final_ensemble().v.cwiseAbs().maxCoeff());
  CHECK(a.path_seed == path.seed);
  CHECK(a.config_hash == config_hash(c));
}

TEST_CASE("keep_ensembles stores every snapshot") {
  auto c = small_config(1, 6, 0.2);
  c.snapshot_every = 10;
  RunOptions o;
  o.keep_ensembles = true;
  const auto rec = run(c, replica_initial(c, 0), replica_path(c, 0), o);
  CHECK(rec.ensembles.size() == rec.times.size());
  CHECK(rec.ensembles.size() == 11);
  CHECK(rec.ensembles.back().t == doctest::Approx(1.0));
}

TEST_CASE("replica seeds are distinct") {
  const auto c = small_config(1, 4, 0.2);
  CHECK(replica_path(c, 0).values != replica_path(c, 1).values);
  CHECK(replica_initial(c, 0).v != replica_initial(c, 1).v);
  auto ci = small_config(1, 4, 0.2, NoiseMode::Independent);
  const auto noise = replica_noise(ci, 0);
  CHECK(noise.size() == 4);
  CHECK(noise[0].values != noise[1].values);
  CHECK_NOTHROW(run(ci, replica_initial(ci, 0), noise));
  auto cn = small_config(1, 4, 0.2, NoiseMode::None);
  CHECK(replica_noise(cn, 0).empty());
}

TEST_CASE("run checks its inputs") {
  const auto c = small_config(2, 8, 0.3);
  const auto init = replica_initial(c, 0);
  CHECK_THROWS_AS(run(c, uniform_initial(2, 7, 1), replica_path(c, 0)), ShapeError);
  CHECK_THROWS_AS(run(c, init, wiener_sample(1, 2.0, 0.01)), ShapeError);
  CHECK_THROWS_AS(run(c, init, std::span<const WienerPath>{}), ShapeError);
}

TEST_CASE("ito and stratonovich runs agree for small steps") {
  auto c = small_config(1, 8, 0.3);
  c.dt = 0.001;
  const auto init = replica_initial(c, 0);
  const auto path = replica_path(c, 0);
  RunOptions ito;
  ito.scheme = Scheme::Ito;
  const auto a = run(c, init, path), b = run(c, init, path, ito);
  CHECK(a.series.m2.back() == doctest::Approx(b.series.m2.back()).epsilon(0.05));
}

TEST_CASE("wong-zakai without noise matches the deterministic run") {
  auto c = small_config(2, 12, 0.0);
  c.dt = 0.02;
  const auto init = replica_initial(c, 0);
  const auto path = replica_path(c, 0);
  const auto heun = run(c, init, path);
  const auto wz = run_wong_zakai(c, init, path, 0.1);
  CHECK(max_abs_diff(heun.final_ensemble().v, wz.final_ensemble().v) <= 10 * c.dt * c.dt * c.T);
  CHECK(max_abs_diff(heun.final_ensemble().x, wz.final_ensemble().x) <= 10 * c.dt * c.dt * c.T);
  CHECK_THROWS_AS(run_wong_zakai(c, init, path, 0.0), ConfigError);
}

TEST_CASE("wong-zakai approaches the stratonovich solution") {
  auto c = small_config(1, 16, 0.5);
  c.dt = 0.001;
  const auto init = replica_initial(c, 0);
  const auto path = replica_path(c, 0);
  const auto ref = run(c, init, path).final_ensemble().v;
  double prev = INFINITY;
  for (double eps : {0.2, 0.1, 0.05}) {
    const double d = (run_wong_zakai(c, init, path, eps).final_ensemble().v - ref).norm();
    CHECK(d <= prev);
    prev = d;
  }
}

}
