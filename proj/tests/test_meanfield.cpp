#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "flock/meanfield.hpp"

using namespace flock;

namespace {

EmpiricalMeasure measure(std::initializer_list<std::initializer_list<double>> cols) {
  EmpiricalMeasure m;
  const auto rows = static_cast<Eigen::Index>(cols.begin()->size());
  m.atoms.resize(rows, static_cast<Eigen::Index>(cols.size()));
  Eigen::Index c = 0;
  for (const auto& col : cols) {
    Eigen::Index r = 0;
    for (double v : col) m.atoms(r++, c) = v;
    ++c;
  }
  return m;
}

EmpiricalMeasure random_measure(std::mt19937_64& rng, int n, int dim) {
  std::normal_distribution<double> z;
  EmpiricalMeasure m;
  m.atoms.resize(dim, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < dim; ++k) m.atoms(k, i) = z(rng);
  return m;
}

double brute_force_w2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.size()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += (a.atoms.col(i) - b.atoms.col(perm[i])).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(a.size()));
}

SimConfig chaos_config() {
  SimConfig c;
  c.d = 1;
  c.N = 64;
  c.T = 0.5;
  c.dt = 0.01;
  c.sigma = 0.3;
  c.weight = CommWeight::rational(0.4, 1.0);
  c.seed = 3;
  return c;
}

}  // namespace

TEST_SUITE("meanfield") {

TEST_CASE("w2 examples") {
  const auto a = measure({{0.0, 0.0}});
  const auto b = measure({{1.0, 0.0}});
  CHECK(wasserstein2(a, a) == 0.0);
  CHECK(wasserstein2(a, b) == doctest::Approx(1.0));
  const auto p = measure({{0.0, 0.0}, {1.0, 0.0}});
  const auto q = measure({{0.0, 0.1}, {1.0, -0.1}});
  CHECK(wasserstein2(p, q) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(brute_force_w2(p, q) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("w2 errors") {
  const auto a = measure({{0.0, 0.0}});
  CHECK_THROWS_AS(wasserstein2(a, measure({{0.0, 0.0, 1.0}})), ShapeError);
  CHECK_THROWS_AS(wasserstein2(a, EmpiricalMeasure{Eigen::MatrixXd(2, 0)}), DomainError);
  CHECK_THROWS_AS(min_cost_assignment(Eigen::MatrixXd::Zero(2, 3)), ShapeError);
}

TEST_CASE("assignment matches brute force") {
  std::mt19937_64 rng(17);
  for (int n = 1; n <= 7; ++n)
    for (int trial = 0; trial < 3; ++trial) {
      const auto a = random_measure(rng, n, 2), b = random_measure(rng, n, 2);
      CHECK(wasserstein2(a, b) == doctest::Approx(brute_force_w2(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("w2 metric properties on random triples") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> size(1, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_measure(rng, size(rng), 2), b = random_measure(rng, size(rng), 2),
               c = random_measure(rng, size(rng), 2);
    const double ab = wasserstein2(a, b), ba = wasserstein2(b, a), bc = wasserstein2(b, c), ac = wasserstein2(a, c);
    REQUIRE(ab >= 0.0);
    REQUIRE(ab == doctest::Approx(ba).epsilon(1e-10));
    REQUIRE(ac <= ab + bc + 1e-10);
    REQUIRE(wasserstein2(a, a) <= 1e-12);
  }
}

TEST_CASE("unequal sizes use replicated slots exactly") {
  const auto a = measure({{0.0, 0.0}, {2.0, 0.0}});
  const auto b = measure({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}});
  const auto r = wasserstein2_detailed(a, b);
  CHECK(r.exact);
  CHECK(r.size == 6);
  // half of the middle atom's mass (1/3) moves distance 1 either way
  CHECK(r.value == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("w2 is invariant under relabelling") {
  std::mt19937_64 rng(5);
  const auto a = random_measure(rng, 12, 2), b = random_measure(rng, 12, 2);
  auto shuffled = b;
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int i = 0; i < 12; ++i) shuffled.atoms.col(i) = b.atoms.col(perm[i]);
  CHECK(wasserstein2(a, shuffled) == doctest::Approx(wasserstein2(a, b)).epsilon(1e-12));
}

TEST_CASE("empirical measure from an ensemble") {
  ParticleEnsemble e;
  e.x = Eigen::Matrix<double, 2, 3>::Random();
  e.v = Eigen::Matrix<double, 2, 3>::Random();
  const auto m = EmpiricalMeasure::from_ensemble(e);
  CHECK(m.dim() == 4);
  CHECK(m.size() == 3);
  CHECK(m.atoms.block(2, 0, 2, 3) == e.v);
  CHECK(m.weight() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("chaos with a single N is zero") {
  const auto c = chaos_config();
  const auto t = chaos_experiment(c, {c.N}, replica_path(c, 0));
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].w2 == 0.0);
  CHECK(t.path_sup == doctest::Approx(replica_path(c, 0).sup_abs()));
  CHECK_THROWS_AS(chaos_experiment(c, {}, replica_path(c, 0)), ConfigError);
}

TEST_CASE("chaos distances shrink with N") {
  auto c = chaos_config();
  c.N = 256;
  const auto t = chaos_experiment(c, {16, 64, 256}, replica_path(c, 0));
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].w2 > t.rows[1].w2);
  CHECK(t.rows[2].w2 == 0.0);
}

TEST_CASE("stability of identical data is zero") {
  const auto c = chaos_config();
  const auto e = replica_initial(c, 0);
  const auto s = stability_experiment(c, e, e, replica_path(c, 0));
  for (double w : s.w2) CHECK(w == 0.0);
  CHECK(s.max_ratio == 0.0);
  CHECK_THROWS_AS(stability_experiment(c, e, uniform_initial(1, 10, 1), replica_path(c, 0)), ShapeError);
}

TEST_CASE("stability responds linearly to velocity shifts") {
  const auto c = chaos_config();
  const auto e = replica_initial(c, 0);
  const auto path = replica_path(c, 0);
  auto a = e, b = e;
  a.v.array() += 1e-3;
  b.v.array() += 5e-4;
  const auto sa = stability_experiment(c, e, a, path), sb = stability_experiment(c, e, b, path);
  REQUIRE(sa.w2.size() == sb.w2.size());
  CHECK(std::isfinite(sa.max_ratio));
  for (std::size_t k = 0; k < sa.w2.size(); ++k) CHECK(sb.w2[k] / sa.w2[k] == doctest::Approx(0.5).epsilon(0.4));
}

}
