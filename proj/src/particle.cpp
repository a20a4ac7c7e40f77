#include "flock/particle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "flock/observables.hpp"
#include "flock/parallel.hpp"
#include "flock/sde.hpp"

namespace flock {

void ParticleEnsemble::validate() const {
  if (x.rows() != v.rows() || x.cols() != v.cols())
    throw ShapeError("ensemble positions are " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                     " but velocities are " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()));
  if (!x.allFinite() || !v.allFinite()) throw DomainError("ensemble has non-finite entries");
}

ParticleEnsemble uniform_initial(int d, int N, std::uint64_t seed, NoiseMode mode) {
  if (d < 1 || N < 1) throw ConfigError("uniform_initial needs d >= 1 and N >= 1");
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ParticleEnsemble ens;
  ens.x.resize(d, N);
  ens.v.resize(d, N);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < d; ++k) ens.x(k, i) = u(rng);
    for (int k = 0; k < d; ++k) ens.v(k, i) = u(rng);
  }
  ens.v.colwise() -= ens.mean_velocity();
  ens.mode = mode;
  return ens;
}

Eigen::VectorXd flocking_force(const ParticleEnsemble& ens, const CommWeight& w, Eigen::Index i) {
  if (i < 0 || i >= ens.size())
    throw DomainError("particle index " + std::to_string(i) + " out of range [0," + std::to_string(ens.size()) + ")");
  const Eigen::Index N = ens.size();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(ens.dim());
  for (Eigen::Index j = 0; j < N; ++j) {
    const double r2 = (ens.x.col(j) - ens.x.col(i)).squaredNorm();
    acc += w.of_squared(r2) * (ens.v.col(j) - ens.v.col(i));
  }
  return acc / static_cast<double>(N);
}

namespace {

template <int D>
void forces_fixed(const double* x, const double* v, double* out, Eigen::Index N, const CommWeight& w, int threads) {
  const double inv_n = 1.0 / static_cast<double>(N);
  parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t i) {
    const double* xi = x + D * i;
    const double* vi = v + D * i;
    double acc[D] = {};
    for (Eigen::Index j = 0; j < N; ++j) {
      const double* xj = x + D * j;
      const double* vj = v + D * j;
      double r2 = 0.0;
      for (int k = 0; k < D; ++k) r2 += (xj[k] - xi[k]) * (xj[k] - xi[k]);
      const double phi = w.of_squared(r2);
      for (int k = 0; k < D; ++k) acc[k] += phi * (vj[k] - vi[k]);
    }
    for (int k = 0; k < D; ++k) out[D * i + k] = acc[k] * inv_n;
  });
}

void forces_dynamic(const Eigen::MatrixXd& x, const Eigen::MatrixXd& v, Eigen::MatrixXd& out, const CommWeight& w,
                    int threads) {
  const Eigen::Index N = x.cols();
  parallel_for(static_cast<std::size_t>(N), threads, [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.rows());
    for (Eigen::Index j = 0; j < N; ++j) {
      const double r2 = (x.col(j) - x.col(i)).squaredNorm();
      acc += w.of_squared(r2) * (v.col(j) - v.col(i));
    }
    out.col(i) = acc / static_cast<double>(N);
  });
}

}  // namespace

Eigen::MatrixXd flocking_forces(const Eigen::MatrixXd& x, const Eigen::MatrixXd& v, const CommWeight& w,
                                int threads) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  switch (x.rows()) {
    case 1: forces_fixed<1>(x.data(), v.data(), out.data(), x.cols(), w, threads); break;
    case 2: forces_fixed<2>(x.data(), v.data(), out.data(), x.cols(), w, threads); break;
    case 3: forces_fixed<3>(x.data(), v.data(), out.data(), x.cols(), w, threads); break;
    default: forces_dynamic(x, v, out, w, threads); break;
  }
  return out;
}

namespace {

// σ (v̄ - v) scaled by the increment(s): column i uses dW[0] or dW[i].
Eigen::MatrixXd noise_term(const Eigen::MatrixXd& v, double sigma, std::span<const double> dW) {
  Eigen::MatrixXd rel = (-v).colwise() + v.rowwise().mean();
  if (dW.size() == 1) return (sigma * dW[0]) * rel;
  const Eigen::Map<const Eigen::RowVectorXd> inc(dW.data(), static_cast<Eigen::Index>(dW.size()));
  return sigma * (rel.array().rowwise() * inc.array()).matrix();
}

void check_increments(const ParticleEnsemble& ens, std::span<const double> dW) {
  if (dW.size() != 1 && dW.size() != static_cast<std::size_t>(ens.size()))
    throw ShapeError("expected 1 (common) or " + std::to_string(ens.size()) + " (independent) increments, got " +
                     std::to_string(dW.size()));
  if (ens.mode == NoiseMode::Independent && dW.size() != static_cast<std::size_t>(ens.size()) && ens.size() > 1)
    throw ShapeError("independent-noise ensemble needs one increment per particle");
  if (ens.mode == NoiseMode::Common && dW.size() != 1 && ens.size() > 1)
    throw ShapeError("common-noise ensemble takes a single shared increment");
}

void check_finite(const ParticleEnsemble& ens, const char* scheme) {
  if (!ens.x.allFinite() || !ens.v.allFinite())
    throw NumericalBlowup(std::string("non-finite ensemble after ") + scheme + " step", 0);
}

}  // namespace

ParticleEnsemble step_stratonovich(const ParticleEnsemble& ens, const CommWeight& w, double sigma,
                                   std::span<const double> dW, double dt, int threads) {
  check_increments(ens, dW);
  const Eigen::MatrixXd f0 = flocking_forces(ens.x, ens.v, w, threads);
  const Eigen::MatrixXd g0 = noise_term(ens.v, sigma, dW);
  const Eigen::MatrixXd x_pred = ens.x + dt * ens.v;
  const Eigen::MatrixXd v_pred = ens.v + dt * f0 + g0;
  const Eigen::MatrixXd f1 = flocking_forces(x_pred, v_pred, w, threads);
  const Eigen::MatrixXd g1 = noise_term(v_pred, sigma, dW);

  ParticleEnsemble next;
  next.mode = ens.mode;
  next.t = ens.t + dt;
  next.x = ens.x + (0.5 * dt) * (ens.v + v_pred);
  next.v = ens.v + (0.5 * dt) * (f0 + f1) + 0.5 * (g0 + g1);
  check_finite(next, "Stratonovich");
  return next;
}

ParticleEnsemble step_ito(const ParticleEnsemble& ens, const CommWeight& w, double sigma, std::span<const double> dW,
                          double dt, int threads) {
  check_increments(ens, dW);
  const Eigen::MatrixXd f0 = flocking_forces(ens.x, ens.v, w, threads);
  const auto correction = ito_drift_correction(sigma);
  const Eigen::VectorXd vbar = ens.mean_velocity();
  Eigen::MatrixXd drift = f0;
  for (Eigen::Index i = 0; i < ens.size(); ++i) drift.col(i) += correction(vbar, ens.v.col(i));

  ParticleEnsemble next;
  next.mode = ens.mode;
  next.t = ens.t + dt;
  next.x = ens.x + dt * ens.v;
  next.v = ens.v + dt * drift + noise_term(ens.v, sigma, dW);
  check_finite(next, "Ito");
  return next;
}

WienerPath replica_path(const SimConfig& config, std::size_t replica) {
  return wiener_sample(derive_seed(config.seed, replica), config.T, config.dt);
}

std::vector<WienerPath> replica_noise(const SimConfig& config, std::size_t replica) {
  switch (config.noise_mode) {
    case NoiseMode::None: return {};
    case NoiseMode::Common: return {replica_path(config, replica)};
    case NoiseMode::Independent: {
      std::vector<WienerPath> paths;
      paths.reserve(static_cast<std::size_t>(config.N));
      const std::uint64_t base = derive_seed(config.seed, replica);
      for (int i = 0; i < config.N; ++i)
        paths.push_back(wiener_sample(derive_seed(base, static_cast<std::uint64_t>(i)), config.T, config.dt));
      return paths;
    }
  }
  return {};
}

ParticleEnsemble replica_initial(const SimConfig& config, std::size_t replica) {
  return uniform_initial(config.d, config.N, derive_seed(config.seed ^ 0x1a2b3c4d5e6fULL, replica), config.noise_mode);
}

namespace {

void record_snapshot(TrajectoryRecord& rec, const ParticleEnsemble& ens, const Eigen::VectorXd& vbar0, double w_t,
                     bool keep) {
  rec.times.push_back(ens.t);
  const auto [sx, sv] = supports(ens);
  rec.series.push(ens.t, moments(ens), fluctuation_energy(ens, vbar0), sx, sv, w_t);
  if (keep) rec.ensembles.push_back(ens);
}

struct Guard {
  double limit;
  long replica;

  void check(const ParticleEnsemble& ens, std::size_t step) const {
    if (!ens.v.allFinite() || !ens.x.allFinite()) throw NumericalBlowup("non-finite ensemble", step, replica);
    if (ens.size() > 0 && ens.v.cwiseAbs().maxCoeff() > limit)
      throw NumericalBlowup("velocity exceeded the blowup guard", step, replica);
  }
};

Guard make_guard(const ParticleEnsemble& initial, long replica) {
  const double scale = initial.size() > 0 ? initial.v.cwiseAbs().maxCoeff() : 0.0;
  return {1e6 * (scale > 0.0 ? scale : 1.0), replica};
}

void check_run_inputs(const SimConfig& config, const ParticleEnsemble& initial, std::span<const WienerPath> noise,
                      Eigen::Index K) {
  config.validate();
  initial.validate();
  if (initial.size() != config.N || initial.dim() != config.d)
    throw ShapeError("initial ensemble shape does not match config (N, d)");
  std::size_t expected = 0;
  if (config.noise_mode == NoiseMode::Common) expected = 1;
  if (config.noise_mode == NoiseMode::Independent) expected = static_cast<std::size_t>(config.N);
  if (noise.size() != expected)
    throw ShapeError("noise_mode " + to_string(config.noise_mode) + " needs " + std::to_string(expected) +
                     " paths, got " + std::to_string(noise.size()));
  for (const auto& p : noise)
    if (p.steps() != K || std::abs(p.dt * K - config.T) > 1e-9 * config.T)
      throw ShapeError("driving path grid does not match the configured T and dt");
}

}  // namespace

TrajectoryRecord run(const SimConfig& config, const ParticleEnsemble& initial, std::span<const WienerPath> noise,
                     RunOptions options) {
  const Eigen::Index K = grid_steps(config.T, config.dt);
  check_run_inputs(config, initial, noise, K);
  const double h = K > 0 ? config.T / static_cast<double>(K) : 0.0;
  const Guard guard = make_guard(initial, options.replica);

  TrajectoryRecord rec;
  rec.config_hash = config_hash(config);
  rec.path_seed = noise.empty() ? 0 : noise.front().seed;
  rec.series.path_seed = rec.path_seed;
  const bool common = config.noise_mode == NoiseMode::Common;
  const double sigma = config.noise_mode == NoiseMode::None ? 0.0 : config.sigma;

  ParticleEnsemble ens = initial;
  ens.t = 0.0;
  ens.mode = config.noise_mode;
  const Eigen::VectorXd vbar0 = ens.mean_velocity();
  record_snapshot(rec, ens, vbar0, common ? noise[0].values[0] : 0.0, true);

  std::vector<double> dW(noise.empty() ? 1 : noise.size(), 0.0);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (std::size_t p = 0; p < noise.size(); ++p) dW[p] = noise[p].increment(k);
    try {
      ens = options.scheme == Scheme::Stratonovich ? step_stratonovich(ens, config.weight, sigma, dW, h, options.threads)
                                                   : step_ito(ens, config.weight, sigma, dW, h, options.threads);
    } catch (const NumericalBlowup& e) {
      throw NumericalBlowup(e.what(), static_cast<std::size_t>(k + 1), options.replica);
    }
    ens.t = h * static_cast<double>(k + 1);
    guard.check(ens, static_cast<std::size_t>(k + 1));
    if ((k + 1) % config.snapshot_every == 0 || k + 1 == K)
      record_snapshot(rec, ens, vbar0, common ? noise[0].values[k + 1] : 0.0, options.keep_ensembles || k + 1 == K);
  }
  return rec;
}

TrajectoryRecord run_wong_zakai(const SimConfig& config, const ParticleEnsemble& initial, const WienerPath& path,
                                double eps, RunOptions options) {
  if (!(eps > 0.0)) throw ConfigError("Wong-Zakai smoothing eps must be > 0");
  const Eigen::Index K = grid_steps(config.T, config.dt);
  SimConfig common = config;
  common.noise_mode = NoiseMode::Common;
  check_run_inputs(common, initial, std::span<const WienerPath>(&path, 1), K);
  const SmoothPath smooth = mollify_path(path, eps);
  const double h = K > 0 ? config.T / static_cast<double>(K) : 0.0;
  const int sub = std::max(1, static_cast<int>(std::ceil(h / (0.25 * eps) - 1e-12)));
  const double hs = h / sub;
  const double sigma = config.sigma;
  const auto& w = config.weight;
  const int threads = options.threads;
  const Guard guard = make_guard(initial, options.replica);

  auto rhs_v = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& v, double t) {
    Eigen::MatrixXd dv = flocking_forces(x, v, w, threads);
    Eigen::MatrixXd rel = (-v).colwise() + v.rowwise().mean();
    dv += (sigma * smooth.rate(t)) * rel;
    return dv;
  };

  TrajectoryRecord rec;
  rec.config_hash = config_hash(common);
  rec.path_seed = path.seed;
  rec.series.path_seed = path.seed;
  ParticleEnsemble ens = initial;
  ens.t = 0.0;
  ens.mode = NoiseMode::Common;
  const Eigen::VectorXd vbar0 = ens.mean_velocity();
  record_snapshot(rec, ens, vbar0, path.values[0], true);

  for (Eigen::Index k = 0; k < K; ++k) {
    for (int s = 0; s < sub; ++s) {
      const double t = h * static_cast<double>(k) + hs * s;
      const Eigen::MatrixXd& x = ens.x;
      const Eigen::MatrixXd& v = ens.v;
      const Eigen::MatrixXd k1x = v;
      const Eigen::MatrixXd k1v = rhs_v(x, v, t);
      const Eigen::MatrixXd x2 = x + 0.5 * hs * k1x, v2 = v + 0.5 * hs * k1v;
      const Eigen::MatrixXd k2v = rhs_v(x2, v2, t + 0.5 * hs);
      const Eigen::MatrixXd x3 = x + 0.5 * hs * v2, v3 = v + 0.5 * hs * k2v;
      const Eigen::MatrixXd k3v = rhs_v(x3, v3, t + 0.5 * hs);
      const Eigen::MatrixXd x4 = x + hs * v3, v4 = v + hs * k3v;
      const Eigen::MatrixXd k4v = rhs_v(x4, v4, t + hs);
      Eigen::MatrixXd xn = x + (hs / 6.0) * (k1x + 2.0 * v2 + 2.0 * v3 + v4);
      Eigen::MatrixXd vn = v + (hs / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
      ens.x = std::move(xn);
      ens.v = std::move(vn);
    }
    ens.t = h * static_cast<double>(k + 1);
    guard.check(ens, static_cast<std::size_t>(k + 1));
    if ((k + 1) % config.snapshot_every == 0 || k + 1 == K)
      record_snapshot(rec, ens, vbar0, path.values[k + 1], options.keep_ensembles || k + 1 == K);
  }
  return rec;
}

}  // namespace flock
