#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "flock/config.hpp"
#include "flock/core.hpp"
#include "flock/series.hpp"
#include "flock/wiener.hpp"

namespace flock {

/// N particles in dimension d. Column i of x / v is particle i (d x N).
struct ParticleEnsemble {
  Eigen::MatrixXd x;
  Eigen::MatrixXd v;
  double t = 0.0;
  NoiseMode mode = NoiseMode::Common;

  Eigen::Index size() const noexcept { return x.cols(); }
  Eigen::Index dim() const noexcept { return x.rows(); }
  Eigen::VectorXd mean_velocity() const { return v.rowwise().mean(); }
  double max_speed() const { return size() == 0 ? 0.0 : v.colwise().norm().maxCoeff(); }

  /// Shapes agree and every entry is finite.
  void validate() const;
};

/// Positions and velocities uniform on [-1,1]^d, velocities shifted to zero mean.
ParticleEnsemble uniform_initial(int d, int N, std::uint64_t seed, NoiseMode mode = NoiseMode::Common);

/// (1/N) Σ_j φ(|x_j - x_i|)(v_j - v_i) for one particle.
Eigen::VectorXd flocking_force(const ParticleEnsemble& ens, const CommWeight& w, Eigen::Index i);

/// All N alignment forces (d x N). Each column is an independent serial sum
/// over j, so the result does not depend on `threads`.
Eigen::MatrixXd flocking_forces(const Eigen::MatrixXd& x, const Eigen::MatrixXd& v, const CommWeight& w,
                                int threads = 1);

/// One Heun step of dx = v dt, dv = F dt + σ(v̄ - v)∘dW.
/// `dW` holds one shared increment (common noise) or N per-particle increments.
ParticleEnsemble step_stratonovich(const ParticleEnsemble& ens, const CommWeight& w, double sigma,
                                   std::span<const double> dW, double dt, int threads = 1);

inline ParticleEnsemble step_stratonovich(const ParticleEnsemble& ens, const CommWeight& w, double sigma, double dW,
                                          double dt, int threads = 1) {
  return step_stratonovich(ens, w, sigma, std::span<const double>(&dW, 1), dt, threads);
}

/// One Euler–Maruyama step of dv = [F - σ²/2 (v̄ - v)] dt + σ(v̄ - v) dW.
ParticleEnsemble step_ito(const ParticleEnsemble& ens, const CommWeight& w, double sigma, std::span<const double> dW,
                          double dt, int threads = 1);

inline ParticleEnsemble step_ito(const ParticleEnsemble& ens, const CommWeight& w, double sigma, double dW, double dt,
                                 int threads = 1) {
  return step_ito(ens, w, sigma, std::span<const double>(&dW, 1), dt, threads);
}

enum class Scheme { Stratonovich, Ito };

struct RunOptions {
  Scheme scheme = Scheme::Stratonovich;
  bool keep_ensembles = false;
  int threads = 1;
  long replica = -1;  // reported in blowup diagnostics
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<ParticleEnsemble> ensembles;  // empty unless keep_ensembles
  MomentSeries series;
  std::uint64_t path_seed = 0;
  std::uint64_t config_hash = 0;

  const ParticleEnsemble& final_ensemble() const { return ensembles.back(); }
};

/// Seeds and noise for replica r of a configuration.
WienerPath replica_path(const SimConfig& config, std::size_t replica);
std::vector<WienerPath> replica_noise(const SimConfig& config, std::size_t replica);
ParticleEnsemble replica_initial(const SimConfig& config, std::size_t replica);

/// Full simulation. `noise` has one path (common mode), N paths (independent
/// mode) or none (noise_mode none). The final ensemble is always kept.
TrajectoryRecord run(const SimConfig& config, const ParticleEnsemble& initial, std::span<const WienerPath> noise,
                     RunOptions options = {});

inline TrajectoryRecord run(const SimConfig& config, const ParticleEnsemble& initial, const WienerPath& path,
                            RunOptions options = {}) {
  return run(config, initial, std::span<const WienerPath>(&path, 1), options);
}

/// Classical RK4 on the smoothed-noise ODE dv = F dt + σ(v̄ - v) dW^eps/dt dt.
/// The RK4 step is dt/m with m the smallest integer making it <= eps/4.
TrajectoryRecord run_wong_zakai(const SimConfig& config, const ParticleEnsemble& initial, const WienerPath& path,
                                double eps, RunOptions options = {});

}  // namespace flock
