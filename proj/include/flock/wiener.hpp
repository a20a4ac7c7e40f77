#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "flock/core.hpp"

namespace flock {

/// One scalar Brownian path on the uniform grid t_k = k*dt, k = 0..K.
struct WienerPath {
  double dt = 0.0;
  std::uint64_t seed = 0;
  Eigen::VectorXd values;  // W(t_k), values[0] == 0

  Eigen::Index steps() const noexcept { return values.size() - 1; }
  double horizon() const noexcept { return dt * static_cast<double>(steps()); }
  double time(Eigen::Index k) const noexcept { return dt * static_cast<double>(k); }
  double increment(Eigen::Index k) const { return values[k + 1] - values[k]; }
  double sup_abs() const { return values.cwiseAbs().maxCoeff(); }

  /// Grid index of time t; throws ShapeError when t is not a grid point.
  Eigen::Index index_of(double t) const;

  /// W at the grid point nearest to t (t must be a grid time up to 1e-9*dt).
  double at(double t) const { return values[index_of(t)]; }
};

/// Number of steps K = ceil(T/dt); the grid step is then T/K so t_K == T.
Eigen::Index grid_steps(double T, double dt);

WienerPath wiener_sample(std::uint64_t seed, double T, double dt);

/// Brownian-bridge refinement: dt -> dt/factor, coarse values kept bit-exactly.
WienerPath wiener_refine(const WienerPath& path, int factor);

/// Keep every `factor`-th grid value (inverse of wiener_refine on shared points).
WienerPath wiener_coarsen(const WienerPath& path, int factor);

/// Triangular-kernel smoothing of the piecewise-linear interpolant of a path.
///
/// The interpolant is extended past both ends by point reflection
/// (L(-s) = -L(s), L(T+s) = 2W_T - L(T-s)); with a symmetric kernel this keeps
/// W^eps(0) = 0 and W^eps(T) = W_T, and linear pieces are reproduced exactly.
class SmoothPath {
 public:
  SmoothPath(WienerPath base, double eps);

  const WienerPath& base() const noexcept { return base_; }
  double eps() const noexcept { return eps_; }

  double value(double t) const;
  /// dW^eps/dt, continuous in t.
  double rate(double t) const;

  /// W^eps sampled at the base grid refined by `factor` (factor >= 1).
  Eigen::VectorXd sample(int factor = 1) const;

  /// sup over base grid times of |W^eps(t_k) - W(t_k)|.
  double sup_distance_to_base() const;

 private:
  WienerPath base_;
  double eps_;
  std::vector<double> knots_t_;
  std::vector<double> knots_w_;
};

SmoothPath mollify_path(const WienerPath& path, double eps);

}  // namespace flock
