#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "flock/core.hpp"
#include "flock/wiener.hpp"

namespace flock {

/// States sampled on a path grid: states[k] is the value at t_k = k*dt.
template <typename State>
struct Trajectory {
  double dt = 0.0;
  std::uint64_t path_seed = 0;
  std::vector<State> states;

  std::size_t size() const noexcept { return states.size(); }
  double time(std::size_t k) const noexcept { return dt * static_cast<double>(k); }
  const State& back() const { return states.back(); }
};

namespace detail {

template <typename State>
bool all_finite(const State& x) {
  if constexpr (std::is_arithmetic_v<State>) {
    return std::isfinite(x);
  } else {
    return x.allFinite();
  }
}

template <typename State>
State evaluated(State x) {
  return x;
}

template <typename Derived>
typename Derived::PlainObject evaluated(const Eigen::MatrixBase<Derived>& x) {
  return x.eval();
}

}  // namespace detail

/// Euler–Maruyama for dX = drift(t,X) dt + diffusion(t,X) dW with a single
/// scalar driving path. `drift` and `diffusion` return something assignable
/// to State (a scalar or an Eigen vector/matrix expression).
template <typename State, typename Drift, typename Diffusion>
Trajectory<State> integrate_ito(Drift&& drift, Diffusion&& diffusion, const State& x0, const WienerPath& path) {
  Trajectory<State> out{path.dt, path.seed, {}};
  out.states.reserve(static_cast<std::size_t>(path.steps()) + 1);
  out.states.push_back(x0);
  State x = x0;
  for (Eigen::Index k = 0; k < path.steps(); ++k) {
    const double t = path.time(k);
    const double dW = path.increment(k);
    State next = x + State(drift(t, x)) * path.dt + State(diffusion(t, x)) * dW;
    if (!detail::all_finite(next)) throw NumericalBlowup("non-finite state in integrate_ito", static_cast<std::size_t>(k + 1));
    x = std::move(next);
    out.states.push_back(x);
  }
  return out;
}

/// Heun (stochastic trapezoidal) scheme; converges to the Stratonovich solution
/// of dX = drift dt + diffusion ∘ dW.
template <typename State, typename Drift, typename Diffusion>
Trajectory<State> integrate_stratonovich(Drift&& drift, Diffusion&& diffusion, const State& x0,
                                         const WienerPath& path) {
  Trajectory<State> out{path.dt, path.seed, {}};
  out.states.reserve(static_cast<std::size_t>(path.steps()) + 1);
  out.states.push_back(x0);
  State x = x0;
  for (Eigen::Index k = 0; k < path.steps(); ++k) {
    const double t = path.time(k);
    const double h = path.dt;
    const double dW = path.increment(k);
    const State f0 = drift(t, x);
    const State g0 = diffusion(t, x);
    const State pred = x + f0 * h + g0 * dW;
    const State f1 = drift(t + h, pred);
    const State g1 = diffusion(t + h, pred);
    State next = x + 0.5 * (f0 + f1) * h + 0.5 * (g0 + g1) * dW;
    if (!detail::all_finite(next))
      throw NumericalBlowup("non-finite state in integrate_stratonovich", static_cast<std::size_t>(k + 1));
    x = std::move(next);
    out.states.push_back(x);
  }
  return out;
}

/// dX = (a_t + b_t X) dt + c X dW (Itô), with a, b sampled on the path grid.
struct AffineGbmSpec {
  double x0 = 0.0;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  double c = 0.0;

  /// Constant-coefficient spec on a grid of K+1 points.
  static AffineGbmSpec constant(double x0, double a, double b, double c, Eigen::Index points);
};

/// Variation-of-constants solution
///   X_t = E_t (x0 + ∫_0^t a_s / E_s ds),  E_t = exp(∫_0^t (b_s - c²/2) ds + c W_t),
/// with trapezoidal quadrature for both time integrals on the path grid.
Trajectory<double> gbm_affine_closed_form(const AffineGbmSpec& spec, const WienerPath& path);

/// Drift adjustment converting the Stratonovich ensemble equation to the Itô
/// form with the correction written as -σ²/2 (v̄ - v).
struct ItoDriftCorrection {
  double sigma = 0.0;

  template <typename A, typename B>
  auto operator()(const Eigen::MatrixBase<A>& vbar, const Eigen::MatrixBase<B>& v) const {
    return (-0.5 * sigma * sigma) * (vbar - v);
  }

  double operator()(double vbar, double v) const { return -0.5 * sigma * sigma * (vbar - v); }
};

ItoDriftCorrection ito_drift_correction(double sigma);

struct ComparisonResult {
  bool holds = true;
  std::optional<std::size_t> first_violation;
  double max_excess = 0.0;  // max_k (X_k - Y_k), may be negative
};

/// X_t <= Y_t + tol at every grid point, tol = 1e-9 * max|Y|.
ComparisonResult comparison_check(const Trajectory<double>& x, const Trajectory<double>& y);

}  // namespace flock
