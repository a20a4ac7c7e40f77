#include "flock/wiener.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace flock {

Eigen::Index WienerPath::index_of(double t) const {
  const double k = t / dt;
  const double kr = std::round(k);
  if (std::abs(k - kr) > 1e-9 * std::max(1.0, std::abs(k)) || kr < 0 || kr > static_cast<double>(steps()))
    throw ShapeError("time " + std::to_string(t) + " is not on the path grid (dt=" + std::to_string(dt) + ")");
  return static_cast<Eigen::Index>(kr);
}

Eigen::Index grid_steps(double T, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0, got " + std::to_string(dt));
  if (!(T >= 0.0) || !std::isfinite(T)) throw ConfigError("horizon T must be >= 0, got " + std::to_string(T));
  if (T == 0.0) return 0;
  const double ratio = T / dt;
  const double nearest = std::round(ratio);
  if (std::abs(ratio - nearest) <= 1e-9 * ratio) return static_cast<Eigen::Index>(nearest);
  return static_cast<Eigen::Index>(std::ceil(ratio));
}

WienerPath wiener_sample(std::uint64_t seed, double T, double dt) {
  const Eigen::Index K = grid_steps(T, dt);
  WienerPath path;
  path.dt = K > 0 ? T / static_cast<double>(K) : dt;
  path.seed = seed;
  path.values.resize(K + 1);
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> normal(0.0, std::sqrt(path.dt));
  path.values[0] = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) path.values[k + 1] = path.values[k] + normal(rng);
  return path;
}

WienerPath wiener_refine(const WienerPath& path, int factor) {
  if (factor < 2) throw ConfigError("refinement factor must be >= 2, got " + std::to_string(factor));
  const Eigen::Index K = path.steps();
  WienerPath fine;
  fine.dt = path.dt / factor;
  fine.seed = derive_seed(path.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(factor));
  fine.values.resize(K * factor + 1);
  std::mt19937_64 rng(mix_seed(fine.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = fine.dt;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double w_end = path.values[k + 1];
    double w = path.values[k];
    fine.values[k * factor] = w;
    for (int j = 1; j < factor; ++j) {
      // bridge from (current, w) to (end, w_end) over the remaining time
      const double remaining = h * (factor - j + 1);
      const double mean = w + (w_end - w) * h / remaining;
      const double var = h * (remaining - h) / remaining;
      w = mean + std::sqrt(var) * normal(rng);
      fine.values[k * factor + j] = w;
    }
  }
  fine.values[K * factor] = path.values[K];
  return fine;
}

WienerPath wiener_coarsen(const WienerPath& path, int factor) {
  if (factor < 1 || path.steps() % factor != 0)
    throw ShapeError("coarsening factor " + std::to_string(factor) + " does not divide the step count");
  WienerPath coarse;
  coarse.dt = path.dt * factor;
  coarse.seed = path.seed;
  const Eigen::Index K = path.steps() / factor;
  coarse.values.resize(K + 1);
  for (Eigen::Index k = 0; k <= K; ++k) coarse.values[k] = path.values[k * factor];
  return coarse;
}

namespace {

// Antiderivatives of the triangular kernel K(u) = (eps-|u|)/eps^2 and of u*K(u),
// both anchored at u = -eps and clipped to the support.
double kernel_mass(double u, double eps) {
  u = std::clamp(u, -eps, eps);
  const double e2 = eps * eps;
  if (u <= 0.0) return (u + eps) * (u + eps) / (2.0 * e2);
  return 1.0 - (eps - u) * (eps - u) / (2.0 * e2);
}

double kernel_moment(double u, double eps) {
  u = std::clamp(u, -eps, eps);
  const double e2 = eps * eps;
  if (u <= 0.0) return (eps * u * u / 2.0 + u * u * u / 3.0 - eps * e2 / 6.0) / e2;
  return -eps / 6.0 + (eps * u * u / 2.0 - u * u * u / 3.0) / e2;
}

}  // namespace

SmoothPath::SmoothPath(WienerPath base, double eps) : base_(std::move(base)), eps_(eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("mollification eps must be > 0, got " + std::to_string(eps));
  const double T = base_.horizon();
  if (eps > T) throw ConfigError("mollification eps must not exceed the path horizon");
  const Eigen::Index K = base_.steps();
  const double wT = base_.values[K];
  const double reach = eps + base_.dt;
  for (Eigen::Index k = K; k >= 1; --k) {
    if (base_.time(k) > reach) continue;
    knots_t_.push_back(-base_.time(k));
    knots_w_.push_back(-base_.values[k]);
  }
  for (Eigen::Index k = 0; k <= K; ++k) {
    knots_t_.push_back(base_.time(k));
    knots_w_.push_back(base_.values[k]);
  }
  for (Eigen::Index k = K - 1; k >= 0; --k) {
    if (T - base_.time(k) > reach) break;
    knots_t_.push_back(2.0 * T - base_.time(k));
    knots_w_.push_back(2.0 * wT - base_.values[k]);
  }
}

double SmoothPath::value(double t) const {
  const auto first = std::upper_bound(knots_t_.begin(), knots_t_.end(), t - eps_);
  std::size_t k = first == knots_t_.begin() ? 0 : static_cast<std::size_t>(first - knots_t_.begin()) - 1;
  double acc = 0.0;
  for (; k + 1 < knots_t_.size() && knots_t_[k] < t + eps_; ++k) {
    const double s0 = knots_t_[k], s1 = knots_t_[k + 1];
    const double slope = (knots_w_[k + 1] - knots_w_[k]) / (s1 - s0);
    const double alpha = knots_w_[k] + slope * (t - s0);
    const double u_hi = t - s0, u_lo = t - s1;
    acc += alpha * (kernel_mass(u_hi, eps_) - kernel_mass(u_lo, eps_)) -
           slope * (kernel_moment(u_hi, eps_) - kernel_moment(u_lo, eps_));
  }
  return acc;
}

double SmoothPath::rate(double t) const {
  const auto first = std::upper_bound(knots_t_.begin(), knots_t_.end(), t - eps_);
  std::size_t k = first == knots_t_.begin() ? 0 : static_cast<std::size_t>(first - knots_t_.begin()) - 1;
  double acc = 0.0;
  for (; k + 1 < knots_t_.size() && knots_t_[k] < t + eps_; ++k) {
    const double s0 = knots_t_[k], s1 = knots_t_[k + 1];
    const double slope = (knots_w_[k + 1] - knots_w_[k]) / (s1 - s0);
    acc += slope * (kernel_mass(t - s0, eps_) - kernel_mass(t - s1, eps_));
  }
  return acc;
}

Eigen::VectorXd SmoothPath::sample(int factor) const {
  if (factor < 1) throw ConfigError("sampling factor must be >= 1");
  const Eigen::Index n = base_.steps() * factor;
  Eigen::VectorXd out(n + 1);
  const double h = base_.dt / factor;
  for (Eigen::Index k = 0; k <= n; ++k) out[k] = value(h * static_cast<double>(k));
  return out;
}

double SmoothPath::sup_distance_to_base() const {
  double sup = 0.0;
  for (Eigen::Index k = 0; k <= base_.steps(); ++k)
    sup = std::max(sup, std::abs(value(base_.time(k)) - base_.values[k]));
  return sup;
}

SmoothPath mollify_path(const WienerPath& path, double eps) { return SmoothPath(path, eps); }

}  // namespace flock
