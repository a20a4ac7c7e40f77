#include "flock/sde.hpp"

#include <algorithm>
#include <limits>

namespace flock {

AffineGbmSpec AffineGbmSpec::constant(double x0, double a, double b, double c, Eigen::Index points) {
  return {x0, Eigen::VectorXd::Constant(points, a), Eigen::VectorXd::Constant(points, b), c};
}

Trajectory<double> gbm_affine_closed_form(const AffineGbmSpec& spec, const WienerPath& path) {
  const Eigen::Index n = path.values.size();
  if (spec.a.size() != n || spec.b.size() != n)
    throw ShapeError("affine spec sampled on " + std::to_string(spec.a.size()) + "/" + std::to_string(spec.b.size()) +
                     " points but the path has " + std::to_string(n));
  const double h = path.dt;
  const double half_c2 = 0.5 * spec.c * spec.c;

  Trajectory<double> out{path.dt, path.seed, {}};
  out.states.resize(static_cast<std::size_t>(n));
  double drift_integral = 0.0;  // ∫_0^t b ds
  double log_e_prev = spec.c * path.values[0];
  double forcing = 0.0;  // ∫_0^t a_s / E_s ds
  out.states[0] = spec.x0;
  for (Eigen::Index k = 1; k < n; ++k) {
    drift_integral += 0.5 * h * (spec.b[k - 1] + spec.b[k]);
    const double log_e = drift_integral - half_c2 * path.time(k) + spec.c * path.values[k];
    forcing += 0.5 * h * (spec.a[k - 1] * std::exp(-log_e_prev) + spec.a[k] * std::exp(-log_e));
    out.states[static_cast<std::size_t>(k)] = std::exp(log_e) * (spec.x0 + forcing);
    log_e_prev = log_e;
  }
  return out;
}

ItoDriftCorrection ito_drift_correction(double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("sigma must be >= 0");
  return {sigma};
}

ComparisonResult comparison_check(const Trajectory<double>& x, const Trajectory<double>& y) {
  if (x.size() != y.size() || x.dt != y.dt) throw ShapeError("comparison_check needs trajectories on the same grid");
  if (x.path_seed != y.path_seed) throw ShapeError("comparison_check needs trajectories driven by the same path");
  double ymax = 0.0;
  for (double v : y.states) ymax = std::max(ymax, std::abs(v));
  const double tol = 1e-9 * ymax;
  ComparisonResult r;
  r.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double excess = x.states[k] - y.states[k];
    r.max_excess = std::max(r.max_excess, excess);
    if (excess > tol && r.holds) {
      r.holds = false;
      r.first_violation = k;
    }
  }
  return r;
}

}  // namespace flock
