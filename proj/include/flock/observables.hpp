#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flock/kinetic.hpp"
#include "flock/particle.hpp"
#include "flock/series.hpp"
#include "flock/wiener.hpp"

namespace flock {

Moments moments(const ParticleEnsemble& ens);
Moments moments(const KineticState& state);

double fluctuation_energy(const ParticleEnsemble& ens, const Eigen::VectorXd& vbar0);
double fluctuation_energy(const KineticState& state, double vbar0);

/// (max_i |x_i|, max_i |v_i|).
std::pair<double, double> supports(const ParticleEnsemble& ens);

/// Half-widths of the smallest centred box holding every node with
/// f > 1e-12 * max f, measured in node coordinates.
std::pair<double, double> supports(const KineticState& state);

struct McEstimate {
  double mean = 0.0;
  double ci = 0.0;  // 95% half-width, 1.96 s / sqrt(n)
  std::size_t n = 0;

  double lo() const noexcept { return mean - ci; }
  double hi() const noexcept { return mean + ci; }
};

/// Sample mean and normal-approximation CI; needs at least 2 samples.
McEstimate mc_expectation(std::span<const double> samples);

struct RateWindow {
  double lo = 0.0;
  double hi = 0.0;
};

/// Default fit window [0.2T, 0.9T].
RateWindow default_window(double T);

struct RateFit {
  double rate = 0.0;  // least-squares slope of log(field) vs t
  double intercept = 0.0;
  double r_squared = 1.0;
  RateWindow window;
  std::size_t points = 0;
  double ci = 0.0;  // bootstrap 95% half-width when fitted over replicas, else 0

  /// One-line key=value record.
  std::string to_record() const;
};

/// Least-squares slope of log(values) over the times inside the window.
/// Non-positive values inside the window raise DomainError listing the times.
RateFit fit_log_slope(std::span<const double> t, std::span<const double> values, RateWindow window);

RateFit fit_decay_rate(const MomentSeries& series, SeriesField field, RateWindow window);

/// Replica average of one field, time by time.
std::vector<double> expected_series(std::span<const MomentSeries> replicas, SeriesField field);

/// Fit of log E[field] with a percentile-free bootstrap CI: replicas are
/// resampled with replacement `resamples` times and the CI is 1.96 times the
/// standard deviation of the refitted slopes.
RateFit fit_expected_decay_rate(std::span<const MomentSeries> replicas, SeriesField field, RateWindow window,
                                int resamples = 400, std::uint64_t seed = 7);

struct BoundCheck {
  bool holds = true;
  double max_violation = 0.0;  // max_t M2(t)/bound(t) - 1
  std::vector<double> violation_times;
};

/// M2(t) <= M2(0) exp(-2 φ_m t - 2 σ W_t) (1 + 10 dt) at every series time.
/// The series times must lie on the path grid.
BoundCheck pathwise_bound_check(const MomentSeries& series, double phi_m, double sigma, const WienerPath& path);

}  // namespace flock
