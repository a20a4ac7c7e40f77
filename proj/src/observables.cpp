#include "flock/observables.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace flock {

Moments moments(const ParticleEnsemble& ens) {
  if (ens.size() == 0) throw DomainError("moments of an empty ensemble");
  Moments m;
  m.m0 = 1.0;
  m.m1 = ens.v.rowwise().mean();
  m.m2 = ens.v.colwise().squaredNorm().mean();
  return m;
}

Moments moments(const KineticState& state) {
  if (state.f.size() == 0) throw DomainError("moments of an empty kinetic state");
  const auto& g = state.grid;
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (int j = 0; j <= g.nv; ++j) {
    const double v = g.v(j);
    double col = 0.0;
    for (int i = 0; i <= g.nx; ++i) col += g.weight_x(i) * state.f(i, j);
    col *= g.weight_v(j);
    m0 += col;
    m1 += v * col;
    m2 += v * v * col;
  }
  Moments m;
  m.m0 = m0;
  m.m1 = Eigen::VectorXd::Constant(1, m1);
  m.m2 = m2;
  return m;
}

double fluctuation_energy(const ParticleEnsemble& ens, const Eigen::VectorXd& vbar0) {
  if (ens.size() == 0) return 0.0;
  return ((-ens.v).colwise() + vbar0).colwise().squaredNorm().mean();
}

double fluctuation_energy(const KineticState& state, double vbar0) {
  const auto& g = state.grid;
  double e = 0.0;
  for (int j = 0; j <= g.nv; ++j) {
    double col = 0.0;
    for (int i = 0; i <= g.nx; ++i) col += g.weight_x(i) * state.f(i, j);
    e += g.weight_v(j) * (g.v(j) - vbar0) * (g.v(j) - vbar0) * col;
  }
  return e;
}

std::pair<double, double> supports(const ParticleEnsemble& ens) {
  if (ens.size() == 0) return {0.0, 0.0};
  return {ens.x.colwise().norm().maxCoeff(), ens.v.colwise().norm().maxCoeff()};
}

std::pair<double, double> supports(const KineticState& state) {
  const auto& g = state.grid;
  const double fmax = state.f.maxCoeff();
  if (!(fmax > 0.0)) return {0.0, 0.0};
  const double thr = 1e-12 * fmax;
  double sx = 0.0, sv = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j)
      if (state.f(i, j) > thr) {
        sx = std::max(sx, std::abs(g.x(i)));
        sv = std::max(sv, std::abs(g.v(j)));
      }
  return {sx, sv};
}

McEstimate mc_expectation(std::span<const double> samples) {
  if (samples.size() < 2)
    throw DomainError("mc_expectation needs at least 2 samples, got " + std::to_string(samples.size()));
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n), samples.size()};
}

RateWindow default_window(double T) { return {0.2 * T, 0.9 * T}; }

std::string RateFit::to_record() const {
  std::ostringstream os;
  os.precision(10);
  os << "rate=" << rate << " ci=" << ci << " intercept=" << intercept << " r2=" << r_squared
     << " window=[" << window.lo << "," << window.hi << "] points=" << points;
  return os.str();
}

RateFit fit_log_slope(std::span<const double> t, std::span<const double> values, RateWindow window) {
  if (t.size() != values.size())
    throw ShapeError("fit_log_slope: " + std::to_string(t.size()) + " times vs " + std::to_string(values.size()) +
                     " values");
  const double slack = 1e-9 * std::max(1.0, std::abs(window.hi));
  std::vector<double> xs, ys;
  std::vector<double> bad;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < window.lo - slack || t[k] > window.hi + slack) continue;
    if (!(values[k] > 0.0)) {
      bad.push_back(t[k]);
      continue;
    }
    xs.push_back(t[k]);
    ys.push_back(std::log(values[k]));
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "non-positive values in the fit window at t =";
    for (double b : bad) os << ' ' << b;
    throw DomainError(os.str());
  }
  if (xs.size() < 2) throw DomainError("fit window holds fewer than 2 points");

  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  RateFit fit;
  fit.rate = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.rate * mx;
  double sse = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double r = ys[k] - fit.intercept - fit.rate * xs[k];
    sse += r * r;
  }
  fit.r_squared = syy > 1e-300 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  fit.window = window;
  fit.points = xs.size();
  return fit;
}

RateFit fit_decay_rate(const MomentSeries& series, SeriesField field, RateWindow window) {
  return fit_log_slope(series.t, field_of(series, field), window);
}

std::vector<double> expected_series(std::span<const MomentSeries> replicas, SeriesField field) {
  if (replicas.empty()) throw DomainError("expected_series needs at least one replica");
  const std::size_t len = replicas.front().size();
  std::vector<double> mean(len, 0.0);
  for (const auto& s : replicas) {
    if (s.size() != len) throw ShapeError("replica series have different lengths");
    const auto& f = field_of(s, field);
    for (std::size_t k = 0; k < len; ++k) mean[k] += f[k];
  }
  for (double& m : mean) m /= static_cast<double>(replicas.size());
  return mean;
}

RateFit fit_expected_decay_rate(std::span<const MomentSeries> replicas, SeriesField field, RateWindow window,
                                int resamples, std::uint64_t seed) {
  const auto mean = expected_series(replicas, field);
  RateFit fit = fit_log_slope(replicas.front().t, mean, window);
  if (replicas.size() < 2 || resamples < 2) return fit;

  const std::size_t R = replicas.size(), len = mean.size();
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_int_distribution<std::size_t> pick(0, R - 1);
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(resamples));
  std::vector<double> boot(len);
  for (int b = 0; b < resamples; ++b) {
    std::fill(boot.begin(), boot.end(), 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const auto& f = field_of(replicas[pick(rng)], field);
      for (std::size_t k = 0; k < len; ++k) boot[k] += f[k];
    }
    for (double& x : boot) x /= static_cast<double>(R);
    slopes.push_back(fit_log_slope(replicas.front().t, boot, window).rate);
  }
  double m = 0.0;
  for (double s : slopes) m += s;
  m /= static_cast<double>(slopes.size());
  double ss = 0.0;
  for (double s : slopes) ss += (s - m) * (s - m);
  fit.ci = 1.96 * std::sqrt(ss / static_cast<double>(slopes.size() - 1));
  return fit;
}

BoundCheck pathwise_bound_check(const MomentSeries& series, double phi_m, double sigma, const WienerPath& path) {
  if (series.size() == 0) throw ShapeError("pathwise_bound_check on an empty series");
  const double tol = 10.0 * path.dt;
  BoundCheck out;
  out.max_violation = -1.0;
  const double m20 = series.m2.front();
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double t = series.t[k];
    const double w = path.values[path.index_of(t)];
    const double bound = m20 * std::exp(-2.0 * phi_m * t - 2.0 * sigma * w);
    const double rel = bound > 0.0 ? series.m2[k] / bound - 1.0 : (series.m2[k] > 0.0 ? INFINITY : 0.0);
    out.max_violation = std::max(out.max_violation, rel);
    if (rel > tol) {
      out.holds = false;
      out.violation_times.push_back(t);
    }
  }
  return out;
}

}  // namespace flock
