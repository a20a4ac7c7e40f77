#include "flock/kinetic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>

#include "flock/parallel.hpp"
#include "flock/particle.hpp"

namespace flock {

PhaseGrid PhaseGrid::make(double x_min, double x_max, double v_min, double v_max, int nx, int nv) {
  if (!std::isfinite(x_min) || !std::isfinite(x_max) || !std::isfinite(v_min) || !std::isfinite(v_max))
    throw ConfigError("phase grid bounds must be finite");
  if (!(x_min < x_max) || !(v_min < v_max)) throw ConfigError("phase grid bounds must satisfy min < max");
  if (nx < 8 || nv < 8)
    throw ConfigError("phase grid needs nx, nv >= 8, got " + std::to_string(nx) + "x" + std::to_string(nv));
  return PhaseGrid{x_min, x_max, v_min, v_max, nx, nv};
}

double KineticState::at(double xq, double vq) const {
  if (!grid.contains(xq, vq)) return 0.0;
  const double sx = (xq - grid.x_min) / grid.hx();
  const double sv = (vq - grid.v_min) / grid.hv();
  const int i = std::min(static_cast<int>(sx), grid.nx - 1);
  const int j = std::min(static_cast<int>(sv), grid.nv - 1);
  const double ax = sx - i, av = sv - j;
  return (1 - ax) * (1 - av) * f(i, j) + ax * (1 - av) * f(i + 1, j) + (1 - ax) * av * f(i, j + 1) +
         ax * av * f(i + 1, j + 1);
}

KineticState sample_density(const PhaseGrid& grid, const std::function<double(double, double)>& density, double t) {
  KineticState s;
  s.grid = grid;
  s.t = t;
  s.f.resize(grid.nx + 1, grid.nv + 1);
  for (int i = 0; i <= grid.nx; ++i)
    for (int j = 0; j <= grid.nv; ++j) s.f(i, j) = density(grid.x(i), grid.v(j));
  return s;
}

namespace {

double mass_of(const KineticState& s) {
  const auto& g = s.grid;
  double m = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) m += g.weight_x(i) * g.weight_v(j) * s.f(i, j);
  return m;
}

double momentum_of(const KineticState& s) {
  const auto& g = s.grid;
  double p = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) p += g.weight_x(i) * g.weight_v(j) * g.v(j) * s.f(i, j);
  return p;
}

// f(x, v) <- f(x, v + shift), linear in v, zero outside.
void shift_velocity(KineticState& s, double shift) {
  const auto& g = s.grid;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(s.f.rows(), s.f.cols());
  for (int j = 0; j <= g.nv; ++j) {
    const double pos = (g.v(j) + shift - g.v_min) / g.hv();
    const double fl = std::floor(pos);
    const int j0 = static_cast<int>(fl);
    const double a = pos - fl;
    for (int i = 0; i <= g.nx; ++i) {
      double val = 0.0;
      if (j0 >= 0 && j0 <= g.nv) val += (1 - a) * s.f(i, j0);
      if (j0 + 1 >= 0 && j0 + 1 <= g.nv) val += a * s.f(i, j0 + 1);
      out(i, j) = val;
    }
  }
  s.f = std::move(out);
}

}  // namespace

KineticState mollify_initial(const KineticState& raw, double eps) {
  if (!(eps > 0.0)) throw ConfigError("mollify_initial needs eps > 0");
  const auto& g = raw.grid;
  const int rx = static_cast<int>(std::ceil(eps / g.hx()));
  const int rv = static_cast<int>(std::ceil(eps / g.hv()));
  struct Tap {
    int a, b;
    double w;
  };
  std::vector<Tap> taps;
  double wsum = 0.0;
  for (int a = -rx; a <= rx; ++a)
    for (int b = -rv; b <= rv; ++b) {
      const double s2 = (a * g.hx() / eps) * (a * g.hx() / eps) + (b * g.hv() / eps) * (b * g.hv() / eps);
      if (s2 >= 1.0) continue;
      const double w = std::exp(-1.0 / (1.0 - s2));
      taps.push_back({a, b, w});
      wsum += w;
    }
  for (auto& t : taps) t.w /= wsum;

  int reach_x = 0, reach_v = 0;
  for (const auto& t : taps) {
    reach_x = std::max(reach_x, std::abs(t.a));
    reach_v = std::max(reach_v, std::abs(t.b));
  }
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j)
      if (raw.f(i, j) != 0.0 && (i - reach_x <= 0 || i + reach_x >= g.nx || j - reach_v <= 0 || j + reach_v >= g.nv)) {
        std::ostringstream os;
        os << "mollified support would reach the grid edge (node x=" << g.x(i) << ", v=" << g.v(j) << ", eps=" << eps
           << ")";
        throw ConfigError(os.str());
      }

  KineticState out = raw;
  out.f.setZero();
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j) {
      const double val = raw.f(i, j);
      if (val == 0.0) continue;
      for (const auto& t : taps) out.f(i + t.a, j + t.b) += t.w * val;
    }

  for (int pass = 0; pass < 3; ++pass) {
    const double m = mass_of(out);
    if (!(m > 0.0)) throw DomainError("mollify_initial: zero mass");
    out.f /= m;
    const double mean_v = momentum_of(out);
    if (std::abs(mean_v) < 1e-15) break;
    shift_velocity(out, mean_v);
  }
  out.f /= mass_of(out);
  return out;
}

FrozenField::FrozenField(const KineticState& state, const CommWeight& w) : weight_(w) {
  const auto& g = state.grid;
  xs_.resize(g.nx + 1);
  mass_.resize(g.nx + 1);
  momentum_.resize(g.nx + 1);
  for (int i = 0; i <= g.nx; ++i) {
    double m = 0.0, p = 0.0;
    for (int j = 0; j <= g.nv; ++j) {
      const double wf = g.weight_v(j) * state.f(i, j);
      m += wf;
      p += g.v(j) * wf;
    }
    xs_[i] = g.x(i);
    mass_[i] = g.weight_x(i) * m;
    momentum_[i] = g.weight_x(i) * p;
  }
}

std::pair<double, double> FrozenField::coefficients(double x) const {
  double a = 0.0, b = 0.0;
  if (weight_.profile() == CommWeight::Profile::Constant) {
    for (std::size_t i = 0; i < xs_.size(); ++i) {
      a += mass_[i];
      b += momentum_[i];
    }
    return {weight_.phi_M() * a, weight_.phi_M() * b};
  }
  for (std::size_t i = 0; i < xs_.size(); ++i) {
    const double d = xs_[i] - x;
    const double phi = weight_.of_squared(d * d);
    a += phi * mass_[i];
    b += phi * momentum_[i];
  }
  return {a, b};
}

double field_Fa(const KineticState& state, const CommWeight& w, double x, double v) {
  if (!state.grid.contains(x, v)) {
    std::ostringstream os;
    os << "field_Fa query (" << x << ", " << v << ") lies outside the grid";
    throw DomainError(os.str());
  }
  return FrozenField(state, w).force(x, v);
}

double div_v_Fa(const KineticState& state, const CommWeight& w, double x) {
  if (x < state.grid.x_min || x > state.grid.x_max) {
    std::ostringstream os;
    os << "div_v_Fa query x=" << x << " lies outside the grid";
    throw DomainError(os.str());
  }
  return FrozenField(state, w).divergence(x);
}

namespace {

bool clamp_to(double& value, double hull) {
  if (std::abs(value) <= hull) return false;
  value = std::copysign(hull, value);
  return true;
}

// Heun step with the start coefficients already known: (a0, b0) is the
// field `begin` evaluated at x.
CharacteristicStep heun(double x, double v, double a0, double b0, const FrozenField& end, double sigma, double dW,
                        double dt, double hull) {
  const double f0 = b0 - v * a0;
  CharacteristicStep out;
  double xp = x + dt * v;
  double vp = v + dt * f0 - sigma * v * dW;
  out.clamped = clamp_to(xp, hull) | clamp_to(vp, hull);
  const double f1 = end.force(xp, vp);
  out.x = x + 0.5 * dt * (v + vp);
  out.v = v + 0.5 * dt * (f0 + f1) - 0.5 * sigma * (v + vp) * dW;
  out.clamped = out.clamped | clamp_to(out.x, hull) | clamp_to(out.v, hull);
  return out;
}

struct Trace {
  double x, v;
  double integral_a;  // ∫ A(s, X_s) ds over the traced span
  bool clamped;
};

// Backward trace from (x, v) at path index k_end to index k_begin; fields[m]
// is the field at path time t_m (fields.size() == 1 means frozen).
Trace trace_back(double x, double v, std::size_t k_end, std::size_t k_begin, const std::vector<FrozenField>& fields,
                 double sigma, const WienerPath& path, double hull) {
  auto field = [&](std::size_t m) -> const FrozenField& { return fields.size() == 1 ? fields[0] : fields[m]; };
  const double h = path.dt;
  double integral = 0.0;
  bool clamped = false;
  auto [a, b] = field(k_end).coefficients(x);
  for (std::size_t m = k_end; m > k_begin; --m) {
    const double dW = path.values[m] - path.values[m - 1];
    const auto step = heun(x, v, a, b, field(m - 1), sigma, -dW, -h, hull);
    clamped = clamped || step.clamped;
    const double a_prev = a;
    x = step.x;
    v = step.v;
    std::tie(a, b) = field(m - 1).coefficients(x);
    integral += 0.5 * h * (a_prev + a);
  }
  return {x, v, integral, clamped};
}

constexpr double kHull = 1e6;

}  // namespace

CharacteristicStep characteristics_step(double x, double v, const FrozenField& begin, const FrozenField& end,
                                        double sigma, double dW, double dt, double hull) {
  const auto [a, b] = begin.coefficients(x);
  return heun(x, v, a, b, end, sigma, dW, dt, hull);
}

Iterate successive_step(const KineticTrajectory& previous, const KineticState& f_in, const CommWeight& w,
                        double sigma, const WienerPath& path, int threads) {
  const std::size_t K = static_cast<std::size_t>(path.steps());
  if (previous.size() != K + 1)
    throw ShapeError("successive_step needs the previous iterate at all " + std::to_string(K + 1) +
                     " path times, got " + std::to_string(previous.size()));
  std::vector<FrozenField> fields;
  fields.reserve(K + 1);
  for (const auto& s : previous) fields.emplace_back(s, w);

  const auto& g = f_in.grid;
  const int nx = g.nx, nv = g.nv;
  Iterate it;
  it.states.resize(K + 1);
  it.foot_x.resize(K + 1);
  it.foot_v.resize(K + 1);
  std::atomic<std::size_t> exits{0};
  for (std::size_t k = 0; k <= K; ++k) {
    KineticState s;
    s.grid = g;
    s.t = path.time(static_cast<Eigen::Index>(k));
    s.f.resize(nx + 1, nv + 1);
    Eigen::MatrixXd fx(nx + 1, nv + 1), fv(nx + 1, nv + 1);
    const double noise = sigma * (path.values[static_cast<Eigen::Index>(k)] - path.values[0]);
    std::size_t local_exits = 0;
    std::vector<std::size_t> exits_per_row(nx + 1, 0);
    parallel_for(static_cast<std::size_t>(nx + 1), threads, [&](std::size_t ii) {
      const int i = static_cast<int>(ii);
      for (int j = 0; j <= nv; ++j) {
        const Trace tr = trace_back(g.x(i), g.v(j), k, 0, fields, sigma, path, kHull);
        fx(i, j) = tr.x;
        fv(i, j) = tr.v;
        if (!g.contains(tr.x, tr.v) || tr.clamped) {
          ++exits_per_row[ii];
          s.f(i, j) = 0.0;
        } else {
          s.f(i, j) = f_in.at(tr.x, tr.v) * std::exp(tr.integral_a + noise);
        }
      }
    });
    for (auto e : exits_per_row) local_exits += e;
    exits += local_exits;
    it.states[k] = std::move(s);
    it.foot_x[k] = std::move(fx);
    it.foot_v[k] = std::move(fv);
  }
  it.exits = exits.load();
  return it;
}

FixedPointResult solve_fixed_point(const KineticState& f_in, const CommWeight& w, double sigma,
                                   const WienerPath& path, double tol, int max_iter, int threads, int min_iter) {
  if (!(tol > 0.0)) throw ConfigError("solve_fixed_point needs tol > 0");
  if (max_iter < 1) throw ConfigError("solve_fixed_point needs max_iter >= 1");
  if (min_iter > max_iter) throw ConfigError("solve_fixed_point needs min_iter <= max_iter");
  const std::size_t K = static_cast<std::size_t>(path.steps());
  const auto& g = f_in.grid;

  KineticTrajectory prev(K + 1, f_in);
  for (std::size_t k = 0; k <= K; ++k) prev[k].t = path.time(static_cast<Eigen::Index>(k));
  std::vector<Eigen::MatrixXd> prev_fx(K + 1), prev_fv(K + 1);
  {
    Eigen::MatrixXd ix(g.nx + 1, g.nv + 1), iv(g.nx + 1, g.nv + 1);
    for (int i = 0; i <= g.nx; ++i)
      for (int j = 0; j <= g.nv; ++j) {
        ix(i, j) = g.x(i);
        iv(i, j) = g.v(j);
      }
    std::fill(prev_fx.begin(), prev_fx.end(), ix);
    std::fill(prev_fv.begin(), prev_fv.end(), iv);
  }

  FixedPointResult result;
  auto& diag = result.diagnostics;
  for (int n = 1; n <= max_iter; ++n) {
    Iterate next = successive_step(prev, f_in, w, sigma, path, threads);
    double f_gap = 0.0, flow_gap = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
      const auto& fn = next.states[k].f;
      f_gap = std::max(f_gap, (fn - prev[k].f).cwiseAbs().maxCoeff());
      const double thr = 1e-12 * std::max(fn.maxCoeff(), prev[k].f.maxCoeff());
      for (int i = 0; i <= g.nx; ++i)
        for (int j = 0; j <= g.nv; ++j) {
          if (fn(i, j) <= thr && prev[k].f(i, j) <= thr) continue;
          const double dx = next.foot_x[k](i, j) - prev_fx[k](i, j);
          const double dv = next.foot_v[k](i, j) - prev_fv[k](i, j);
          flow_gap = std::max(flow_gap, std::hypot(dx, dv));
        }
    }
    diag.f_gap.push_back(f_gap);
    diag.flow_gap.push_back(flow_gap);
    diag.delta.push_back(f_gap * f_gap + flow_gap * flow_gap);
    diag.iterations = n;
    diag.exits = next.exits;
    if (n == 1) result.first = next.states;
    prev = std::move(next.states);
    prev_fx = std::move(next.foot_x);
    prev_fv = std::move(next.foot_v);
    if (f_gap < tol && !diag.converged) {
      diag.converged = true;
      diag.converged_at = n;
    }
    if (diag.converged && n >= min_iter) break;
  }
  result.states = std::move(prev);
  return result;
}

namespace {

Eigen::Index substeps_of(const WienerPath& path, double dt) {
  const double ratio = dt / path.dt;
  const auto m = static_cast<Eigen::Index>(std::llround(ratio));
  if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9 * ratio)
    throw ConfigError("semi-Lagrangian dt must be a whole multiple of the path step");
  return m;
}

}  // namespace

KineticState semi_lagrangian_evolve(const KineticState& state, const CommWeight& w, double sigma,
                                    const WienerPath& path, double dt, int threads) {
  const Eigen::Index m = substeps_of(path, dt);
  const Eigen::Index k0 = path.index_of(state.t);
  if (k0 + m > path.steps()) throw ConfigError("semi-Lagrangian step runs past the path horizon");
  const std::vector<FrozenField> field{FrozenField(state, w)};
  const auto& g = state.grid;
  KineticState next;
  next.grid = g;
  next.t = path.time(k0 + m);
  next.f.resize(g.nx + 1, g.nv + 1);
  const double noise = sigma * (path.values[k0 + m] - path.values[k0]);
  parallel_for(static_cast<std::size_t>(g.nx + 1), threads, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    for (int j = 0; j <= g.nv; ++j) {
      const Trace tr = trace_back(g.x(i), g.v(j), static_cast<std::size_t>(k0 + m), static_cast<std::size_t>(k0),
                                  field, sigma, path, kHull);
      next.f(i, j) = tr.clamped ? 0.0 : state.at(tr.x, tr.v) * std::exp(tr.integral_a + noise);
    }
  });
  return next;
}

KineticTrajectory semi_lagrangian_solve(const KineticState& f_in, const CommWeight& w, double sigma,
                                        const WienerPath& path, double dt, int threads) {
  const Eigen::Index m = substeps_of(path, dt);
  if (path.steps() % m != 0) throw ConfigError("semi-Lagrangian dt must divide the path horizon");
  KineticTrajectory out;
  KineticState s = f_in;
  s.t = 0.0;
  out.push_back(s);
  for (Eigen::Index k = 0; k < path.steps(); k += m) {
    s = semi_lagrangian_evolve(s, w, sigma, path, dt, threads);
    out.push_back(s);
  }
  return out;
}

double SupportEnvelope::max_x() const { return x.empty() ? 0.0 : *std::max_element(x.begin(), x.end()); }
double SupportEnvelope::max_v() const { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

SupportEnvelope support_envelope(double radius, double m2_initial, double phi_M, double sigma,
                                 const WienerPath& path) {
  const Eigen::Index K = path.steps();
  const double h = path.dt;
  const double gamma = std::max(m2_initial, phi_M);
  const double r2 = radius * radius;
  SupportEnvelope env;
  env.t.resize(K + 1);
  env.x.resize(K + 1);
  env.v.resize(K + 1);
  double k_sup = 0.0, integral_i = 0.0, integral_v2 = 0.0;
  double g_prev = 0.0, v2_prev = 0.0;
  for (Eigen::Index k = 0; k <= K; ++k) {
    const double t = path.time(k);
    const double wt = path.values[k];
    k_sup = std::max(k_sup, std::exp(-phi_M * t + 2.0 * sigma * wt));
    const double g = (gamma + m2_initial * k_sup) * std::exp(gamma * t);
    if (k > 0) integral_i += 0.5 * h * (g_prev + g);
    const double v2 = (r2 + phi_M * integral_i) * std::exp(phi_M * t - 2.0 * sigma * wt);
    if (k > 0) integral_v2 += 0.5 * h * (v2_prev + v2);
    env.t[k] = t;
    env.v[k] = std::sqrt(v2);
    env.x[k] = std::sqrt(2.0 * (r2 + t * integral_v2));
    g_prev = g;
    v2_prev = v2;
  }
  return env;
}

void validate_grid(const PhaseGrid& grid, const SupportEnvelope& env) {
  const double x_room = std::min(-grid.x_min, grid.x_max);
  const double v_room = std::min(-grid.v_min, grid.v_max);
  if (env.max_x() > x_room || env.max_v() > v_room) {
    std::ostringstream os;
    os << "phase grid [" << grid.x_min << "," << grid.x_max << "]x[" << grid.v_min << "," << grid.v_max
       << "] does not contain the support envelopes (|x| <= " << env.max_x() << ", |v| <= " << env.max_v() << ")";
    throw ConfigError(os.str());
  }
}

ParticleEnsemble sample_particles(const KineticState& state, int N, std::uint64_t seed) {
  if (N < 1) throw ConfigError("sample_particles needs N >= 1");
  const auto& g = state.grid;
  int i0 = g.nx, i1 = 0, j0 = g.nv, j1 = 0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j)
      if (state.f(i, j) > 0.0) {
        i0 = std::min(i0, i);
        i1 = std::max(i1, i);
        j0 = std::min(j0, j);
        j1 = std::max(j1, j);
      }
  if (i0 > i1) throw DomainError("sample_particles: density is identically zero");
  const double fmax = state.f.maxCoeff();
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> ux(g.x(i0), g.x(i1)), uv(g.v(j0), g.v(j1)), uf(0.0, fmax);
  ParticleEnsemble ens;
  ens.x.resize(1, N);
  ens.v.resize(1, N);
  for (int n = 0; n < N;) {
    const double x = ux(rng), v = uv(rng);
    if (uf(rng) < state.at(x, v)) {
      ens.x(0, n) = x;
      ens.v(0, n) = v;
      ++n;
    }
  }
  ens.v.array() -= ens.v.mean();
  return ens;
}

double support_radius(const KineticState& state, double threshold) {
  const auto& g = state.grid;
  double r = 0.0;
  for (int i = 0; i <= g.nx; ++i)
    for (int j = 0; j <= g.nv; ++j)
      if (state.f(i, j) > threshold) r = std::max(r, std::hypot(g.x(i), g.v(j)));
  return r;
}

}  // namespace flock
