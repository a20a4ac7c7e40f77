#include "flock/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <type_traits>

#include "flock/meanfield.hpp"
#include "flock/observables.hpp"
#include "flock/parallel.hpp"
#include "flock/particle.hpp"
#include "flock/sde.hpp"

namespace flock {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + num(xs[k]);
  return s.empty() ? "none" : s;
}

// Space-separated key=value builder for Check::measured and notes.
class Measure {
 public:
  template <typename T>
  Measure& operator()(const std::string& key, const T& value) {
    if (!text_.empty()) text_ += ' ';
    text_ += key + '=';
    if constexpr (std::is_same_v<T, bool>)
      text_ += value ? "true" : "false";
    else if constexpr (std::is_floating_point_v<T>)
      text_ += num(value);
    else if constexpr (std::is_integral_v<T>)
      text_ += std::to_string(value);
    else
      text_ += std::string(value);
    return *this;
  }

  std::string str() const { return text_; }

 private:
  std::string text_;
};

Check make_check(std::string tag, bool pass, const Measure& m) { return {std::move(tag), pass, m.str()}; }

int at_least(double fraction, int n) { return static_cast<int>(std::ceil(fraction * n - 1e-9)); }

SimConfig with_common_noise(SimConfig c) {
  if (c.noise_mode != NoiseMode::Common)
    throw ConfigError("this experiment needs noise_mode=common (got " + to_string(c.noise_mode) + ")");
  return c;
}

double h_of(const SimConfig& c) { return c.T / static_cast<double>(grid_steps(c.T, c.dt)); }

// ---------------------------------------------------------------- sde oracles

// Test problem dX = (1 + sin 4πt - X) dt + c X dW (Itô), x0 = 1.
constexpr double kOracleB = -1.0;
double oracle_a(double t) { return 1.0 + std::sin(4.0 * std::numbers::pi * t); }

AffineGbmSpec oracle_spec(const WienerPath& path, double c, double shift) {
  AffineGbmSpec s;
  s.x0 = 1.0;
  s.c = c;
  const Eigen::Index n = path.steps() + 1;
  s.a.resize(n);
  s.b = Eigen::VectorXd::Constant(n, kOracleB);
  for (Eigen::Index k = 0; k < n; ++k) s.a[k] = oracle_a(path.time(k)) + shift;
  return s;
}

Trajectory<double> oracle_heun(const WienerPath& path, double c, double shift) {
  const double b_strat = kOracleB - 0.5 * c * c;
  return integrate_stratonovich([&](double t, double x) { return oracle_a(t) + shift + b_strat * x; },
                                [&](double, double x) { return c * x; }, 1.0, path);
}

Trajectory<double> oracle_em(const WienerPath& path, double c) {
  return integrate_ito([&](double t, double x) { return oracle_a(t) + kOracleB * x; },
                       [&](double, double x) { return c * x; }, 1.0, path);
}

double max_error(const Trajectory<double>& a, const Trajectory<double>& b) {
  double e = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) e = std::max(e, std::abs(a.states[k] - b.states[k]));
  return e;
}

// ------------------------------------------------------------------ kinetic

struct KineticSetup {
  PhaseGrid grid;
  KineticState f_in;
  WienerPath path;
  Moments m_in;
  double radius = 0.0;
  SupportEnvelope env;
  double tol = 0.0;
};

KineticSetup kinetic_setup(const ExperimentContext& ctx) {
  const SimConfig& c = ctx.config;
  if (c.d != 1) throw ConfigError("kinetic experiments need d=1 (got d=" + std::to_string(c.d) + ")");
  KineticSetup s;
  s.grid = ctx.kinetic.grid();
  s.f_in = kinetic_initial(s.grid);
  s.path = replica_path(c, 0);
  s.m_in = moments(s.f_in);
  s.radius = support_radius(s.f_in, 1e-12 * s.f_in.sup_norm());
  s.env = support_envelope(s.radius, s.m_in.m2, c.weight.phi_M(), c.sigma, s.path);
  validate_grid(s.grid, s.env);
  s.tol = ctx.kinetic.tol * s.f_in.sup_norm();
  return s;
}

// Conservation, positivity, sup-norm and support checks on a kinetic trajectory.
void kinetic_property_checks(StageResult& out, const std::string& prefix, const KineticTrajectory& traj,
                             const KineticSetup& s, const SimConfig& c) {
  double mass_dev = 0.0, mom_dev = 0.0, min_f = std::numeric_limits<double>::infinity();
  double sup_ratio = 0.0, supp_ratio_x = 0.0, supp_ratio_v = 0.0;
  const double phi_M = c.weight.phi_M();
  Table tab{{"t", "M0", "M1", "M2", "suppX", "suppV", "envX", "envV", "sup", "sup_bound"}, {}};
  for (const auto& st : traj) {
    const Eigen::Index k = s.path.index_of(st.t);
    const Moments m = moments(st);
    const auto [sx, sv] = supports(st);
    const double bound = s.f_in.sup_norm() * std::exp(phi_M * st.t + c.sigma * s.path.values[k]);
    mass_dev = std::max(mass_dev, std::abs(m.m0 - 1.0));
    mom_dev = std::max(mom_dev, std::abs(m.m1[0]));
    min_f = std::min(min_f, st.f.minCoeff());
    sup_ratio = std::max(sup_ratio, st.sup_norm() / bound);
    supp_ratio_x = std::max(supp_ratio_x, sx / s.env.x[k]);
    supp_ratio_v = std::max(supp_ratio_v, sv / s.env.v[k]);
    tab.add({st.t, m.m0, m.m1[0], m.m2, sx, sv, s.env.x[k], s.env.v[k], st.sup_norm(), bound});
  }
  const double mom_tol = 0.01 * std::sqrt(s.m_in.m2);
  out.checks.push_back(make_check(prefix + "Lem3.3-kinetic-mass", mass_dev <= 0.01,
                                  Measure()("max_abs_M0_minus_1", mass_dev)("tol", 0.01)));
  out.checks.push_back(make_check(prefix + "Lem3.3-kinetic-momentum", mom_dev <= mom_tol,
                                  Measure()("max_abs_M1", mom_dev)("tol", mom_tol)));
  out.checks.push_back(make_check(prefix + "kinetic-positivity", min_f >= 0.0, Measure()("min_f", min_f)));
  out.checks.push_back(make_check(prefix + "AppC-sup-norm", sup_ratio <= 1.05,
                                  Measure()("max_sup_over_bound", sup_ratio)("tol", 1.05)));
  out.checks.push_back(make_check(prefix + "Cor4.1-support", supp_ratio_x <= 1.05 && supp_ratio_v <= 1.05,
                                  Measure()("max_x_over_env", supp_ratio_x)("max_v_over_env", supp_ratio_v)(
                                      "tol", 1.05)));
  out.tables.push_back({prefix + "moments", std::move(tab)});
}

}  // namespace

// ------------------------------------------------------------------ basics

bool StageResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check* StageResult::find(const std::string& tag) const {
  for (const auto& c : checks)
    if (c.tag == tag) return &c;
  return nullptr;
}

bool ExperimentResult::passed() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageResult& s) { return s.passed(); });
}

std::vector<std::string> ExperimentResult::failures() const {
  std::vector<std::string> out;
  for (const auto& s : stages)
    for (const auto& c : s.checks)
      if (!c.pass) out.push_back(c.tag);
  return out;
}

std::string to_string(KineticOptions::Mode mode) {
  return mode == KineticOptions::Mode::FixedPoint ? "fixed-point" : "semi-lagrangian";
}

KineticOptions::Mode parse_kinetic_mode(const std::string& text) {
  if (text == "fixed-point") return KineticOptions::Mode::FixedPoint;
  if (text == "semi-lagrangian") return KineticOptions::Mode::SemiLagrangian;
  throw ConfigError("unknown kinetic mode '" + text + "' (expected fixed-point or semi-lagrangian)");
}

KineticState kinetic_initial(const PhaseGrid& grid) {
  const auto raw = sample_density(grid, [](double x, double v) {
    if (std::abs(x) > 0.5 || std::abs(v) > 0.5) return 0.0;
    const double a = std::cos(std::numbers::pi * x), b = std::cos(std::numbers::pi * v);
    return a * a * b * b;
  });
  return mollify_initial(raw, 2.0 * std::max(grid.hx(), grid.hv()));
}

// ------------------------------------------------------------------ stages

StageResult oracle_convergence_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig& c = ctx.config;
  const int paths = c.replicas;
  const double sig = c.sigma;
  StageResult out;
  out.stage = "convergence";

  // err(p, level) for EM and Heun against the oracle on the level's own grid.
  std::vector<std::array<double, 3>> em(paths), heun(paths);
  parallel_for(static_cast<std::size_t>(paths), ctx.threads, [&](std::size_t p) {
    const WienerPath base = wiener_sample(derive_seed(c.seed, p), c.T, c.dt);
    const WienerPath levels[3] = {base, wiener_refine(base, 2), wiener_refine(base, 4)};
    for (int q = 0; q < 3; ++q) {
      const auto oracle = gbm_affine_closed_form(oracle_spec(levels[q], sig, 0.0), levels[q]);
      em[p][q] = max_error(oracle_em(levels[q], sig), oracle);
      heun[p][q] = max_error(oracle_heun(levels[q], sig, 0.0), oracle);
    }
  });

  int dec_em = 0, dec_heun = 0;
  double ratio_em = 0.0, ratio_heun = 0.0;
  std::array<double, 3> mean_em{}, mean_heun{};
  Table per_path{{"path", "em_dt", "em_dt2", "em_dt4", "heun_dt", "heun_dt2", "heun_dt4"}, {}};
  for (int p = 0; p < paths; ++p) {
    dec_em += em[p][1] < em[p][0] && em[p][2] < em[p][1];
    dec_heun += heun[p][1] < heun[p][0] && heun[p][2] < heun[p][1];
    ratio_em += 0.5 * (em[p][0] / em[p][1] + em[p][1] / em[p][2]) / paths;
    ratio_heun += 0.5 * (heun[p][0] / heun[p][1] + heun[p][1] / heun[p][2]) / paths;
    for (int q = 0; q < 3; ++q) {
      mean_em[q] += em[p][q] / paths;
      mean_heun[q] += heun[p][q] / paths;
    }
    per_path.add({double(p), em[p][0], em[p][1], em[p][2], heun[p][0], heun[p][1], heun[p][2]});
  }
  const int need = at_least(0.9, paths);
  out.checks.push_back(make_check("LemA1-em-halving", dec_em >= need,
                                  Measure()("decreasing", dec_em)("paths", paths)("need", need)(
                                      "mean_halving_ratio", ratio_em)));
  out.checks.push_back(make_check("LemA1-heun-halving", dec_heun >= need,
                                  Measure()("decreasing", dec_heun)("paths", paths)("need", need)(
                                      "mean_halving_ratio", ratio_heun)));

  // Geometric case against direct evaluation of x0 exp((μ - c²/2)t + cW).
  {
    const WienerPath path = wiener_sample(derive_seed(c.seed, 0), c.T, c.dt);
    const double mu = 0.3;
    const auto traj = gbm_affine_closed_form(AffineGbmSpec::constant(2.0, 0.0, mu, sig, path.steps() + 1), path);
    double rel = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const double t = path.time(static_cast<Eigen::Index>(k));
      const double direct = 2.0 * std::exp((mu - 0.5 * sig * sig) * t + sig * path.values[k]);
      rel = std::max(rel, std::abs(traj.states[k] / direct - 1.0));
    }
    out.checks.push_back(make_check("LemA1-geometric", rel <= 1e-12, Measure()("max_rel_error", rel)("tol", 1e-12)));
  }

  Table summary{{"dt", "em_mean_max_error", "heun_mean_max_error"}, {}};
  PlotLine le{"Euler-Maruyama", {}, {}}, lh{"Heun", {}, {}};
  for (int q = 0; q < 3; ++q) {
    const double dt = h_of(c) / (1 << q);
    summary.add({dt, mean_em[q], mean_heun[q]});
    le.x.push_back(dt);
    le.y.push_back(mean_em[q]);
    lh.x.push_back(dt);
    lh.y.push_back(mean_heun[q]);
  }
  out.tables.push_back({"errors", std::move(summary)});
  out.tables.push_back({"errors_per_path", std::move(per_path)});
  out.plots.push_back({"errors", "mean max-grid error vs dt", {le, lh}, true});
  out.notes.push_back({"problem", "dX=(1+sin(4 pi t)-X)dt+c X dW, x0=1, c=sigma"});
  out.seconds = since(t0);
  return out;
}

StageResult comparison_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig& c = ctx.config;
  const int paths = c.replicas;
  StageResult out;
  out.stage = "comparison";
  std::vector<ComparisonResult> exact(paths), numeric(paths), control(paths);
  parallel_for(static_cast<std::size_t>(paths), ctx.threads, [&](std::size_t p) {
    const WienerPath path = wiener_sample(derive_seed(c.seed, p), c.T, c.dt);
    const auto y = gbm_affine_closed_form(oracle_spec(path, c.sigma, 0.0), path);
    const auto x = gbm_affine_closed_form(oracle_spec(path, c.sigma, -0.5), path);
    const auto z = gbm_affine_closed_form(oracle_spec(path, c.sigma, +0.5), path);
    exact[p] = comparison_check(x, y);
    numeric[p] = comparison_check(oracle_heun(path, c.sigma, -0.5), oracle_heun(path, c.sigma, 0.0));
    control[p] = comparison_check(z, y);
  });
  int ok = 0, ok_num = 0, caught = 0;
  double worst = -std::numeric_limits<double>::infinity();
  Table tab{{"path", "max_excess", "max_excess_heun", "control_first_violation"}, {}};
  for (int p = 0; p < paths; ++p) {
    ok += exact[p].holds;
    ok_num += numeric[p].holds;
    caught += !control[p].holds;
    worst = std::max(worst, exact[p].max_excess);
    tab.add({double(p), exact[p].max_excess, numeric[p].max_excess,
             control[p].first_violation ? double(*control[p].first_violation) : -1.0});
  }
  out.checks.push_back(make_check("LemA2-comparison", ok == paths,
                                  Measure()("holds", ok)("paths", paths)("max_excess", worst)));
  out.checks.push_back(make_check("LemA2-comparison-heun", ok_num == paths, Measure()("holds", ok_num)("paths", paths)));
  out.checks.push_back(make_check("LemA2-control", caught == paths, Measure()("violations", caught)("paths", paths)));
  out.tables.push_back({"paths", std::move(tab)});
  out.seconds = since(t0);
  return out;
}

StageResult pathwise_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig c = with_common_noise(ctx.config);
  const int R = c.replicas;
  const double phi_m = c.weight.phi_m(), phi_M = c.weight.phi_M(), sigma = c.sigma;
  const bool constant = c.weight.profile() == CommWeight::Profile::Constant;
  const double tol = 10.0 * h_of(c);
  StageResult out;
  out.stage = "pathwise";

  struct Row {
    double momentum = 0.0, momentum_tol = 0.0, mass = 0.0, exact = 0.0, bound = 0.0, control = 0.0, support = -1e300,
           pair = 0.0;
    bool holds = true, control_violated = false;
  };
  std::vector<Row> rows(R);
  MomentSeries first_series;
  WienerPath first_path;

  parallel_for(static_cast<std::size_t>(R), ctx.threads, [&](std::size_t r) {
    Row& row = rows[r];
    const WienerPath path = replica_path(c, r);
    const ParticleEnsemble init = replica_initial(c, r);
    const auto rec = run(c, init, path, {Scheme::Stratonovich, false, 1, long(r)});
    const auto& s = rec.series;
    const double vmax0 = init.v.cwiseAbs().maxCoeff();
    row.momentum_tol = 1e-10 * c.N * vmax0;
    const double m2_0 = s.m2[0], V0 = s.supp_v[0];
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double W = path.at(s.t[k]);
      row.momentum = std::max(row.momentum, (s.m1[k] - s.m1[0]).norm());
      row.mass = std::max(row.mass, std::abs(s.m0[k] - 1.0));
      if (constant) {
        const double exact = m2_0 * std::exp(-2.0 * phi_M * s.t[k] - 2.0 * sigma * W);
        row.exact = std::max(row.exact, std::abs(s.m2[k] / exact - 1.0));
      }
      const double vb = std::sqrt(2.0) * (V0 + phi_M * std::sqrt(c.d * m2_0) * s.t[k]) *
                        std::exp(-phi_m * s.t[k] - sigma * W);
      row.support = std::max(row.support, s.supp_v[k] / vb - 1.0);
    }
    const auto check = pathwise_bound_check(s, phi_m, sigma, path);
    row.holds = check.holds;
    row.bound = check.max_violation;
    if (phi_m > 0.0) {
      const auto wrong = pathwise_bound_check(s, 2.0 * phi_m, sigma, path);
      row.control = wrong.max_violation;
      row.control_violated = !wrong.holds;
    }
    if (constant) {
      SimConfig pc = c;
      pc.N = 2;
      ParticleEnsemble pair;
      pair.x = Eigen::MatrixXd::Zero(c.d, 2);
      pair.v = Eigen::MatrixXd::Zero(c.d, 2);
      pair.x(0, 0) = -0.5;
      pair.x(0, 1) = 0.5;
      pair.v(0, 0) = 1.0;
      pair.v(0, 1) = -1.0;
      const auto prec = run(pc, pair, path);
      const auto& fin = prec.final_ensemble();
      const double w = fin.v(0, 0) - fin.v(0, 1);
      const double closed = 2.0 * std::exp(-phi_M * c.T - sigma * path.values[path.steps()]);
      row.pair = std::abs(w / closed - 1.0);
    }
    if (r == 0) {
      first_series = s;
      first_path = path;
    }
  });

  double momentum = 0.0, momentum_ratio = 0.0, mass = 0.0, exact = 0.0, bound = -1e300, support = -1e300, pair = 0.0;
  int holds = 0, violated = 0;
  Table tab{{"replica", "momentum_drift", "max_rel_exact_error", "max_bound_ratio_minus_1", "support_ratio_minus_1",
             "pair_rel_error"},
            {}};
  for (int r = 0; r < R; ++r) {
    const Row& row = rows[r];
    momentum = std::max(momentum, row.momentum);
    momentum_ratio = std::max(momentum_ratio, row.momentum / row.momentum_tol);
    mass = std::max(mass, row.mass);
    exact = std::max(exact, row.exact);
    bound = std::max(bound, row.bound);
    support = std::max(support, row.support);
    pair = std::max(pair, row.pair);
    holds += row.holds;
    violated += row.control_violated;
    tab.add({double(r), row.momentum, row.exact, row.bound, row.support, row.pair});
  }
  out.checks.push_back(make_check("Lem3.3-momentum", momentum_ratio <= 1.0,
                                  Measure()("max_mean_velocity_drift", momentum)("max_drift_over_tol", momentum_ratio)));
  out.checks.push_back(make_check("Lem3.3-mass", mass == 0.0, Measure()("max_abs_M0_minus_1", mass)));
  out.checks.push_back(make_check("Lem3.3-dissipation", holds == R,
                                  Measure()("holds", holds)("paths", R)("max_ratio_minus_1", bound)("tol", tol)));
  if (phi_m > 0.0 && sigma > 0.0)
    out.checks.push_back(make_check("Lem3.3-control", violated > 0, Measure()("violated", violated)("paths", R)));
  out.checks.push_back(make_check("Lem3.4-support", support <= tol,
                                  Measure()("max_ratio_minus_1", support)("tol", tol)));
  if (constant) {
    out.checks.push_back(make_check("Lem3.3-exact-M2", exact <= tol, Measure()("max_rel_error", exact)("tol", tol)));
    out.checks.push_back(make_check("pair-closed-form", pair <= 5.0 * h_of(c),
                                    Measure()("max_rel_error", pair)("tol", 5.0 * h_of(c))));
  }
  out.tables.push_back({"replicas", std::move(tab)});

  Table st{{"t", "W", "M2", "bound"}, {}};
  PlotLine lm{"M2 (replica 0)", {}, {}}, lb{"M2(0) exp(-2 phi_m t - 2 sigma W)", {}, {}, true};
  for (std::size_t k = 0; k < first_series.size(); ++k) {
    const double t = first_series.t[k], W = first_path.at(t);
    const double b = first_series.m2[0] * std::exp(-2.0 * phi_m * t - 2.0 * sigma * W);
    st.add({t, W, first_series.m2[k], b});
    lm.x.push_back(t);
    lm.y.push_back(first_series.m2[k]);
    lb.x.push_back(t);
    lb.y.push_back(b);
  }
  out.tables.push_back({"replica0", std::move(st)});
  out.plots.push_back({"replica0", "pathwise M2 and dissipation bound", {lm, lb}, true});
  out.seconds = since(t0);
  return out;
}

StageResult flock_rate_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig& c = ctx.config;
  const int R = c.replicas;
  const double phi_m = c.weight.phi_m(), phi_M = c.weight.phi_M(), s2 = c.sigma * c.sigma;
  const double h = h_of(c);
  StageResult out;
  out.stage = "rate";

  const ParticleEnsemble init = replica_initial(c, 0);
  std::vector<MomentSeries> series(R);
  std::vector<char> ok(R, 1);
  parallel_for(static_cast<std::size_t>(R), ctx.threads, [&](std::size_t r) {
    try {
      series[r] = run(c, init, replica_noise(c, r), {Scheme::Stratonovich, false, 1, long(r)}).series;
    } catch (const NumericalBlowup&) {
      ok[r] = 0;
    }
  });
  std::vector<MomentSeries> kept;
  for (int r = 0; r < R; ++r)
    if (ok[r]) kept.push_back(std::move(series[r]));
  const int excluded = R - static_cast<int>(kept.size());
  out.notes.push_back({"excluded_replicas", std::to_string(excluded)});
  if (kept.size() < 2) throw DomainError("fewer than 2 replicas survived the blowup guard");

  const auto fit = fit_expected_decay_rate(kept, SeriesField::M2, default_window(c.T), 400, derive_seed(c.seed, 0xb007));
  out.notes.push_back({"fit", fit.to_record()});
  const double rate_tol = fit.ci + 10.0 * h;
  const double lo = -2.0 * (phi_M - s2), hi = -2.0 * (phi_m - s2);
  const bool common = c.noise_mode == NoiseMode::Common;

  // Pointwise mean and relative CI of M2 over replicas.
  const auto& times = kept.front().t;
  const double m2_0 = kept.front().m2[0];
  std::vector<double> mean(times.size()), rel_ci(times.size());
  std::vector<double> col(kept.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    for (std::size_t r = 0; r < kept.size(); ++r) col[r] = kept[r].m2[k];
    const auto est = mc_expectation(col);
    mean[k] = est.mean;
    rel_ci[k] = est.mean > 0.0 ? est.ci / est.mean : 0.0;
  }

  if (common && phi_m > s2) {
    const bool in_band = fit.rate >= lo - rate_tol && fit.rate <= hi + rate_tol;
    out.checks.push_back(make_check(
        "Thm2.2-band", in_band,
        Measure()("rate", fit.rate)("ci", fit.ci)("tol", rate_tol)("band_lo", lo)("band_hi", hi)("r2", fit.r_squared)));
    double worst_lo = -1e300, worst_hi = -1e300;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double tol = rel_ci[k] + 10.0 * h;
      worst_lo = std::max(worst_lo, 1.0 - tol - mean[k] / (m2_0 * std::exp(lo * times[k])));
      worst_hi = std::max(worst_hi, mean[k] / (m2_0 * std::exp(hi * times[k])) - 1.0 - tol);
    }
    out.checks.push_back(make_check("Thm2.2-envelope", worst_lo <= 0.0 && worst_hi <= 0.0,
                                    Measure()("max_lower_excess", worst_lo)("max_upper_excess", worst_hi)));
  }
  if (common) {
    double worst = -1e300;
    for (std::size_t k = 0; k < times.size(); ++k)
      worst = std::max(worst, mean[k] / (m2_0 * std::exp(2.0 * s2 * times[k])) - 1.0 - rel_ci[k] - 10.0 * h);
    out.checks.push_back(make_check("Thm2.3-bound", worst <= 0.0, Measure()("max_excess", worst)));
  }
  if (common && c.weight.profile() == CommWeight::Profile::Constant && s2 > phi_M)
    out.checks.push_back(make_check("Thm2.3-growth", fit.rate > 0.0, Measure()("rate", fit.rate)("ci", fit.ci)));
  if (!common)
    out.checks.push_back(make_check("independent-decay", fit.rate < 0.0, Measure()("rate", fit.rate)("ci", fit.ci)));

  Table tab{{"t", "mean_M2", "rel_ci", "lower_band", "upper_band", "growth_bound"}, {}};
  PlotLine lm{"E[M2]", {}, {}}, ll{"M2(0) exp(-2(phi_M-s2)t)", {}, {}, true},
      lu{"M2(0) exp(-2(phi_m-s2)t)", {}, {}, true}, lg{"M2(0) exp(2 s2 t)", {}, {}, true};
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double t = times[k];
    const double bl = m2_0 * std::exp(lo * t), bu = m2_0 * std::exp(hi * t), bg = m2_0 * std::exp(2.0 * s2 * t);
    tab.add({t, mean[k], rel_ci[k], bl, bu, bg});
    const std::array<std::pair<PlotLine*, double>, 4> points{{{&lm, mean[k]}, {&ll, bl}, {&lu, bu}, {&lg, bg}}};
    for (const auto& [line, y] : points) {
      line->x.push_back(t);
      line->y.push_back(y);
    }
  }
  out.tables.push_back({"expected_m2", std::move(tab)});
  Table ft{{"rate", "ci", "intercept", "r2", "window_lo", "window_hi"}, {}};
  ft.add({fit.rate, fit.ci, fit.intercept, fit.r_squared, fit.window.lo, fit.window.hi});
  out.tables.push_back({"fit", std::move(ft)});
  out.plots.push_back({"expected_m2", "E[M2] with theoretical band", {lm, ll, lu, lg}, true});
  out.seconds = since(t0);
  return out;
}

StageResult wong_zakai_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig c = with_common_noise(ctx.config);
  StageResult out;
  out.stage = "wong_zakai";
  const WienerPath path = replica_path(c, 0);
  const ParticleEnsemble init = replica_initial(c, 0);
  const RunOptions opt{Scheme::Stratonovich, false, ctx.threads, 0};
  const auto ref = run(c, init, path, opt).final_ensemble();
  const double ref_norm = std::sqrt(ref.x.squaredNorm() + ref.v.squaredNorm());

  Table tab{{"eps", "terminal_distance", "sup_smoothing_gap"}, {}};
  std::vector<double> dist;
  for (double eps : {0.2, 0.1, 0.05}) {
    const auto fin = run_wong_zakai(c, init, path, eps, opt).final_ensemble();
    const double d = std::sqrt((fin.x - ref.x).squaredNorm() + (fin.v - ref.v).squaredNorm()) / ref_norm;
    dist.push_back(d);
    tab.add({eps, d, mollify_path(path, eps).sup_distance_to_base()});
  }
  bool monotone = true;
  for (std::size_t k = 1; k < dist.size(); ++k) monotone = monotone && dist[k] <= dist[k - 1];
  out.checks.push_back(make_check("WZ-monotone", monotone, Measure()("eps", "0.2,0.1,0.05")("distance", join(dist))));

  // N=2 pair with constant weight: w_T = w_0 exp(-phi T - sigma W_T).
  SimConfig pc = c;
  pc.N = 2;
  pc.weight = CommWeight::constant(c.weight.phi_M());
  ParticleEnsemble pair;
  pair.x = Eigen::MatrixXd::Zero(c.d, 2);
  pair.v = Eigen::MatrixXd::Zero(c.d, 2);
  pair.x(0, 0) = -0.5;
  pair.x(0, 1) = 0.5;
  pair.v(0, 0) = 1.0;
  pair.v(0, 1) = -1.0;
  const double h = h_of(c);
  const auto fin = run_wong_zakai(pc, pair, path, h).final_ensemble();
  const double w = fin.v(0, 0) - fin.v(0, 1);
  const double closed = 2.0 * std::exp(-pc.weight.phi_M() * c.T - c.sigma * path.values[path.steps()]);
  const double rel = std::abs(w / closed - 1.0);
  out.checks.push_back(make_check("WZ-pair", rel <= 0.1, Measure()("eps", h)("rel_error", rel)("tol", 0.1)));
  out.tables.push_back({"distance", std::move(tab)});
  out.seconds = since(t0);
  return out;
}

StageResult ito_strat_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig& c = ctx.config;
  const int R = c.replicas;
  StageResult out;
  out.stage = "ito_strat";
  std::vector<int> Ns{4, 16, 64};
  if (std::find(Ns.begin(), Ns.end(), c.N) == Ns.end()) Ns.push_back(c.N);
  std::sort(Ns.begin(), Ns.end());

  Table tab{{"N", "independent", "strat_mean", "strat_ci", "ito_mean", "ito_ci", "rel_gap", "rel_gap_ci",
             "predicted_rel_gap"},
            {}};
  PlotLine lc{"common: measured", {}, {}}, li{"independent: measured", {}, {}},
      lp{"independent: sigma^2 T / N", {}, {}, true};
  for (NoiseMode mode : {NoiseMode::Common, NoiseMode::Independent}) {
    for (int N : Ns) {
      SimConfig cm = c;
      cm.N = N;
      cm.noise_mode = mode;
      cm.snapshot_every = std::max(1, static_cast<int>(grid_steps(c.T, c.dt)));
      const ParticleEnsemble init = replica_initial(cm, 0);
      std::vector<double> strat(R), ito(R), gap(R);
      parallel_for(static_cast<std::size_t>(R), ctx.threads, [&](std::size_t r) {
        const auto noise = replica_noise(cm, r);
        strat[r] = run(cm, init, noise, {Scheme::Stratonovich, false, 1, long(r)}).series.m2.back();
        ito[r] = run(cm, init, noise, {Scheme::Ito, false, 1, long(r)}).series.m2.back();
      });
      const auto es = mc_expectation(strat), ei = mc_expectation(ito);
      for (int r = 0; r < R; ++r) gap[r] = (ito[r] - strat[r]) / es.mean;
      const auto eg = mc_expectation(gap);
      const bool indep = mode == NoiseMode::Independent;
      const double predicted = indep ? c.sigma * c.sigma * c.T / N : 0.0;
      tab.add({double(N), indep ? 1.0 : 0.0, es.mean, es.ci, ei.mean, ei.ci, eg.mean, eg.ci, predicted});
      (indep ? li : lc).x.push_back(N);
      (indep ? li : lc).y.push_back(std::abs(eg.mean));
      if (indep) {
        lp.x.push_back(N);
        lp.y.push_back(predicted);
      }
      if (!indep && N == c.N) {
        const bool overlap = es.lo() <= ei.hi() && ei.lo() <= es.hi();
        out.checks.push_back(make_check("SCS2-equivalence", overlap,
                                        Measure()("N", N)("strat", es.mean)("strat_ci", es.ci)("ito", ei.mean)(
                                            "ito_ci", ei.ci)("paired_rel_gap", eg.mean)("paired_ci", eg.ci)));
      }
      out.notes.push_back({std::string(indep ? "independent" : "common") + ".N" + std::to_string(N),
                           Measure()("rel_gap", eg.mean)("ci", eg.ci)("predicted", predicted).str()});
    }
  }
  out.tables.push_back({"gap", std::move(tab)});
  out.plots.push_back({"gap", "|relative Ito-Stratonovich gap in E[M2(T)]| vs N", {lc, li, lp}, true});
  out.seconds = since(t0);
  return out;
}

StageResult chaos_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig c = with_common_noise(ctx.config);
  StageResult out;
  out.stage = "chaos";
  std::vector<int> Ns;
  for (int n : {32, 128, 512})
    if (n < c.N) Ns.push_back(n);
  Ns.push_back(c.N);

  std::vector<std::string> header{"master"};
  for (int n : Ns) header.push_back("W2_N" + std::to_string(n));
  header.push_back("path_sup");
  header.push_back("decreasing");
  Table tab{header, {}};
  int decreasing = 0;
  bool all_exact = true;
  std::vector<double> mean_w2(Ns.size(), 0.0);
  for (int m = 0; m < c.replicas; ++m) {
    SimConfig cm = c;
    cm.seed = derive_seed(c.seed, static_cast<std::uint64_t>(m));
    const WienerPath path = replica_path(cm, 0);
    const auto table = chaos_experiment(cm, Ns, path, ctx.threads);
    bool dec = true;
    std::vector<double> row{double(m)};
    for (std::size_t k = 0; k < table.rows.size(); ++k) {
      row.push_back(table.rows[k].w2);
      all_exact = all_exact && table.rows[k].exact;
      mean_w2[k] += table.rows[k].w2 / c.replicas;
      if (k > 0 && k + 1 < table.rows.size()) dec = dec && table.rows[k].w2 < table.rows[k - 1].w2;
    }
    row.push_back(table.path_sup);
    row.push_back(dec ? 1.0 : 0.0);
    decreasing += dec;
    tab.add(std::move(row));
  }
  const int need = at_least(0.9, c.replicas);
  out.checks.push_back(make_check("Thm2.1-chaos", decreasing >= need && all_exact,
                                  Measure()("decreasing", decreasing)("seeds", c.replicas)("need", need)(
                                      "exact", all_exact)("mean_w2", join(mean_w2))));

  // Exact matching against enumeration of all N! permutations.
  int cases = 0, agree = 0;
  double worst = 0.0;
  std::mt19937_64 rng(mix_seed(c.seed ^ 0xb00f));
  std::normal_distribution<double> gauss;
  for (int n = 1; n <= 8; ++n)
    for (int trial = 0; trial < 3; ++trial) {
      EmpiricalMeasure a, b;
      a.atoms.resize(2 * c.d, n);
      b.atoms.resize(2 * c.d, n);
      for (Eigen::Index k = 0; k < a.atoms.size(); ++k) a.atoms.data()[k] = gauss(rng);
      for (Eigen::Index k = 0; k < b.atoms.size(); ++k) b.atoms.data()[k] = gauss(rng);
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += (a.atoms.col(i) - b.atoms.col(perm[i])).squaredNorm();
        best = std::min(best, s);
      } while (std::next_permutation(perm.begin(), perm.end()));
      const double brute = std::sqrt(best / n);
      const double rel = std::abs(wasserstein2(a, b) - brute) / brute;
      worst = std::max(worst, rel);
      ++cases;
      agree += rel <= 1e-12;
    }
  out.checks.push_back(make_check("W2-brute-force", agree == cases,
                                  Measure()("agree", agree)("cases", cases)("max_rel_diff", worst)));

  PlotLine lw{"mean W2 to largest N", {}, {}};
  for (std::size_t k = 0; k + 1 < Ns.size(); ++k) {
    lw.x.push_back(Ns[k]);
    lw.y.push_back(mean_w2[k]);
  }
  out.tables.push_back({"w2", std::move(tab)});
  out.plots.push_back({"w2", "W2(mu^N_T, mu^Nmax_T) vs N", {lw}, true});
  out.seconds = since(t0);
  return out;
}

StageResult stability_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig c = with_common_noise(ctx.config);
  StageResult out;
  out.stage = "stability";
  const WienerPath path = replica_path(c, 0);
  const ParticleEnsemble a = replica_initial(c, 0);
  const double eps = 1e-3;
  auto shifted = [&](double e) {
    ParticleEnsemble b = a;
    b.v.array() += e;
    return b;
  };
  ParticleEnsemble pos = a;
  {
    std::mt19937_64 rng(mix_seed(c.seed ^ 0x905));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index k = 0; k < pos.x.size(); ++k) pos.x.data()[k] += eps * u(rng);
  }
  const auto full = stability_experiment(c, a, shifted(eps), path, ctx.threads);
  const auto half = stability_experiment(c, a, shifted(0.5 * eps), path, ctx.threads);
  const auto posn = stability_experiment(c, a, pos, path, ctx.threads);

  double rmin = 1e300, rmax = -1e300;
  Table tab{{"t", "W2_eps", "W2_half_eps", "ratio", "W2_positions"}, {}};
  PlotLine lf{"shift eps", {}, {}}, lh{"shift eps/2", {}, {}}, lp{"positions only", {}, {}};
  for (std::size_t k = 0; k < full.t.size(); ++k) {
    const double r = half.w2[k] / full.w2[k];
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
    tab.add({full.t[k], full.w2[k], half.w2[k], r, posn.w2[k]});
    lf.x.push_back(full.t[k]);
    lf.y.push_back(full.w2[k]);
    lh.x.push_back(full.t[k]);
    lh.y.push_back(half.w2[k]);
    lp.x.push_back(full.t[k]);
    lp.y.push_back(posn.w2[k]);
  }
  const bool finite = std::isfinite(full.max_ratio) && full.max_ratio > 0.0;
  out.checks.push_back(make_check("Thm2.1-stability", finite,
                                  Measure()("max_ratio", full.max_ratio)("path_sup", full.path_sup)("eps", eps)));
  out.checks.push_back(make_check("Thm2.1-linear-response", rmin >= 0.3 && rmax <= 0.7,
                                  Measure()("min_ratio", rmin)("max_ratio", rmax)));
  double pmax = 0.0;
  for (double w : posn.w2) pmax = std::max(pmax, w);
  out.checks.push_back(make_check("Thm2.1-positions-bounded", std::isfinite(pmax) && std::isfinite(posn.max_ratio),
                                  Measure()("max_w2", pmax)("max_ratio", posn.max_ratio)));
  out.notes.push_back({"recorded_constant", num(full.max_ratio)});
  out.tables.push_back({"w2", std::move(tab)});
  out.plots.push_back({"w2", "W2 between perturbed runs", {lf, lh, lp}, true});
  out.seconds = since(t0);
  return out;
}

StageResult kinetic_fixed_point_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig& c = ctx.config;
  const KineticSetup s = kinetic_setup(ctx);
  StageResult out;
  out.stage = "fixed_point";
  const int max_iter = ctx.kinetic.max_iter;
  const auto res = solve_fixed_point(s.f_in, c.weight, c.sigma, s.path, s.tol, max_iter, ctx.threads,
                                     std::min(6, max_iter));
  const auto& dg = res.diagnostics;

  out.checks.push_back(make_check(
      "Cor4.2-convergence", dg.converged,
      Measure()("converged_at", dg.converged_at)("max_iter", max_iter)("tol", s.tol)(
          "gap_at_convergence", dg.converged_at > 0 ? dg.f_gap[dg.converged_at - 1] : dg.f_gap.back())));

  std::vector<double> ratios;
  for (std::size_t n = 1; n < dg.delta.size() && n <= 5; ++n) ratios.push_back(dg.delta[n] / dg.delta[n - 1]);
  bool decreasing = ratios.size() == 5;
  for (std::size_t k = 1; k < ratios.size(); ++k) decreasing = decreasing && ratios[k] < ratios[k - 1];
  out.checks.push_back(make_check("Cor4.2-contraction", decreasing,
                                  Measure()("ratios_n1_to_5", join(ratios))("delta", join(dg.delta))));

  Table it{{"n", "f_gap", "flow_gap", "delta", "ratio", "K_hat"}, {}};
  PlotLine ld{"Delta_n", {}, {}};
  for (std::size_t n = 0; n < dg.delta.size(); ++n) {
    const double ratio = n ? dg.delta[n] / dg.delta[n - 1] : 0.0;
    const double khat = n ? (n + 1) * ratio / c.T : 0.0;
    it.add({double(n + 1), dg.f_gap[n], dg.flow_gap[n], dg.delta[n], ratio, khat});
    ld.x.push_back(n + 1);
    ld.y.push_back(dg.delta[n]);
  }
  out.tables.push_back({"iterations", std::move(it)});
  out.plots.push_back({"iterations", "successive-approximation gaps", {ld}, true});

  kinetic_property_checks(out, "", res.states, s, c);

  // Moment bound for the first iterate.
  {
    const double phi_M = c.weight.phi_M(), m20 = s.m_in.m2, sig = c.sigma;
    const double gamma = std::max(m20, phi_M);
    double sup_e = 0.0, worst = -1e300;
    for (const auto& st : res.first) {
      const Eigen::Index k = s.path.index_of(st.t);
      const double W = s.path.values[k];
      sup_e = std::max(sup_e, std::exp(-phi_M * st.t + 2.0 * sig * W));
      const double bound = (gamma + m20 * sup_e) * std::exp((gamma + phi_M) * st.t - 2.0 * sig * W);
      worst = std::max(worst, moments(st).m2 / bound);
    }
    out.checks.push_back(make_check("Prop4.1-moment", worst <= 1.0, Measure()("max_M2_over_bound", worst)));
  }
  if (c.weight.profile() == CommWeight::Profile::Constant) {
    double dev = 0.0;
    for (const auto& st : res.states) {
      const double W = s.path.at(st.t);
      dev = std::max(dev, std::abs(moments(st).m2 - s.m_in.m2 * std::exp(-2.0 * c.weight.phi_M() * st.t -
                                                                          2.0 * c.sigma * W)));
    }
    out.notes.push_back({"max_M2_deviation_from_closed_form_over_M2_0", num(dev / s.m_in.m2)});
  }
  out.notes.push_back({"exits", std::to_string(dg.exits)});
  out.notes.push_back({"support_radius", num(s.radius)});
  out.notes.push_back({"envelope", Measure()("max_x", s.env.max_x())("max_v", s.env.max_v()).str()});

  Table dens{{"x", "v", "f"}, {}};
  const auto& fT = res.states.back();
  for (int i = 0; i <= fT.grid.nx; ++i)
    for (int j = 0; j <= fT.grid.nv; ++j) dens.add({fT.grid.x(i), fT.grid.v(j), fT.f(i, j)});
  out.tables.push_back({"density_T", std::move(dens)});
  out.seconds = since(t0);
  return out;
}

StageResult kinetic_semi_lagrangian_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig& c = ctx.config;
  const KineticSetup s = kinetic_setup(ctx);
  StageResult out;
  out.stage = "semi_lagrangian";
  const double dt_sl = ctx.kinetic.sl_dt;
  const auto fp = solve_fixed_point(s.f_in, c.weight, c.sigma, s.path, s.tol, ctx.kinetic.max_iter, ctx.threads);
  const auto sl = semi_lagrangian_solve(s.f_in, c.weight, c.sigma, s.path, dt_sl, ctx.threads);

  double err = 0.0;
  for (const auto& st : sl) {
    const auto k = static_cast<std::size_t>(s.path.index_of(st.t));
    err = std::max(err, (st.f - fp.states[k].f).cwiseAbs().maxCoeff());
  }
  const double hmax = std::max(s.grid.hx(), s.grid.hv());
  const double tol = 3.0 * (dt_sl + hmax * hmax) * c.T * s.f_in.sup_norm();
  out.checks.push_back(make_check("SL-agreement", err <= tol,
                                  Measure()("max_sup_diff", err)("tol", tol)("dt_sl", dt_sl)("fp_converged",
                                                                                            fp.diagnostics.converged)));
  kinetic_property_checks(out, "SL-", sl, s, c);
  out.seconds = since(t0);
  return out;
}

StageResult kinetic_particle_stage(const ExperimentContext& ctx) {
  const auto t0 = Clock::now();
  const SimConfig c = with_common_noise(ctx.config);
  const KineticSetup s = kinetic_setup(ctx);
  StageResult out;
  out.stage = "kinetic_particle";
  const auto fp = solve_fixed_point(s.f_in, c.weight, c.sigma, s.path, s.tol, ctx.kinetic.max_iter, ctx.threads);
  const ParticleEnsemble init = sample_particles(s.f_in, c.N, derive_seed(c.seed, 0x5a));
  const auto rec = run(c, init, s.path, {Scheme::Stratonovich, false, ctx.threads, 0});

  const double m2_kin = moments(fp.states.back()).m2, m2_part = rec.series.m2.back();
  const double diff = std::abs(m2_kin - m2_part);
  out.checks.push_back(make_check("kinetic-particle-M2", diff <= 0.05 * s.m_in.m2,
                                  Measure()("M2_kinetic", m2_kin)("M2_particle", m2_part)("diff_over_M2_0",
                                                                                         diff / s.m_in.m2)(
                                      "tol", 0.05)("fp_converged", fp.diagnostics.converged)));

  double kx = 0.0, kv = 0.0, px = 0.0, pv = 0.0;
  Table tab{{"t", "M2_kinetic", "M2_particle", "suppX_kinetic", "suppV_kinetic", "suppX_particle", "suppV_particle",
             "envX", "envV"},
            {}};
  PlotLine lk{"kinetic M2", {}, {}}, lp{"particle M2", {}, {}, true};
  for (std::size_t q = 0; q < rec.series.size(); ++q) {
    const double t = rec.series.t[q];
    const auto k = static_cast<std::size_t>(s.path.index_of(t));
    const auto& st = fp.states[k];
    const auto [sx, sv] = supports(st);
    const double m2k = moments(st).m2;
    kx = std::max(kx, sx / s.env.x[k]);
    kv = std::max(kv, sv / s.env.v[k]);
    px = std::max(px, rec.series.supp_x[q] / s.env.x[k]);
    pv = std::max(pv, rec.series.supp_v[q] / s.env.v[k]);
    tab.add({t, m2k, rec.series.m2[q], sx, sv, rec.series.supp_x[q], rec.series.supp_v[q], s.env.x[k], s.env.v[k]});
    lk.x.push_back(t);
    lk.y.push_back(m2k);
    lp.x.push_back(t);
    lp.y.push_back(rec.series.m2[q]);
  }
  out.checks.push_back(make_check("Cor4.1-support-kinetic", kx <= 1.05 && kv <= 1.05,
                                  Measure()("max_x_over_env", kx)("max_v_over_env", kv)("tol", 1.05)));
  out.checks.push_back(make_check("Cor4.1-support-particle", px <= 1.05 && pv <= 1.05,
                                  Measure()("max_x_over_env", px)("max_v_over_env", pv)("tol", 1.05)));
  out.notes.push_back({"M2_0", Measure()("kinetic", s.m_in.m2)("particle", rec.series.m2.front()).str()});
  out.tables.push_back({"comparison", std::move(tab)});
  out.plots.push_back({"m2", "kinetic vs particle M2", {lk, lp}, true});
  out.seconds = since(t0);
  return out;
}

// ------------------------------------------------------------------ runner

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"oracle-suite", "flock-rate",          "pathwise-bounds",
                                              "wong-zakai",   "ito-vs-strat",        "chaos",
                                              "stability",    "kinetic-fixed-point", "kinetic-vs-particle",
                                              "kinetic"};
  return names;
}

bool is_experiment(const std::string& name) {
  const auto& n = experiment_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

namespace {

void write_artifacts(const ExperimentResult& result, const std::string& dir) {
  ensure_directory(dir);
  for (const auto& s : result.stages) {
    for (const auto& t : s.tables) write_csv(t.table, dir + "/" + s.stage + "_" + t.name + ".csv");
    for (const auto& p : s.plots) write_svg_plot(dir + "/" + s.stage + "_" + p.name + ".svg", p.title, p.lines, p.log_y);
  }
}

}  // namespace

ExperimentResult run_experiment(const std::string& name, const ExperimentContext& ctx) {
  if (!is_experiment(name)) throw ConfigError("unknown experiment '" + name + "'");
  ctx.config.validate();
  const auto t0 = Clock::now();
  ExperimentResult result;
  result.name = name;
  auto& st = result.stages;
  if (name == "oracle-suite") {
    st.push_back(oracle_convergence_stage(ctx));
    st.push_back(comparison_stage(ctx));
  } else if (name == "flock-rate") {
    st.push_back(flock_rate_stage(ctx));
  } else if (name == "pathwise-bounds") {
    st.push_back(pathwise_stage(ctx));
  } else if (name == "wong-zakai") {
    st.push_back(wong_zakai_stage(ctx));
  } else if (name == "ito-vs-strat") {
    st.push_back(ito_strat_stage(ctx));
  } else if (name == "chaos") {
    st.push_back(chaos_stage(ctx));
  } else if (name == "stability") {
    st.push_back(stability_stage(ctx));
  } else if (name == "kinetic-fixed-point") {
    st.push_back(kinetic_fixed_point_stage(ctx));
  } else if (name == "kinetic-vs-particle") {
    st.push_back(kinetic_particle_stage(ctx));
  } else {
    st.push_back(ctx.kinetic.mode == KineticOptions::Mode::FixedPoint ? kinetic_fixed_point_stage(ctx)
                                                                      : kinetic_semi_lagrangian_stage(ctx));
  }
  result.wall_seconds = since(t0);
  if (!ctx.out_dir.empty()) {
    write_artifacts(result, ctx.out_dir);
    write_manifest(result, ctx, ctx.out_dir + "/manifest.txt");
  }
  return result;
}

void write_manifest(const ExperimentResult& result, const ExperimentContext& ctx, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw ConfigError("cannot write " + file);
  const SimConfig& c = ctx.config;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  os << "experiment=" << result.name << '\n';
  os << "version=" << kVersion << '\n';
  os << "wall_time_s=" << num(result.wall_seconds) << '\n';
  os << "threads=" << ctx.threads << '\n';
  os << "config_hash=" << hash << '\n';
  os << "seed=" << c.seed << '\n';
  os << "seed_rule=replica r uses path seed derive_seed(seed,r) and initial seed derive_seed(seed^0x1a2b3c4d5e6f,r)\n";
  std::istringstream cfg(serialize(c));
  for (std::string line; std::getline(cfg, line);)
    if (!line.empty()) os << "config." << line << '\n';
  const auto& k = ctx.kinetic;
  os << "kinetic.grid=" << num(k.x_min) << ',' << num(k.x_max) << ',' << num(k.v_min) << ',' << num(k.v_max) << ','
     << k.nx << ',' << k.nv << '\n';
  os << "kinetic.tol=" << num(k.tol) << '\n';
  os << "kinetic.max_iter=" << k.max_iter << '\n';
  os << "kinetic.mode=" << to_string(k.mode) << '\n';
  os << "kinetic.sl_dt=" << num(k.sl_dt) << '\n';
  for (const auto& s : result.stages) {
    os << "stage." << s.stage << ".seconds=" << num(s.seconds) << '\n';
    for (const auto& [key, value] : s.notes) os << "note." << s.stage << '.' << key << '=' << value << '\n';
  }
  for (const auto& s : result.stages)
    for (const auto& ch : s.checks) os << "check " << ch.tag << ' ' << (ch.pass ? "pass" : "fail") << ' ' << ch.measured << '\n';
  const auto fails = result.failures();
  os << "failures=";
  for (std::size_t i = 0; i < fails.size(); ++i) os << (i ? "," : "") << fails[i];
  os << (fails.empty() ? "none" : "") << '\n';
  os << "status=" << (result.passed() ? "pass" : "fail") << '\n';
}

Report emit_report(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> manifests;
  std::error_code ec;
  if (fs::is_directory(dir, ec))
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() == "manifest.txt") manifests.push_back(e.path());
  if (manifests.empty()) throw ConfigError("no manifest.txt found under " + dir);
  std::sort(manifests.begin(), manifests.end());

  Report report;
  report.file = (fs::path(dir) / "summary.txt").string();
  for (const auto& m : manifests) {
    std::ifstream is(m);
    const std::string where = fs::relative(m.parent_path(), dir).string();
    std::string experiment = where;
    std::vector<ReportRow> rows;
    for (std::string line; std::getline(is, line);) {
      if (line.rfind("experiment=", 0) == 0) experiment = line.substr(11) + (where == "." ? "" : "@" + where);
      if (line.rfind("check ", 0) != 0) continue;
      std::istringstream ls(line.substr(6));
      ReportRow row;
      std::string status;
      ls >> row.tag >> status;
      std::getline(ls >> std::ws, row.measured);
      row.pass = status == "pass";
      rows.push_back(std::move(row));
    }
    for (auto& r : rows) {
      r.experiment = experiment;
      report.pass = report.pass && r.pass;
      report.rows.push_back(std::move(r));
    }
  }
  std::ofstream os(report.file);
  if (!os) throw ConfigError("cannot write " + report.file);
  os << "experiment\tcheck\tstatus\tmeasured\n";
  for (const auto& r : report.rows)
    os << r.experiment << '\t' << r.tag << '\t' << (r.pass ? "pass" : "fail") << '\t' << r.measured << '\n';
  os << "overall=" << (report.pass ? "pass" : "fail") << '\n';
  return report;
}

}  // namespace flock
