#include "flock/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flock/parallel.hpp"

namespace flock {

EmpiricalMeasure EmpiricalMeasure::from_ensemble(const ParticleEnsemble& ens) {
  EmpiricalMeasure m;
  m.atoms.resize(2 * ens.dim(), ens.size());
  m.atoms.topRows(ens.dim()) = ens.x;
  m.atoms.bottomRows(ens.dim()) = ens.v;
  return m;
}

namespace {

// Shortest-augmenting-path Hungarian method with row/column potentials,
// O(n^3). cost(i, j) is queried with 0-based indices.
template <typename Cost>
std::vector<int> hungarian(int n, Cost&& cost, double* total) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      const double ui0 = u[i0];
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - ui0 - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n);
  for (int j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  if (total) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, col_of_row[i]);
    *total = s;
  }
  return col_of_row;
}

// Exact transport from n sources of capacity `cap` to m unit sinks, with
// n * cap == m. Sinks are inserted one at a time; each insertion follows a
// shortest augmenting path (sink -> source -> released sink -> ...) found by
// Dijkstra over the sources, with node potentials keeping reduced costs >= 0.
// Returns the optimal total cost.
template <typename Cost>
double capacitated_transport(int n, int cap, int m, Cost&& cost) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pot_src(n, 0.0), pot_sink(m, 0.0), dist(n), dist_sink(m);
  std::vector<int> src_of(m, -1), via(n);
  std::vector<std::vector<int>> sinks_of(n);
  std::vector<char> done(n);
  std::vector<int> reached;
  for (int i = 0; i < m; ++i) {
    double lo = inf;
    for (int s = 0; s < n; ++s) lo = std::min(lo, cost(s, i) - pot_src[s]);
    pot_sink[i] = -lo;
    for (int s = 0; s < n; ++s) {
      dist[s] = cost(s, i) + pot_sink[i] - pot_src[s];
      via[s] = i;
    }
    std::fill(done.begin(), done.end(), 0);
    reached.assign(1, i);
    dist_sink[i] = 0.0;
    int target = -1;
    double D = 0.0;
    while (target < 0) {
      int s = -1;
      double best = inf;
      for (int q = 0; q < n; ++q)
        if (!done[q] && dist[q] < best) {
          best = dist[q];
          s = q;
        }
      done[s] = 1;
      if (static_cast<int>(sinks_of[s].size()) < cap) {
        target = s;
        D = best;
        break;
      }
      for (int j : sinks_of[s]) {
        const double dj = best - cost(s, j) + pot_src[s] - pot_sink[j];
        dist_sink[j] = dj;
        reached.push_back(j);
        for (int q = 0; q < n; ++q) {
          if (done[q]) continue;
          const double cand = dj + cost(q, j) + pot_sink[j] - pot_src[q];
          if (cand < dist[q]) {
            dist[q] = cand;
            via[q] = j;
          }
        }
      }
    }
    for (int q = 0; q < n; ++q) pot_src[q] += done[q] ? std::min(dist[q], D) : D;
    for (int j = 0; j <= i; ++j) pot_sink[j] += D;
    for (int j : reached) pot_sink[j] += std::min(dist_sink[j], D) - D;
    for (int s = target;;) {
      const int j = via[s];
      const int prev = src_of[j];
      src_of[j] = s;
      sinks_of[s].push_back(j);
      if (prev < 0) break;
      auto& lst = sinks_of[prev];
      lst.erase(std::find(lst.begin(), lst.end(), j));
      s = prev;
    }
  }
  double total = 0.0;
  for (int j = 0; j < m; ++j) total += cost(src_of[j], j);
  return total;
}

Eigen::MatrixXd squared_costs(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  Eigen::MatrixXd c(a.size(), b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j)
    for (Eigen::Index i = 0; i < a.size(); ++i) c(i, j) = (a.atoms.col(i) - b.atoms.col(j)).squaredNorm();
  return c;
}

// Log-domain Sinkhorn with uniform marginals; returns the transport cost of the plan.
double sinkhorn_cost(const Eigen::MatrixXd& c) {
  const Eigen::Index n = c.rows(), m = c.cols();
  const double reg = std::max(1e-3 * c.maxCoeff(), 1e-12);
  const double log_a = -std::log(static_cast<double>(n)), log_b = -std::log(static_cast<double>(m));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
  auto lse_rows = [&](Eigen::VectorXd& out) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < m; ++j) mx = std::max(mx, (g[j] - c(i, j)) / reg);
      double s = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) s += std::exp((g[j] - c(i, j)) / reg - mx);
      out[i] = reg * (log_a - mx - std::log(s));
    }
  };
  auto lse_cols = [&](Eigen::VectorXd& out) {
    for (Eigen::Index j = 0; j < m; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) mx = std::max(mx, (f[i] - c(i, j)) / reg);
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += std::exp((f[i] - c(i, j)) / reg - mx);
      out[j] = reg * (log_b - mx - std::log(s));
    }
  };
  for (int it = 0; it < 500; ++it) {
    lse_rows(f);
    lse_cols(g);
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) total += std::exp((f[i] + g[j] - c(i, j)) / reg) * c(i, j);
  return total;
}

}  // namespace

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost, double* total) {
  if (cost.rows() != cost.cols())
    throw ShapeError("assignment needs a square cost matrix, got " + std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()));
  if (cost.rows() == 0) {
    if (total) *total = 0.0;
    return {};
  }
  return hungarian(static_cast<int>(cost.rows()), [&](int i, int j) { return cost(i, j); }, total);
}

W2Result wasserstein2_detailed(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.size() == 0 || b.size() == 0) throw DomainError("W2 of an empty measure");
  if (a.dim() != b.dim())
    throw ShapeError("W2 between measures of dimension " + std::to_string(a.dim()) + " and " +
                     std::to_string(b.dim()));
  const Eigen::MatrixXd c = squared_costs(a, b);
  const Eigen::Index n = a.size(), m = b.size();
  const Eigen::Index L = std::lcm(n, m);
  W2Result r;
  if (L > kExactAssignmentLimit) {
    r.value = std::sqrt(std::max(0.0, sinkhorn_cost(c)));
    r.exact = false;
    r.size = L;
    return r;
  }
  double total = 0.0;
  if (n <= m) {
    const Eigen::Index kb = L / m;
    total = capacitated_transport(static_cast<int>(n), static_cast<int>(L / n), static_cast<int>(L),
                                  [&](int s, int j) { return c(s, j / kb); });
  } else {
    const Eigen::Index ka = L / n;
    total = capacitated_transport(static_cast<int>(m), static_cast<int>(L / m), static_cast<int>(L),
                                  [&](int s, int j) { return c(j / ka, s); });
  }
  r.value = std::sqrt(std::max(0.0, total / static_cast<double>(L)));
  r.size = L;
  return r;
}

ChaosTable chaos_experiment(const SimConfig& config, const std::vector<int>& N_list, const WienerPath& path,
                            int threads) {
  if (N_list.empty()) throw ConfigError("chaos_experiment needs a non-empty N list");
  const int n_max = *std::max_element(N_list.begin(), N_list.end());
  if (*std::min_element(N_list.begin(), N_list.end()) < 1) throw ConfigError("chaos_experiment N values must be >= 1");
  SimConfig base = config;
  base.noise_mode = NoiseMode::Common;
  base.N = n_max;
  const ParticleEnsemble master = uniform_initial(base.d, n_max, derive_seed(config.seed, 0xc4a05), NoiseMode::Common);

  auto terminal = [&](int N) {
    SimConfig c = base;
    c.N = N;
    c.snapshot_every = std::max(1, static_cast<int>(grid_steps(c.T, c.dt)));
    ParticleEnsemble init;
    init.x = master.x.leftCols(N);
    init.v = master.v.leftCols(N);
    init.mode = NoiseMode::Common;
    RunOptions opt;
    opt.threads = threads;
    return EmpiricalMeasure::from_ensemble(run(c, init, path, opt).final_ensemble());
  };

  const EmpiricalMeasure reference = terminal(n_max);
  ChaosTable table;
  table.path_sup = path.sup_abs();
  for (int N : N_list) {
    ChaosRow row;
    row.N = N;
    if (N == n_max) {
      row.w2 = 0.0;
    } else {
      const auto r = wasserstein2_detailed(terminal(N), reference);
      row.w2 = r.value;
      row.exact = r.exact;
    }
    table.rows.push_back(row);
  }
  return table;
}

StabilitySeries stability_experiment(const SimConfig& config, const ParticleEnsemble& init_a,
                                     const ParticleEnsemble& init_b, const WienerPath& path, int threads) {
  if (init_a.size() != init_b.size() || init_a.dim() != init_b.dim())
    throw ShapeError("stability_experiment needs two ensembles of the same shape");
  SimConfig c = config;
  c.noise_mode = NoiseMode::Common;
  c.N = static_cast<int>(init_a.size());
  c.d = static_cast<int>(init_a.dim());
  RunOptions opt;
  opt.threads = threads;
  opt.keep_ensembles = true;
  const auto ra = run(c, init_a, path, opt);
  const auto rb = run(c, init_b, path, opt);
  StabilitySeries out;
  out.path_sup = path.sup_abs();
  out.t = ra.times;
  out.w2.resize(ra.times.size());
  parallel_for(ra.times.size(), threads, [&](std::size_t k) {
    out.w2[k] = wasserstein2(EmpiricalMeasure::from_ensemble(ra.ensembles[k]),
                             EmpiricalMeasure::from_ensemble(rb.ensembles[k]));
  });
  const double w0 = out.w2.front();
  if (w0 > 0.0)
    for (double w : out.w2) out.max_ratio = std::max(out.max_ratio, w / w0);
  return out;
}

}  // namespace flock
