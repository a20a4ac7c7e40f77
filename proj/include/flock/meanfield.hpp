#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "flock/config.hpp"
#include "flock/particle.hpp"
#include "flock/wiener.hpp"

namespace flock {

/// Uniformly weighted atoms in R^{2d}; column i is (x_i, v_i).
struct EmpiricalMeasure {
  Eigen::MatrixXd atoms;

  static EmpiricalMeasure from_ensemble(const ParticleEnsemble& ens);

  Eigen::Index size() const noexcept { return atoms.cols(); }
  Eigen::Index dim() const noexcept { return atoms.rows(); }
  double weight() const noexcept { return 1.0 / static_cast<double>(size()); }
};

/// Minimum-cost perfect matching on a square cost matrix (rows to columns).
/// Returns col_of_row; `total` receives the optimal cost.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost, double* total = nullptr);

struct W2Result {
  double value = 0.0;
  bool exact = true;     // false when the entropic fallback was used
  Eigen::Index size = 0;  // assignment size after replication
};

/// Largest replicated problem solved exactly; larger unequal pairs use Sinkhorn.
inline constexpr Eigen::Index kExactAssignmentLimit = 2048;

/// W2 between two empirical measures.
///
/// Solved exactly as a transport problem on L = lcm(N, M) unit slots: the
/// larger measure's atoms are split into L/M slots each, the smaller one's
/// atoms become sources of capacity L/N (equal sizes give a plain
/// assignment). Exact for uniform weights. When L exceeds
/// kExactAssignmentLimit, an entropic (Sinkhorn) plan is used and the value is
/// an upper-bound approximation flagged by exact = false.
W2Result wasserstein2_detailed(const EmpiricalMeasure& a, const EmpiricalMeasure& b);

inline double wasserstein2(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  return wasserstein2_detailed(a, b).value;
}

struct ChaosRow {
  int N = 0;
  double w2 = 0.0;
  bool exact = true;
};

struct ChaosTable {
  std::vector<ChaosRow> rows;
  double path_sup = 0.0;  // sup_t |W_t| of the shared path
};

/// Runs the N-particle system for every N in N_list on one common path, with
/// the N-particle data equal to the first N atoms of a single N_max draw, and
/// tabulates W2(mu^N_T, mu^{N_max}_T).
ChaosTable chaos_experiment(const SimConfig& config, const std::vector<int>& N_list, const WienerPath& path,
                            int threads = 1);

struct StabilitySeries {
  std::vector<double> t;
  std::vector<double> w2;
  double max_ratio = 0.0;  // max_t W2(t) / W2(0); 0 when W2(0) = 0
  double path_sup = 0.0;
};

/// W2(mu_t, mu~_t) at every snapshot of two runs sharing `path`.
StabilitySeries stability_experiment(const SimConfig& config, const ParticleEnsemble& init_a,
                                     const ParticleEnsemble& init_b, const WienerPath& path, int threads = 1);

}  // namespace flock
