#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "flock/core.hpp"
#include "flock/particle.hpp"
#include "flock/wiener.hpp"

namespace flock {

/// Node-based rectangle [x_min,x_max] x [v_min,v_max] with nx, nv cells
/// (nx+1, nv+1 nodes including the edges). Quadrature is the tensor trapezoid rule.
struct PhaseGrid {
  double x_min = -1.0, x_max = 1.0;
  double v_min = -1.0, v_max = 1.0;
  int nx = 8, nv = 8;

  static PhaseGrid make(double x_min, double x_max, double v_min, double v_max, int nx, int nv);

  double hx() const noexcept { return (x_max - x_min) / nx; }
  double hv() const noexcept { return (v_max - v_min) / nv; }
  double x(int i) const noexcept { return x_min + i * hx(); }
  double v(int j) const noexcept { return v_min + j * hv(); }
  double weight_x(int i) const noexcept { return (i == 0 || i == nx) ? 0.5 * hx() : hx(); }
  double weight_v(int j) const noexcept { return (j == 0 || j == nv) ? 0.5 * hv() : hv(); }
  bool contains(double xq, double vq) const noexcept {
    return xq >= x_min && xq <= x_max && vq >= v_min && vq <= v_max;
  }
};

/// Density f(x_i, v_j) at one time; f(i, j) with i the x index.
struct KineticState {
  PhaseGrid grid;
  Eigen::MatrixXd f;
  double t = 0.0;

  /// Bilinear interpolation; zero outside the grid.
  double at(double x, double v) const;
  double sup_norm() const { return f.cwiseAbs().maxCoeff(); }
};

using KineticTrajectory = std::vector<KineticState>;

KineticState sample_density(const PhaseGrid& grid, const std::function<double(double, double)>& density,
                            double t = 0.0);

/// Discrete convolution with a C∞ bump of radius eps in (x, v), then mass
/// renormalised to 1 and the mean velocity shifted to 0.
KineticState mollify_initial(const KineticState& raw, double eps);

/// Force field frozen at one density: F(x, v) = B(x) - v A(x), with
/// A(x) = ∫φ(|x*-x|) f dx* dv*, B(x) = ∫φ(|x*-x|) v* f dx* dv*, so ∂_v F = -A.
class FrozenField {
 public:
  FrozenField() = default;
  FrozenField(const KineticState& state, const CommWeight& w);

  /// (A(x), B(x)) by trapezoid quadrature over the x nodes.
  std::pair<double, double> coefficients(double x) const;
  double force(double x, double v) const {
    const auto [a, b] = coefficients(x);
    return b - v * a;
  }
  double divergence(double x) const { return -coefficients(x).first; }

 private:
  std::vector<double> xs_;
  std::vector<double> mass_;  // x-weight * ∫ f dv at node x_i
  std::vector<double> momentum_;
  CommWeight weight_ = CommWeight::constant(0.0);
};

/// Checked single-point evaluations (query must lie on the grid).
double field_Fa(const KineticState& state, const CommWeight& w, double x, double v);
double div_v_Fa(const KineticState& state, const CommWeight& w, double x);

struct CharacteristicStep {
  double x = 0.0;
  double v = 0.0;
  bool clamped = false;  // the Heun predictor left the extended hull
};

/// Heun step of dX = V dt, dV = F(X,V) dt - σ V ∘ dW with the field at the
/// start (`begin`) and end (`end`) of the step. A negative dt (with the
/// matching negated increment) traces the characteristic backwards.
/// `hull` bounds |X| and |V|; points beyond it are clamped and flagged.
CharacteristicStep characteristics_step(double x, double v, const FrozenField& begin, const FrozenField& end,
                                        double sigma, double dW, double dt, double hull = 1e6);

inline CharacteristicStep characteristics_step(double x, double v, const FrozenField& field, double sigma, double dW,
                                               double dt, double hull = 1e6) {
  return characteristics_step(x, v, field, field, sigma, dW, dt, hull);
}

/// One iterate of the successive approximation: the density transported by
/// the field frozen at the previous iterate, sampled at every path time.
struct Iterate {
  KineticTrajectory states;
  std::vector<Eigen::MatrixXd> foot_x;  // backward foot of each node, per time
  std::vector<Eigen::MatrixXd> foot_v;
  std::size_t exits = 0;  // nodes whose backward characteristic left the grid
};

/// f^n(t_k, node) = f_in(foot) * exp(∫_0^{t_k} A(s, X_s) ds + σ W_{t_k}),
/// with the foot traced backwards by time-reversed Heun through the fields of
/// `previous` and the integral evaluated by the trapezoid rule along the way.
Iterate successive_step(const KineticTrajectory& previous, const KineticState& f_in, const CommWeight& w,
                        double sigma, const WienerPath& path, int threads = 1);

struct IterationDiagnostics {
  std::vector<double> f_gap;     // sup_{t,node} |f^n - f^{n-1}|
  std::vector<double> flow_gap;  // sup over supported nodes of |foot^n - foot^{n-1}|
  std::vector<double> delta;     // f_gap² + flow_gap²
  int iterations = 0;
  bool converged = false;
  int converged_at = 0;  // first iterate with f_gap < tol, 0 if none
  std::size_t exits = 0;
};

struct FixedPointResult {
  KineticTrajectory states;
  KineticTrajectory first;  // f^1, transported by the field of f_in
  IterationDiagnostics diagnostics;
};

/// Iterates successive_step from f^0 = f_in (frozen in time) until the f gap
/// drops below `tol` or `max_iter` iterates were produced. Non-convergence is
/// reported through diagnostics.converged, with the last iterate returned.
/// With min_iter > 1 the iteration continues past convergence until min_iter
/// iterates exist, so the gap sequence can be studied below the tolerance.
FixedPointResult solve_fixed_point(const KineticState& f_in, const CommWeight& w, double sigma,
                                   const WienerPath& path, double tol, int max_iter, int threads = 1,
                                   int min_iter = 1);

/// One semi-Lagrangian step of length dt (a whole number of path steps) from
/// state.t: backward characteristics through the field frozen at `state`,
/// bilinear interpolation at the foot, and the factor exp(∫A ds + σ ΔW).
KineticState semi_lagrangian_evolve(const KineticState& state, const CommWeight& w, double sigma,
                                    const WienerPath& path, double dt, int threads = 1);

/// Repeated semi_lagrangian_evolve from t=0 to the path horizon; the
/// trajectory holds the state at every multiple of dt.
KineticTrajectory semi_lagrangian_solve(const KineticState& f_in, const CommWeight& w, double sigma,
                                        const WienerPath& path, double dt, int threads = 1);

/// Pathwise support envelopes for the iterates, for data supported in the
/// ball of radius `radius` in (x, v) with second moment m2_initial.
struct SupportEnvelope {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> v;

  double max_x() const;
  double max_v() const;
};

SupportEnvelope support_envelope(double radius, double m2_initial, double phi_M, double sigma, const WienerPath& path);

/// Throws ConfigError when the grid does not contain the envelopes.
void validate_grid(const PhaseGrid& grid, const SupportEnvelope& env);

/// N i.i.d. (x, v) draws from the bilinear interpolant of `state` by
/// rejection on the box of nodes with f > 0; velocities are then shifted to
/// zero mean. Returned as a 1 x N ensemble.
ParticleEnsemble sample_particles(const KineticState& state, int N, std::uint64_t seed);

/// Radius of the smallest origin-centred ball containing the nodes where f > threshold.
double support_radius(const KineticState& state, double threshold);

}  // namespace flock
