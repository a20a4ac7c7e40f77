#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace flock {

struct Moments {
  double m0 = 0.0;
  Eigen::VectorXd m1;
  double m2 = 0.0;
};

/// Time series of the reduced observables of one run.
///
/// `w` holds the driving path value at each time (0 when the run has no
/// common path); `path_seed` identifies that path.
struct MomentSeries {
  std::vector<double> t;
  std::vector<double> m0;
  std::vector<Eigen::VectorXd> m1;
  std::vector<double> m2;
  std::vector<double> e;  // fluctuation energy about the initial mean velocity
  std::vector<double> supp_x;
  std::vector<double> supp_v;
  std::vector<double> w;
  std::uint64_t path_seed = 0;

  std::size_t size() const noexcept { return t.size(); }

  void push(double time, const Moments& m, double energy, double sx, double sv, double wt) {
    t.push_back(time);
    m0.push_back(m.m0);
    m1.push_back(m.m1);
    m2.push_back(m.m2);
    e.push_back(energy);
    supp_x.push_back(sx);
    supp_v.push_back(sv);
    w.push_back(wt);
  }
};

enum class SeriesField { M2, Energy };

inline const std::vector<double>& field_of(const MomentSeries& s, SeriesField f) {
  return f == SeriesField::M2 ? s.m2 : s.e;
}

}  // namespace flock
