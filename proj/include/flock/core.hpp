#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace flock {

// Error taxonomy shared by every module. Messages carry the offending values.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a state stops being finite (or exceeds the blowup guard).
/// `step` is the first step index at which the bad state was produced;
/// `replica` is -1 when the failure happened outside a replica loop.
class NumericalBlowup : public std::runtime_error {
 public:
  NumericalBlowup(const std::string& what, std::size_t step, long replica = -1)
      : std::runtime_error(what + " (step " + std::to_string(step) +
                           (replica >= 0 ? ", replica " + std::to_string(replica) : std::string{}) + ")"),
        step_(step),
        replica_(replica) {}

  std::size_t step() const noexcept { return step_; }
  long replica() const noexcept { return replica_; }

 private:
  std::size_t step_;
  long replica_;
};

/// Radial communication profile r -> phi(r).
///
/// Three shipped profiles:
///  - constant:  phi(r) = phi0
///  - rational:  phi(r) = phi_m + (phi_M - phi_m) / (1 + r^2)
///  - classical: phi(r) = phi_M * (1 + r^2)^(-beta/2)   (phi_m = 0)
///
/// All three depend on r only through r^2, which lets the O(N^2) kernels skip
/// the square root.
class CommWeight {
 public:
  enum class Profile { Constant, Rational, Classical };

  static CommWeight constant(double phi0);
  static CommWeight rational(double phi_m, double phi_M);
  static CommWeight classical(double beta, double phi_M = 1.0);

  double operator()(double r) const;

  double of_squared(double r2) const noexcept {
    switch (profile_) {
      case Profile::Constant: return phi_M_;
      case Profile::Rational: return phi_m_ + (phi_M_ - phi_m_) / (1.0 + r2);
      case Profile::Classical: return phi_M_ * std::pow(1.0 + r2, -0.5 * beta_);
    }
    return 0.0;
  }

  Profile profile() const noexcept { return profile_; }
  double phi_m() const noexcept { return phi_m_; }
  double phi_M() const noexcept { return phi_M_; }
  double lip() const noexcept { return lip_; }
  double beta() const noexcept { return beta_; }

  std::string describe() const;

 private:
  CommWeight(Profile p, double phi_m, double phi_M, double lip, double beta)
      : profile_(p), phi_m_(phi_m), phi_M_(phi_M), lip_(lip), beta_(beta) {}

  Profile profile_;
  double phi_m_;
  double phi_M_;
  double lip_;
  double beta_;
};

/// SplitMix64 finaliser; used to derive replica-local seeds.
constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for replica `index` of a run driven by `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix_seed(mix_seed(master) ^ (0x632be59bd9b4e019ULL + index));
}

}  // namespace flock
