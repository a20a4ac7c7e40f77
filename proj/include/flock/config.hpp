#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "flock/core.hpp"

namespace flock {

enum class NoiseMode { None, Common, Independent };

std::string to_string(NoiseMode mode);
NoiseMode parse_noise_mode(const std::string& text);

struct SimConfig {
  int d = 1;
  int N = 1;
  double T = 1.0;
  double dt = 0.01;
  double sigma = 0.0;
  CommWeight weight = CommWeight::constant(1.0);
  NoiseMode noise_mode = NoiseMode::Common;
  std::uint64_t seed = 1;
  int replicas = 1;
  int snapshot_every = 1;  // steps between recorded snapshots

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

/// Raw key=value pairs; '#' starts a comment, blank lines are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues load_key_values(const std::string& file);

/// Builds a SimConfig from key=value pairs.
///
/// Required keys: d, N, T, dt, sigma, weight, noise_mode.
/// Weight keys: weight=constant (phi0), weight=rational (phi_m, phi_M),
/// weight=classical (beta, phi_M). Optional: seed, replicas, snapshot_every.
/// A missing-key error lists every missing key at once.
SimConfig config_from_key_values(const KeyValues& kv);

/// FLOCK_SEED in the environment, when set, overrides the configured seed.
void apply_seed_override(SimConfig& config);

/// Canonical key=value serialisation (round-trips through config_from_key_values).
std::string serialize(const SimConfig& config);

/// FNV-1a hash of the canonical serialisation.
std::uint64_t config_hash(const SimConfig& config);

}  // namespace flock
