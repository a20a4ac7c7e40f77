#include "flock/config.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace flock {

std::string to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::None: return "none";
    case NoiseMode::Common: return "common";
    case NoiseMode::Independent: return "independent";
  }
  return "?";
}

NoiseMode parse_noise_mode(const std::string& text) {
  if (text == "none") return NoiseMode::None;
  if (text == "common") return NoiseMode::Common;
  if (text == "independent") return NoiseMode::Independent;
  throw ConfigError("unknown noise_mode '" + text + "' (expected none|common|independent)");
}

void SimConfig::validate() const {
  if (d < 1) throw ConfigError("d must be >= 1");
  if (N < 1) throw ConfigError("N must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  if (!(T >= 0.0)) throw ConfigError("T must be >= 0");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (replicas < 1) throw ConfigError("replicas must be >= 1");
  if (snapshot_every < 1) throw ConfigError("snapshot_every must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const KeyValues& kv, const std::string& key) {
  const auto& text = kv.at(key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' is not a number: '" + text + "'");
  }
}

long long to_integer(const KeyValues& kv, const std::string& key) {
  const auto& text = kv.at(key);
  try {
    std::size_t used = 0;
    const long long value = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' is not an integer: '" + text + "'");
  }
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file '" + file + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

SimConfig config_from_key_values(const KeyValues& kv) {
  static const std::vector<std::string> required = {"d", "N", "T", "dt", "sigma", "weight", "noise_mode"};
  std::string missing;
  for (const auto& key : required)
    if (!kv.contains(key)) missing += (missing.empty() ? "" : ", ") + key;
  if (!missing.empty()) throw ConfigError("missing config keys: " + missing);

  SimConfig c;
  c.d = static_cast<int>(to_integer(kv, "d"));
  c.N = static_cast<int>(to_integer(kv, "N"));
  c.T = to_double(kv, "T");
  c.dt = to_double(kv, "dt");
  c.sigma = to_double(kv, "sigma");
  c.noise_mode = parse_noise_mode(kv.at("noise_mode"));

  const auto& profile = kv.at("weight");
  auto need = [&](const std::string& key) {
    if (!kv.contains(key)) throw ConfigError("missing config keys: " + key + " (required by weight=" + profile + ")");
    return to_double(kv, key);
  };
  if (profile == "constant") {
    c.weight = CommWeight::constant(need("phi0"));
  } else if (profile == "rational") {
    c.weight = CommWeight::rational(need("phi_m"), need("phi_M"));
  } else if (profile == "classical") {
    c.weight = CommWeight::classical(need("beta"), kv.contains("phi_M") ? to_double(kv, "phi_M") : 1.0);
  } else {
    throw ConfigError("unknown weight profile '" + profile + "' (expected constant|rational|classical)");
  }

  if (kv.contains("seed")) c.seed = static_cast<std::uint64_t>(to_integer(kv, "seed"));
  if (kv.contains("replicas")) c.replicas = static_cast<int>(to_integer(kv, "replicas"));
  if (kv.contains("snapshot_every")) c.snapshot_every = static_cast<int>(to_integer(kv, "snapshot_every"));
  c.validate();
  return c;
}

void apply_seed_override(SimConfig& config) {
  if (const char* env = std::getenv("FLOCK_SEED"); env != nullptr && *env != '\0') {
    try {
      config.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("FLOCK_SEED is not an unsigned integer: '") + env + "'");
    }
  }
}

std::string serialize(const SimConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "d=" << c.d << "\nN=" << c.N << "\nT=" << c.T << "\ndt=" << c.dt << "\nsigma=" << c.sigma << "\n";
  switch (c.weight.profile()) {
    case CommWeight::Profile::Constant: os << "weight=constant\nphi0=" << c.weight.phi_M() << "\n"; break;
    case CommWeight::Profile::Rational:
      os << "weight=rational\nphi_m=" << c.weight.phi_m() << "\nphi_M=" << c.weight.phi_M() << "\n";
      break;
    case CommWeight::Profile::Classical:
      os << "weight=classical\nbeta=" << c.weight.beta() << "\nphi_M=" << c.weight.phi_M() << "\n";
      break;
  }
  os << "noise_mode=" << to_string(c.noise_mode) << "\nseed=" << c.seed << "\nreplicas=" << c.replicas
     << "\nsnapshot_every=" << c.snapshot_every << "\n";
  return os.str();
}

std::uint64_t config_hash(const SimConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace flock
