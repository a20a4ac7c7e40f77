#include "flock/core.hpp"

#include <cmath>
#include <sstream>

namespace flock {

CommWeight CommWeight::constant(double phi0) {
  if (!(phi0 >= 0.0) || !std::isfinite(phi0)) throw ConfigError("constant weight needs phi0 >= 0, got " + std::to_string(phi0));
  return {Profile::Constant, phi0, phi0, 0.0, 0.0};
}

CommWeight CommWeight::rational(double phi_m, double phi_M) {
  if (!(phi_m >= 0.0) || !(phi_M >= phi_m) || !std::isfinite(phi_M))
    throw ConfigError("rational weight needs 0 <= phi_m <= phi_M");
  // sup_r 2r/(1+r^2)^2 is attained at r = 1/sqrt(3)
  const double lip = (phi_M - phi_m) * 9.0 / (8.0 * std::sqrt(3.0));
  return {Profile::Rational, phi_m, phi_M, lip, 0.0};
}

CommWeight CommWeight::classical(double beta, double phi_M) {
  if (!(beta >= 0.0) || !(phi_M >= 0.0)) throw ConfigError("classical weight needs beta >= 0, phi_M >= 0");
  // sup_r beta r (1+r^2)^(-beta/2-1) is attained at r^2 = 1/(beta+1)
  const double lip = beta == 0.0 ? 0.0
                                   : phi_M * beta / std::sqrt(beta + 1.0) *
                                         std::pow((beta + 2.0) / (beta + 1.0), -0.5 * (beta + 2.0));
  return {Profile::Classical, 0.0, phi_M, lip, beta};
}

double CommWeight::operator()(double r) const {
  if (!(r >= 0.0)) throw DomainError("communication weight evaluated at negative distance r=" + std::to_string(r));
  return of_squared(r * r);
}

std::string CommWeight::describe() const {
  std::ostringstream os;
  switch (profile_) {
    case Profile::Constant: os << "constant(phi0=" << phi_M_ << ")"; break;
    case Profile::Rational: os << "rational(phi_m=" << phi_m_ << ",phi_M=" << phi_M_ << ")"; break;
    case Profile::Classical: os << "classical(beta=" << beta_ << ",phi_M=" << phi_M_ << ")"; break;
  }
  return os.str();
}

}  // namespace flock
