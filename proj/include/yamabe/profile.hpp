#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <string>

#include "yamabe/params.hpp"

namespace yamabe {

enum class Coordinate { R, S };        ///< mesh in r >= 0 or in s = ln r
enum class Representation { U, W };    ///< values are u(r) or w(s) = r^2 u^{1-m}

/// A radial function sampled on a strictly increasing mesh.
///
/// `deriv` and `deriv2` are first and second derivatives with respect to the
/// mesh coordinate. For the steady w-representation `tail_deriv` holds
/// h_s = w_s - (n-1)(n-2)/beta computed without cancellation and
/// `log_abs_tail_deriv` its logarithm, which stays finite after h_s itself
/// underflows (n = 6 decays like exp(-2 s^2)).
struct RadialProfile {
  Coordinate coord_kind = Coordinate::R;
  Representation rep = Representation::U;
  Eigen::VectorXd coords;
  Eigen::VectorXd values;
  Eigen::VectorXd deriv;
  Eigen::VectorXd deriv2;
  Eigen::VectorXd tail_deriv;
  Eigen::VectorXd log_abs_tail_deriv;
  SolitonParams params;

  Eigen::Index size() const { return coords.size(); }

  /// Throws DomainError when the mesh/positivity invariants are violated.
  void validate() const;

  /// Index of the last node with coords <= x (clamped to the valid range).
  Eigen::Index locate(double x) const;
};

/// Columnar CSV: a schema comment line, then `r,value,deriv` or `s,value,deriv`.
void write_profile_csv(std::ostream& out, const RadialProfile& p);
RadialProfile read_profile_csv(std::istream& in, const SolitonParams& params);

/// JSON sidecar with n, beta, lambda, kind, gamma, m.
std::string params_json(const SolitonParams& p);
SolitonParams params_from_json(const std::string& text);

}  // namespace yamabe
