#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace yamabe {

/// Invalid input parameters (dimension, rates, windows, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Numerical failure inside a solver (step underflow, Newton breakdown, ...).
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An asymptotic fit or extrapolation that did not converge.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SolitonKind { Steady, Shrinker };

std::string_view to_string(SolitonKind kind);
SolitonKind soliton_kind_from_string(std::string_view name);

/// Parameters of a radial soliton u_{beta,lambda} of
///   (n-1)/m Δu^m + β x·∇u + γ u = 0,   m = (n-2)/(n+2).
/// Construct through derive_params(); the invariants between m, gamma and
/// kind are only guaranteed on that path.
struct SolitonParams {
  int n = 3;
  double m = 0.2;
  double beta = 1.0;
  double lambda = 1.0;
  SolitonKind kind = SolitonKind::Steady;
  double gamma = 2.5;

  /// (n-1)(n-2): cylinder level of r^2 u^{1-m}.
  double cylinder_level() const { return (n - 1.0) * (n - 2.0); }
  /// Slope of w(s) = r^2 u^{1-m} in s = ln r for a steady soliton.
  double tail_slope() const { return cylinder_level() / beta; }
  bool operator==(const SolitonParams&) const = default;
};

inline double fast_diffusion_exponent(int n) { return (n - 2.0) / (n + 2.0); }

SolitonParams derive_params(int n, double beta, double lambda, SolitonKind kind);

/// Dilation factor c with u_{beta,lambda}(x) = lambda * u_{1,1}(c x) (steady)
/// or the analogous lambda-scaling at fixed beta (shrinker).
double scaling_factor(const SolitonParams& p);

}  // namespace yamabe
