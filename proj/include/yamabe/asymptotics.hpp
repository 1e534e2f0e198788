#pragma once

#include <optional>
#include <utility>

#include "yamabe/profile.hpp"

namespace yamabe {

/// Tail constants of a soliton profile.
///
/// Steady: w(s) = A s + K + C3/s + o(1/s) with K the additive constant of w
/// itself. The normalized constant K/A is what enters the κ relation.
/// Shrinker: (n-1)(n-2) - r^2 v^{1-m} = B r^{-gamma_decay} + ...
struct AsymptoticsFit {
  double A = 0;
  double K = 0;
  double C3 = 0;
  double hs_limit = 0;                   ///< extrapolated lim s^2 h_s = -C3
  std::optional<double> B;
  std::optional<double> gamma_decay;
  std::pair<double, double> fit_window{0, 0};
  double residual = 0;                   ///< max |data - model| on fit_window
  double extrapolation_error = 0;        ///< last Richardson correction of K

  double normalized_K() const { return K / A; }
};

struct SteadyFitOptions {
  int levels = 3;               ///< windows [a/2^k, b/2^k], k < levels
  double rel_tol = 1e-3;        ///< max accepted Richardson correction of K and s^2 h_s, relative to A
};

/// Least squares in {s, 1, 1/s} (or {s, 1} for n = 6) on `window` and on
/// successively halved windows, then Neville extrapolation in 1/b.
/// Throws FitError if the last extrapolation correction exceeds rel_tol * A.
AsymptoticsFit fit_steady_asymptotics(const RadialProfile& profile, std::pair<double, double> window,
                                      const SteadyFitOptions& opts = {});

/// Default window [s_end/2, s_end].
AsymptoticsFit fit_steady_asymptotics(const RadialProfile& profile);

/// Log-linear fit of (n-1)(n-2) - r^2 v^{1-m} over r in `window`.
/// Throws FitError if the deficit is not positive and decreasing there.
AsymptoticsFit fit_shrinker_tail(const RadialProfile& profile, std::pair<double, double> window);

/// Linearized shrinker tail rate: the smaller root of
/// mu^2 - beta (n-2) mu + (n-2) = 0, or nullopt when the roots are complex.
std::optional<double> shrinker_linear_decay(int n, double beta);

/// κ(n) from a steady soliton with β = λ = 1, integrated to s = s_end at
/// two tolerances; throws FitError when the two disagree beyond `precision`.
double estimate_kappa(int n, double precision, double s_end = 200.0);

/// κ(n) relation: K/A = 2 ln λ/(n+2) + ln β/2 + κ(n).
double kappa_from_fit(const SolitonParams& p, const AsymptoticsFit& fit);
double lambda_from_tail(int n, double beta, double normalized_K, double kappa);

/// Frozen κ(n) values (β = λ = 1); nullopt outside the table.
std::optional<double> kappa_fixture(int n);

}  // namespace yamabe
