#pragma once

// Adaptive Dormand-Prince 5(4) integrator for small dense systems.
//
// Header-only and templated on the scalar and the (fixed) state dimension so
// the right-hand side can be written against Eigen vectors directly.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "yamabe/params.hpp"

namespace yamabe::ode {

template <typename Scalar>
struct StepControl {
  Scalar rtol = Scalar(1e-10);
  Scalar atol = Scalar(1e-300);
  Scalar h_init = Scalar(1e-3);
  Scalar h_min = Scalar(1e-14);
  Scalar h_max = std::numeric_limits<Scalar>::infinity();
  /// Take steps of exactly h_max (last one clipped); no error control.
  bool fixed = false;
  std::size_t max_steps = 50'000'000;
};

template <typename Scalar, int Dim>
struct Result {
  Scalar t{};
  Eigen::Matrix<Scalar, Dim, 1> y;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  bool stopped = false;  ///< stop predicate fired before t_end
};

namespace detail {
// Dormand & Prince (1980) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace detail

/// Integrates y' = f(t, y) from t0 to t1 (t1 > t0).
///
/// If `outputs` is non-empty (sorted, inside [t0, t1]) steps are clipped to
/// land on every output point and `observe(t, y)` is called there; otherwise
/// `observe` is called after every accepted step. `stop(t, y)` is checked
/// after each accepted step and ends the integration early when true.
template <typename Scalar, int Dim, typename Rhs, typename Observer, typename Stop>
Result<Scalar, Dim> integrate(Rhs&& f, Scalar t0, Eigen::Matrix<Scalar, Dim, 1> y0, Scalar t1,
                              const StepControl<Scalar>& ctl, std::span<const Scalar> outputs,
                              Observer&& observe, Stop&& stop) {
  using Vec = Eigen::Matrix<Scalar, Dim, 1>;
  using namespace detail;
  if (!(t1 > t0)) throw DomainError("ode::integrate: empty interval");

  Result<Scalar, Dim> res;
  Scalar t = t0;
  Vec y = std::move(y0);
  Scalar h = ctl.fixed ? ctl.h_max : std::min(ctl.h_init, ctl.h_max);
  std::size_t next_out = 0;
  while (next_out < outputs.size() && outputs[next_out] < t0) ++next_out;
  if (next_out < outputs.size() && outputs[next_out] == t0) observe(t, y), ++next_out;

  Vec k1 = f(t, y), k2, k3, k4, k5, k6, k7;
  Scalar err_prev = Scalar(1e-4);
  const Scalar safety = Scalar(0.9);

  while (t < t1) {
    if (res.accepted + res.rejected >= ctl.max_steps)
      throw SolverError("ode::integrate: step budget exhausted at t=" + std::to_string(t));
    Scalar target = t1;
    if (next_out < outputs.size()) target = std::min(target, outputs[next_out]);
    bool clipped = false;
    Scalar h_try = h;
    if (t + h_try >= target) {
      h_try = target - t;
      clipped = true;
    }

    k2 = f(t + c2 * h_try, y + h_try * (a21 * k1));
    k3 = f(t + c3 * h_try, y + h_try * (a31 * k1 + a32 * k2));
    k4 = f(t + c4 * h_try, y + h_try * (a41 * k1 + a42 * k2 + a43 * k3));
    k5 = f(t + c5 * h_try, y + h_try * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    k6 = f(t + h_try, y + h_try * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    Vec y_new = y + h_try * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    k7 = f(t + h_try, y_new);

    Scalar err = 0;
    if (!ctl.fixed) {
      Vec e = h_try * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      for (int i = 0; i < e.size(); ++i) {
        Scalar sc = ctl.atol + ctl.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        Scalar r = std::abs(e[i] / sc);
        // NaN must not slip through std::max
        if (!(r <= std::numeric_limits<Scalar>::max()) || !std::isfinite(y_new[i])) r = Scalar(1e10);
        err = std::max(err, r);
      }
    }

    if (err <= 1 || ctl.fixed) {
      t = clipped ? target : t + h_try;
      y = std::move(y_new);
      k1 = k7;
      ++res.accepted;
      if (!y.allFinite()) throw SolverError("ode::integrate: non-finite state at t=" + std::to_string(t));
      if (outputs.empty()) {
        observe(t, y);
      } else if (clipped && next_out < outputs.size() && target == outputs[next_out]) {
        observe(t, y);
        ++next_out;
      }
      if (stop(t, y)) {
        res.stopped = true;
        break;
      }
      if (!ctl.fixed) {
        // PI controller (Hairer-Wanner II, IV.2)
        Scalar e_use = std::max(err, Scalar(1e-10));
        Scalar fac = safety * std::pow(e_use, Scalar(-0.7 / 5)) * std::pow(err_prev, Scalar(0.4 / 5));
        fac = std::clamp(fac, Scalar(0.2), Scalar(5));
        err_prev = std::max(err, Scalar(1e-4));
        // a clipped step says nothing about the natural step size
        if (!clipped || h_try >= h) h = std::min(h_try * fac, ctl.h_max);
      }
    } else {
      ++res.rejected;
      Scalar fac = std::max(Scalar(0.2), safety * std::pow(err, Scalar(-1.0 / 5)));
      h = h_try * fac;
      if (h < ctl.h_min)
        throw SolverError("ode::integrate: step size underflow at t=" + std::to_string(t));
    }
  }
  res.t = t;
  res.y = y;
  return res;
}

template <typename Scalar, int Dim, typename Rhs, typename Observer>
Result<Scalar, Dim> integrate(Rhs&& f, Scalar t0, Eigen::Matrix<Scalar, Dim, 1> y0, Scalar t1,
                              const StepControl<Scalar>& ctl, std::span<const Scalar> outputs,
                              Observer&& observe) {
  return integrate(std::forward<Rhs>(f), t0, std::move(y0), t1, ctl, outputs,
                   std::forward<Observer>(observe), [](Scalar, const auto&) { return false; });
}

}  // namespace yamabe::ode
