#include "yamabe/soliton.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "yamabe/ode.hpp"

namespace yamabe {

namespace {

using Vec2 = Eigen::Vector2d;

std::vector<double> uniform_outputs(double a, double b, double ds) {
  std::vector<double> out;
  const auto k_max = static_cast<long>(std::floor((b - a) / ds + 1e-9));
  out.reserve(k_max + 2);
  for (long k = 0; k <= k_max; ++k) out.push_back(a + k * ds);
  if (b - out.back() > 1e-9 * ds) out.push_back(b);
  else out.back() = b;
  return out;
}

struct Sample {
  double s, w, ws, wss, hs, log_hs;
};

RadialProfile pack_w(const SolitonParams& p, const std::vector<Sample>& rows) {
  RadialProfile prof;
  prof.coord_kind = Coordinate::S;
  prof.rep = Representation::W;
  prof.params = p;
  const auto N = static_cast<Eigen::Index>(rows.size());
  prof.coords.resize(N);
  prof.values.resize(N);
  prof.deriv.resize(N);
  prof.deriv2.resize(N);
  prof.tail_deriv.resize(N);
  prof.log_abs_tail_deriv.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& r = rows[i];
    prof.coords[i] = r.s;
    prof.values[i] = r.w;
    prof.deriv[i] = r.ws;
    prof.deriv2[i] = r.wss;
    prof.tail_deriv[i] = r.hs;
    prof.log_abs_tail_deriv[i] = r.log_hs;
  }
  return prof;
}

}  // namespace

double cylindrical_wss(const SolitonParams& p, double w, double ws) {
  const int n = p.n;
  return (6.0 - n) / 4.0 * ws * ws / w + (n - 2.0 - p.beta * ws / (n - 1.0)) * w;
}

RadialProfile integrate_steady_cylindrical(const SolitonParams& params, const CylindricalOptions& opts) {
  if (params.kind != SolitonKind::Steady)
    throw DomainError("integrate_steady_cylindrical: steady solitons only");
  if (!(opts.s_end > opts.s_start)) throw DomainError("integrate_steady_cylindrical: s_end <= s_start");
  if (!(opts.rtol > 0)) throw DomainError("integrate_steady_cylindrical: tol must be positive");
  if (!(opts.ds_out > 0)) throw DomainError("integrate_steady_cylindrical: ds_out must be positive");

  const int n = params.n;
  const double beta = params.beta;
  const double A = params.tail_slope();
  const double w0 = std::pow(params.lambda, 1.0 - params.m) * std::exp(2.0 * opts.s_start);
  if (!(w0 > 0) || !std::isfinite(w0)) throw DomainError("integrate_steady_cylindrical: s_start under/overflows w");

  const auto outputs = uniform_outputs(opts.s_start, opts.s_end, opts.ds_out);
  std::vector<Sample> rows;
  rows.reserve(outputs.size());

  ode::StepControl<double> ctl;
  ctl.rtol = opts.rtol;
  ctl.atol = 1e-300;
  ctl.h_init = std::min(1e-3, opts.max_step);
  ctl.h_max = opts.max_step;
  ctl.fixed = opts.fixed_step;

  // Phase 1: (w, w_s) until w_s reaches A/2.
  auto f1 = [&](double, const Vec2& y) { return Vec2(y[1], cylindrical_wss(params, y[0], y[1])); };
  auto obs1 = [&](double s, const Vec2& y) {
    if (!(y[0] > 0)) throw SolverError("integrate_steady_cylindrical: w lost positivity at s=" + std::to_string(s));
    const double hs = y[1] - A;
    rows.push_back({s, y[0], y[1], cylindrical_wss(params, y[0], y[1]), hs, std::log(std::abs(hs))});
  };
  auto r1 = ode::integrate<double, 2>(f1, opts.s_start, Vec2(w0, 2.0 * w0), opts.s_end, ctl,
                                       std::span<const double>(outputs), obs1,
                                       [&](double, const Vec2& y) { return y[1] >= 0.5 * A; });
  if (!r1.stopped) return pack_w(params, rows);

  const double s1 = r1.t;
  const double w1 = r1.y[0];
  const double q1 = r1.y[1] - A;
  const double c6 = (6.0 - n) / 4.0;
  const double kb = beta / (n - 1.0);
  std::vector<double> rest;
  for (double s : outputs)
    if (s > s1) rest.push_back(s);
  ctl.h_init = std::min(0.01, opts.max_step);

  if (n < 6) {
    // Phase 2: (w, q), q = w_s - A; the A-term cancels analytically.
    auto f2 = [&](double, const Vec2& y) {
      const double ws = A + y[1];
      return Vec2(ws, c6 * ws * ws / y[0] - kb * y[1] * y[0]);
    };
    auto obs2 = [&](double s, const Vec2& y) {
      if (!(y[0] > 0)) throw SolverError("integrate_steady_cylindrical: w lost positivity at s=" + std::to_string(s));
      const double ws = A + y[1];
      const double wss = c6 * ws * ws / y[0] - kb * y[1] * y[0];
      rows.push_back({s, y[0], ws, wss, y[1], std::log(std::abs(y[1]))});
    };
    ode::integrate<double, 2>(f2, s1, Vec2(w1, q1), opts.s_end, ctl, std::span<const double>(rest), obs2);
  } else {
    // Phase 2: (w, l), l = log(-q) with q < 0; q itself underflows for n = 6.
    if (!(q1 < 0)) throw SolverError("integrate_steady_cylindrical: w_s overshoot for n >= 6");
    auto lrate = [&](double w, double l) {
      const double q = -std::exp(l);
      const double ws = A + q;
      if (n == 6) return -kb * w;  // exp(-l) overflows once q underflows
      return -c6 * ws * ws * std::exp(-l) / w - kb * w;
    };
    auto f2 = [&](double, const Vec2& y) { return Vec2(A - std::exp(y[1]), lrate(y[0], y[1])); };
    auto obs2 = [&](double s, const Vec2& y) {
      if (!(y[0] > 0)) throw SolverError("integrate_steady_cylindrical: w lost positivity at s=" + std::to_string(s));
      const double q = -std::exp(y[1]);  // may be -0.0: the sign survives underflow
      const double wss = lrate(y[0], y[1]) * q;
      rows.push_back({s, y[0], A + q, wss, q, y[1]});
    };
    ode::integrate<double, 2>(f2, s1, Vec2(w1, std::log(-q1)), opts.s_end, ctl, std::span<const double>(rest),
                              obs2);
  }
  return pack_w(params, rows);
}

RadialProfile integrate_steady_cylindrical(const SolitonParams& params, double s_start, double s_end, double tol) {
  CylindricalOptions o;
  o.s_start = s_start;
  o.s_end = s_end;
  o.rtol = tol;
  return integrate_steady_cylindrical(params, o);
}

double origin_series_coefficient(const SolitonParams& p) {
  return -p.gamma * std::pow(p.lambda, 2.0 - p.m) / (2.0 * p.n * (p.n - 1.0));
}

RadialProfile integrate_radial(const SolitonParams& params, double r_max, const RadialOptions& opts) {
  if (!(r_max > 0)) throw DomainError("integrate_radial: r_max must be positive");
  if (!(opts.rtol > 0)) throw DomainError("integrate_radial: tol must be positive");
  const int n = params.n;
  const double m = params.m, beta = params.beta, gamma = params.gamma, lambda = params.lambda;
  const double a2 = origin_series_coefficient(params);
  // next series term is O(r^4/L^4) relative, L^2 = lambda/|a2|
  const double r0 = std::min(r_max, std::sqrt(lambda / std::abs(a2)) * std::pow(opts.rtol, 0.25));

  std::vector<double> nodes;
  if (opts.nodes) {
    nodes = *opts.nodes;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] < 0 || (i > 0 && !(nodes[i] > nodes[i - 1])))
        throw DomainError("integrate_radial: nodes must be nonnegative and strictly increasing");
    }
    if (!nodes.empty() && nodes.back() > r_max) throw DomainError("integrate_radial: node beyond r_max");
  } else {
    nodes.push_back(0.0);
    for (double s : uniform_outputs(std::log(r0), std::log(r_max), opts.ds_out)) nodes.push_back(std::exp(s));
    nodes.back() = r_max;
  }

  const auto N = static_cast<Eigen::Index>(nodes.size());
  RadialProfile prof;
  prof.coord_kind = Coordinate::R;
  prof.rep = Representation::U;
  prof.params = params;
  prof.coords = Eigen::Map<const Eigen::VectorXd>(nodes.data(), N);
  prof.values.resize(N);
  prof.deriv.resize(N);
  prof.deriv2.resize(N);

  Eigen::Index i = 0;
  for (; i < N && nodes[i] <= r0; ++i) {
    const double r = nodes[i];
    prof.values[i] = lambda + a2 * r * r;
    prof.deriv[i] = 2.0 * a2 * r;
    prof.deriv2[i] = 2.0 * a2;
  }
  if (i < N) {
    // State (ln u, p = r u_r / u) in s = ln r.
    auto rhs = [&](double s, const Vec2& y) {
      const double p = y[1];
      const double w = std::exp(2.0 * s + (1.0 - m) * y[0]);
      return Vec2(p, -m * p * p - (n - 2.0) * p - (beta * p + gamma) * w / (n - 1.0));
    };
    const double u0 = lambda + a2 * r0 * r0;
    const Vec2 y0(std::log(u0), 2.0 * a2 * r0 * r0 / u0);
    std::vector<double> outs;
    for (Eigen::Index j = i; j < N; ++j) outs.push_back(std::log(nodes[j]));
    Eigen::Index k = i;
    auto obs = [&](double s, const Vec2& y) {
      const double r = std::exp(s);
      const double u = std::exp(y[0]);
      if (!(u > 0)) throw SolverError("integrate_radial: u reached 0 at r=" + std::to_string(r));
      const Vec2 d = rhs(s, y);
      prof.values[k] = u;
      prof.deriv[k] = d[0] * u / r;
      prof.deriv2[k] = u / (r * r) * (d[1] + d[0] * d[0] - d[0]);
      ++k;
    };
    ode::StepControl<double> ctl;
    ctl.rtol = opts.rtol;
    ctl.atol = 1e-300;
    ctl.h_init = 1e-3;
    ctl.h_max = 0.5;
    const double s0 = std::log(r0);
    if (outs.front() <= s0) {  // the first node coincides with r0
      obs(s0, y0);
      outs.erase(outs.begin());
    }
    if (!outs.empty())
      ode::integrate<double, 2>(rhs, s0, y0, outs.back(), ctl, std::span<const double>(outs), obs);
  }
  for (Eigen::Index j = 1; j < N; ++j)
    if (!(prof.values[j] < prof.values[j - 1]))
      throw SolverError("integrate_radial: profile not strictly decreasing near r=" + std::to_string(nodes[j]));
  return prof;
}

RadialProfile apply_scaling(const RadialProfile& profile, const SolitonParams& target) {
  const auto& src = profile.params;
  if (profile.rep != Representation::U || profile.coord_kind != Coordinate::R)
    throw DomainError("apply_scaling: u(r) profiles only");
  if (src.kind != target.kind || src.n != target.n) throw DomainError("apply_scaling: kind or dimension mismatch");
  if (src.kind == SolitonKind::Shrinker && src.beta != target.beta)
    throw DomainError("apply_scaling: shrinkers only rescale in lambda");
  if (src == target) return profile;
  // u_t(x) = (lt/ls) u_s(x c_t/c_s)
  const double ratio = scaling_factor(target) / scaling_factor(src);
  const double amp = target.lambda / src.lambda;
  RadialProfile out = profile;
  out.params = target;
  out.coords = profile.coords / ratio;
  out.values = amp * profile.values;
  out.deriv = amp * ratio * profile.deriv;
  if (profile.deriv2.size() == profile.size()) out.deriv2 = amp * ratio * ratio * profile.deriv2;
  return out;
}

SignStructureReport check_sign_structure(const RadialProfile& profile, std::pair<double, double> exp_window,
                                         double exp_eps) {
  if (profile.rep != Representation::W || profile.params.kind != SolitonKind::Steady)
    throw DomainError("check_sign_structure: steady w-profile required");
  if (profile.deriv2.size() != profile.size() || profile.tail_deriv.size() != profile.size())
    throw DomainError("check_sign_structure: profile lacks second-derivative data");
  SignStructureReport rep;
  const int n = rep.n = profile.params.n;
  const auto N = profile.size();
  // a zero keeps the sign bit of the underflowed product
  auto positive = [](double x) { return x > 0 || (x == 0 && !std::signbit(x)); };
  auto negative = [](double x) { return x < 0 || (x == 0 && std::signbit(x)); };
  auto violate = [&](Eigen::Index i) {
    ++rep.violations;
    if (rep.violation_coords.size() < 32) rep.violation_coords.push_back(profile.coords[i]);
  };

  for (Eigen::Index i = 1; i < N; ++i)
    if (positive(profile.deriv2[i]) != positive(profile.deriv2[i - 1])) ++rep.sign_changes;

  if (n >= 6) {
    for (Eigen::Index i = 0; i < N; ++i)
      if (!positive(profile.deriv2[i]) || !negative(profile.tail_deriv[i]))
        violate(i);
    if (n == 6) {
      // log|h_s| = a s^2 + b s + c on the window; a is the Gaussian rate
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < N; ++i)
        if (profile.coords[i] >= exp_window.first && profile.coords[i] <= exp_window.second) idx.push_back(i);
      if (idx.size() < 4) throw DomainError("check_sign_structure: exponential window not covered by the mesh");
      Eigen::MatrixXd X(idx.size(), 3);
      Eigen::VectorXd y(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const double s = profile.coords[idx[k]];
        X.row(k) << s * s, s, 1.0;
        y[k] = profile.log_abs_tail_deriv[idx[k]];
      }
      const Eigen::Vector3d c = X.colPivHouseholderQr().solve(y);
      rep.log_hs_slope = c[0];
      if (!(c[0] >= -(4.0 + exp_eps) / 2 && c[0] <= -(4.0 - exp_eps) / 2)) {
        rep.message = "n=6: log|h_s| curvature in s^2 outside the exponential band";
        return rep;
      }
    }
    rep.passed = rep.violations == 0;
    if (!rep.passed) rep.message = "sign violation(s) for n >= 6";
    return rep;
  }

  Eigen::Index first = -1;
  for (Eigen::Index i = 1; i < N; ++i)
    if (negative(profile.deriv2[i]) && positive(profile.deriv2[i - 1])) {
      first = i;
      break;
    }
  if (first < 0) {
    rep.message = "no sign change of w_ss located";
    return rep;
  }
  rep.s0 = profile.coords[first];
  rep.s0_bracket = std::make_pair(profile.coords[first - 1], profile.coords[first]);
  for (Eigen::Index i = first; i < N; ++i)
    if (!negative(profile.deriv2[i]) || !positive(profile.tail_deriv[i])) violate(i);
  rep.passed = rep.violations == 0 && rep.sign_changes == 1;
  if (!rep.passed) rep.message = "w_ss < 0, h_s > 0 fails beyond s0";
  return rep;
}

ClaimReport check_claim_asymptotics(const RadialProfile& profile, double rel_tol_log, double rel_tol_ratio) {
  if (profile.rep != Representation::U || profile.params.kind != SolitonKind::Steady)
    throw DomainError("check_claim_asymptotics: steady u-profile required");
  if (profile.deriv2.size() != profile.size()) throw DomainError("check_claim_asymptotics: no second derivative");
  const auto& p = profile.params;
  const auto i = profile.size() - 1;
  const double r = profile.coords[i], u = profile.values[i], ur = profile.deriv[i], urr = profile.deriv2[i];
  if (!(r > 1)) throw DomainError("check_claim_asymptotics: outer node must lie beyond r = 1");
  const double m = p.m;
  // Δu^m = m u^{m-1}(u_rr + (n-1)u_r/r) + m(m-1)u^{m-2}u_r^2
  const double lap = m * std::pow(u, m - 1) * (urr + (p.n - 1.0) * ur / r) + m * (m - 1) * std::pow(u, m - 2) * ur * ur;
  ClaimReport rep;
  rep.r_outer = r;
  rep.log_derivative = r * ur / u;
  rep.log_derivative_limit = -2.0 / (1.0 - m);
  rep.laplacian_ratio = -(p.n - 1.0) / m * lap * std::log(r) / (p.beta * u / (1.0 - m));
  rep.passed = std::abs(rep.log_derivative / rep.log_derivative_limit - 1.0) <= rel_tol_log &&
               std::abs(rep.laplacian_ratio - 1.0) <= rel_tol_ratio;
  return rep;
}

}  // namespace yamabe
