#include "yamabe/asymptotics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "yamabe/soliton.hpp"

namespace yamabe {

namespace {

// Value at x = 0 of the interpolating polynomial through (x_k, v_k).
double neville_at_zero(const std::vector<double>& x, std::vector<double> v) {
  const auto N = v.size();
  for (std::size_t level = 1; level < N; ++level)
    for (std::size_t i = 0; i + level < N; ++i)
      v[i] = (x[i + level] * v[i] - x[i] * v[i + 1]) / (x[i + level] - x[i]);
  return v[0];
}

struct WindowFit {
  double A, K, C3, residual;
};

WindowFit least_squares_window(const RadialProfile& p, double a, double b, bool two_term) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p.coords[i] >= a && p.coords[i] <= b) idx.push_back(i);
  const int cols = two_term ? 2 : 3;
  if (static_cast<int>(idx.size()) < 2 * cols)
    throw FitError("fit_steady_asymptotics: window [" + std::to_string(a) + ", " + std::to_string(b) +
                   "] holds too few nodes");
  Eigen::MatrixXd X(idx.size(), cols);
  Eigen::VectorXd y(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double s = p.coords[idx[k]];
    X(k, 0) = s;
    X(k, 1) = 1.0;
    if (!two_term) X(k, 2) = 1.0 / s;
    y[k] = p.values[idx[k]];
  }
  const Eigen::VectorXd c = X.colPivHouseholderQr().solve(y);
  WindowFit f{c[0], c[1], two_term ? 0.0 : c[2], 0.0};
  f.residual = (X * c - y).cwiseAbs().maxCoeff();
  return f;
}

}  // namespace

AsymptoticsFit fit_steady_asymptotics(const RadialProfile& profile, std::pair<double, double> window,
                                      const SteadyFitOptions& opts) {
  if (profile.rep != Representation::W || profile.params.kind != SolitonKind::Steady)
    throw DomainError("fit_steady_asymptotics: steady w-profile required");
  auto [a, b] = window;
  if (!(b > a) || a <= 0) throw DomainError("fit_steady_asymptotics: bad window");
  if (a < profile.coords[0] || b > profile.coords[profile.size() - 1])
    throw DomainError("fit_steady_asymptotics: window outside the mesh");
  if (opts.levels < 1) throw DomainError("fit_steady_asymptotics: need at least one level");
  const bool two_term = profile.params.n == 6;
  const bool have_hs = profile.tail_deriv.size() == profile.size();

  std::vector<double> x, As, Ks, Cs, Hs;
  AsymptoticsFit out;
  out.fit_window = window;
  for (int k = 0; k < opts.levels; ++k) {
    const double sc = std::ldexp(1.0, -k);
    const double ak = a * sc, bk = b * sc;
    if (ak < profile.coords[0]) throw FitError("fit_steady_asymptotics: halved window leaves the mesh");
    const auto f = least_squares_window(profile, ak, bk, two_term);
    if (k == 0) out.residual = f.residual;
    x.push_back(1.0 / bk);
    As.push_back(f.A);
    Ks.push_back(f.K);
    Cs.push_back(f.C3);
    if (have_hs) {
      const auto i = profile.locate(bk);
      const double s = profile.coords[i];
      Hs.push_back(s * s * profile.tail_deriv[i]);
    }
  }
  out.A = neville_at_zero(x, As);
  out.K = neville_at_zero(x, Ks);
  out.C3 = neville_at_zero(x, Cs);
  if (have_hs) out.hs_limit = neville_at_zero(x, Hs);
  if (opts.levels >= 2) {
    std::vector<double> x1(x.begin(), x.end() - 1);
    const double K1 = neville_at_zero(x1, std::vector<double>(Ks.begin(), Ks.end() - 1));
    out.extrapolation_error = std::abs(out.K - K1);
    double hs_err = 0;
    if (have_hs) hs_err = std::abs(out.hs_limit - neville_at_zero(x1, std::vector<double>(Hs.begin(), Hs.end() - 1)));
    const double tol = opts.rel_tol * std::abs(out.A);
    if (!(out.extrapolation_error <= tol) || !(hs_err <= tol))
      throw FitError("fit_steady_asymptotics: extrapolation did not converge (dK=" +
                     std::to_string(out.extrapolation_error) + ", d(s^2 h_s)=" + std::to_string(hs_err) + ")");
  }
  return out;
}

AsymptoticsFit fit_steady_asymptotics(const RadialProfile& profile) {
  const double b = profile.coords[profile.size() - 1];
  return fit_steady_asymptotics(profile, {b / 2, b});
}

AsymptoticsFit fit_shrinker_tail(const RadialProfile& profile, std::pair<double, double> window) {
  if (profile.rep != Representation::U || profile.coord_kind != Coordinate::R)
    throw DomainError("fit_shrinker_tail: u(r) profile required");
  const auto& p = profile.params;
  if (p.kind != SolitonKind::Shrinker) throw DomainError("fit_shrinker_tail: shrinker profile required");
  auto [ra, rb] = window;
  if (!(rb > ra) || ra <= 0) throw DomainError("fit_shrinker_tail: bad window");
  const double level = p.cylinder_level();
  std::vector<double> lr, lg, g;
  for (Eigen::Index i = 0; i < profile.size(); ++i) {
    const double r = profile.coords[i];
    if (r < ra || r > rb) continue;
    const double gi = level - r * r * std::pow(profile.values[i], 1.0 - p.m);
    if (!(gi > 0)) throw FitError("fit_shrinker_tail: r^2 v^{1-m} reaches the cylinder level at r=" + std::to_string(r));
    if (!g.empty() && !(gi < g.back())) throw FitError("fit_shrinker_tail: tail not monotone at r=" + std::to_string(r));
    lr.push_back(std::log(r));
    lg.push_back(std::log(gi));
    g.push_back(gi);
  }
  if (g.size() < 4) throw FitError("fit_shrinker_tail: window holds too few nodes");
  Eigen::MatrixXd X(g.size(), 2);
  Eigen::VectorXd y(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    X(k, 0) = 1.0;
    X(k, 1) = -lr[k];
    y[k] = lg[k];
  }
  const Eigen::Vector2d c = X.colPivHouseholderQr().solve(y);
  AsymptoticsFit out;
  out.A = 0;
  out.B = std::exp(c[0]);
  out.gamma_decay = c[1];
  out.fit_window = window;
  for (std::size_t k = 0; k < g.size(); ++k)
    out.residual = std::max(out.residual, std::abs(*out.B * std::exp(-c[1] * lr[k]) - g[k]));
  if (!(c[1] > 0)) throw FitError("fit_shrinker_tail: fitted decay exponent is not positive");
  return out;
}

std::optional<double> shrinker_linear_decay(int n, double beta) {
  const double b = beta * (n - 2.0);
  const double disc = b * b - 4.0 * (n - 2.0);
  if (disc < 0) return std::nullopt;
  return (b - std::sqrt(disc)) / 2.0;
}

double kappa_from_fit(const SolitonParams& p, const AsymptoticsFit& fit) {
  return fit.normalized_K() - 2.0 * std::log(p.lambda) / (p.n + 2.0) - 0.5 * std::log(p.beta);
}

double lambda_from_tail(int n, double beta, double normalized_K, double kappa) {
  if (!(beta > 0)) throw DomainError("lambda_from_tail: beta must be positive");
  return std::exp((n + 2.0) / 2.0 * (normalized_K - 0.5 * std::log(beta) - kappa));
}

double estimate_kappa(int n, double precision, double s_end) {
  const auto p = derive_params(n, 1.0, 1.0, SolitonKind::Steady);
  double k[2];
  const double tols[2] = {1e-10, 1e-12};
  for (int i = 0; i < 2; ++i) {
    CylindricalOptions o;
    o.s_end = s_end;
    o.rtol = tols[i];
    k[i] = kappa_from_fit(p, fit_steady_asymptotics(integrate_steady_cylindrical(p, o)));
  }
  if (!(std::abs(k[0] - k[1]) <= precision))
    throw FitError("estimate_kappa: resolutions disagree by " + std::to_string(std::abs(k[0] - k[1])));
  return k[1];
}

std::optional<double> kappa_fixture(int n) {
  switch (n) {
    case 3: return 1.4747739;
    case 4: return 0.06881447;
    case 5: return -0.5539371;
    case 6: return -0.94532953;
    case 8: return -1.4508020;
    default: return std::nullopt;
  }
}

}  // namespace yamabe
