#include "yamabe/experiments.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "yamabe/asymptotics.hpp"
#include "yamabe/soliton.hpp"

namespace yamabe {

namespace {

double cyl_level(int n) { return (n - 1.0) * (n - 2.0); }

double bump(double x) {
  if (!(x < 1.0)) return 0.0;
  const double q = 1.0 - x * x;
  return q * q * q;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd soliton_on(int n, double beta, double lambda, const Eigen::VectorXd& nodes) {
  RadialOptions o;
  o.nodes = to_std(nodes);
  return integrate_radial(derive_params(n, beta, lambda, SolitonKind::Steady), nodes[nodes.size() - 1], o).values;
}

// Equally spaced times in (t0, t0 + horizon], `count` of them.
std::vector<double> even_times(double t0, double horizon, int count) {
  std::vector<double> t;
  for (int k = 1; k <= count; ++k) t.push_back(t0 + horizon * k / count);
  return t;
}

// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto N = x.size();
  if (N < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < N; ++i) mx += x[i], my += y[i];
  mx /= N;
  my /= N;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < N; ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

double linear_at(const std::vector<double>& t, const std::vector<double>& v, double x) {
  auto it = std::upper_bound(t.begin(), t.end(), x);
  if (it == t.begin()) return v.front();
  if (it == t.end()) return v.back();
  const auto i = static_cast<std::size_t>(it - t.begin());
  const double th = (x - t[i - 1]) / (t[i] - t[i - 1]);
  return (1 - th) * v[i - 1] + th * v[i];
}

double max_rel_error_to_cylinder(const FlowState& s, double T) {
  double e = 0;
  for (Eigen::Index i = 0; i < s.u.size(); ++i) {
    const double ex = cylinder_exact(s.n, T, s.grid->nodes[i], s.t);
    e = std::max(e, std::abs(s.u[i] - ex) / ex);
  }
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(InitialKind k) {
  switch (k) {
    case InitialKind::SolitonPerturbed: return "soliton_perturbed";
    case InitialKind::LogTail: return "log_tail";
    case InitialKind::SlowLogTail: return "slow_log_tail";
    case InitialKind::CylinderCapped: return "cylinder_capped";
    case InitialKind::CylindricalEnd: return "cylindrical_end";
    case InitialKind::Custom: return "custom";
    case InitialKind::Cylinder: return "cylinder";
  }
  return "?";
}

InitialKind initial_kind_from_string(std::string_view name) {
  for (auto k : {InitialKind::SolitonPerturbed, InitialKind::LogTail, InitialKind::SlowLogTail,
                 InitialKind::CylinderCapped, InitialKind::CylindricalEnd, InitialKind::Custom, InitialKind::Cylinder})
    if (to_string(k) == name) return k;
  throw DomainError("unknown initial data kind '" + std::string(name) + "'");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::TypeI: return "TypeI";
    case Verdict::TypeII: return "TypeII";
    case Verdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

void InitialDataSpec::validate() const {
  if (n < 3) throw DomainError("initial data: n must be >= 3");
  auto need = [](bool ok, const char* what) {
    if (!ok) throw DomainError(std::string("initial data: ") + what);
  };
  switch (kind) {
    case InitialKind::SolitonPerturbed:
      need(beta > 0 && lambda > 0, "beta and lambda must be positive");
      need(amplitude > -1, "amplitude must exceed -1");
      need(support_radius > 0, "support_radius must be positive");
      break;
    case InitialKind::CylindricalEnd:
      need(beta > 0 && lambda > 0, "beta and lambda must be positive");
      need(amplitude >= 0, "amplitude must be nonnegative");
      need(support_radius > 0 && end_width > 0, "support_radius and end_width must be positive");
      break;
    case InitialKind::LogTail:
      need(A > 0, "log tail slope A must be positive");
      need(cap_radius > 0 && A * std::log(cap_radius) + K > 0, "A ln r1 + K must be positive");
      break;
    case InitialKind::CylinderCapped:
      need(T > 0 && C > 0, "T and C must be positive");
      need(cap_radius > 1, "cap_radius must exceed 1");
      need(cyl_level(n) * T - C / std::log(cap_radius) > 0,
           "C / ln r1 must stay below (n-1)(n-2)T so the data are positive");
      break;
    case InitialKind::SlowLogTail:
      need(cap_radius > 1, "cap_radius must exceed 1");
      break;
    case InitialKind::Custom:
      need(static_cast<bool>(custom), "custom profile missing");
      break;
    case InitialKind::Cylinder:
      need(T > 0, "T must be positive");
      break;
  }
}

double InitialDataSpec::tail_slope() const {
  switch (kind) {
    case InitialKind::SolitonPerturbed:
    case InitialKind::CylindricalEnd: return cyl_level(n) / beta;
    case InitialKind::LogTail: return A;
    case InitialKind::Custom: return custom_tail_slope;
    default: return 0.0;
  }
}

std::optional<double> InitialDataSpec::declared_tail(double r) const {
  const double s = std::log(r);
  switch (kind) {
    case InitialKind::SolitonPerturbed: {
      const auto Kw = tail_constant();
      if (!Kw) return std::nullopt;
      return tail_slope() * s + *Kw - (6.0 - n) * (n - 1.0) / (4.0 * beta) / s;
    }
    case InitialKind::LogTail: return A * s + K;
    case InitialKind::CylinderCapped: return cyl_level(n) * T - C / s;
    case InitialKind::SlowLogTail: return std::sqrt(s);
    case InitialKind::Cylinder: return cyl_level(n) * T;
    default: return std::nullopt;
  }
}

std::optional<double> InitialDataSpec::tail_constant() const {
  switch (kind) {
    case InitialKind::SolitonPerturbed:
    case InitialKind::CylindricalEnd: {
      const auto kappa = kappa_fixture(n);
      if (!kappa) return std::nullopt;
      return tail_slope() * (2.0 * std::log(lambda) / (n + 2.0) + 0.5 * std::log(beta) + *kappa);
    }
    case InitialKind::LogTail: return K;
    case InitialKind::CylinderCapped:
    case InitialKind::Cylinder: return cyl_level(n) * T;
    default: return std::nullopt;
  }
}

double cylinder_exact(int n, double T, double r, double t) {
  const double w = cyl_level(n) * (T - t);
  if (!(w > 0)) return 0.0;
  return std::pow(w / (r * r), 1.0 / (1.0 - fast_diffusion_exponent(n)));
}

FlowState make_initial_data(const InitialDataSpec& spec, const Eigen::VectorXd& nodes,
                            std::optional<double> rescaled_beta) {
  spec.validate();
  const int n = spec.n;
  const double om = 1.0 - fast_diffusion_exponent(n);
  const auto N = nodes.size();
  if (N < 4) throw DomainError("make_initial_data: too few nodes");
  const double r_max = nodes[N - 1];

  if (spec.kind == InitialKind::Cylinder) {
    if (rescaled_beta) throw DomainError("make_initial_data: the cylinder runs in original variables");
    if (!(nodes[0] > 0)) throw DomainError("make_initial_data: the cylinder needs an annulus");
    Eigen::VectorXd u(N);
    for (Eigen::Index i = 0; i < N; ++i) u[i] = cylinder_exact(n, spec.T, nodes[i], 0.0);
    DirichletSeries exact{[n, T = spec.T](double r, double t) { return cylinder_exact(n, T, r, t); },
                          "cylinder"};
    InnerBC inner{InnerKind::Dirichlet, exact};
    return make_state(make_grid(nodes, n, inner, OuterBC::dirichlet(exact)), std::move(u));
  }

  if (nodes[0] != 0.0) throw DomainError("make_initial_data: mesh must start at r = 0");
  Eigen::VectorXd u(N);
  const double r1 = spec.cap_radius;
  auto capped = [&](auto w_of_log_rho) {
    for (Eigen::Index i = 0; i < N; ++i) {
      const double rho2 = nodes[i] * nodes[i] + r1 * r1;
      u[i] = std::pow(w_of_log_rho(0.5 * std::log(rho2)) / rho2, 1.0 / om);
    }
  };
  switch (spec.kind) {
    case InitialKind::SolitonPerturbed: {
      u = soliton_on(n, spec.beta, spec.lambda, nodes);
      for (Eigen::Index i = 0; i < N; ++i) u[i] *= 1.0 + spec.amplitude * bump(nodes[i] / spec.support_radius);
      break;
    }
    case InitialKind::CylindricalEnd: {
      u = soliton_on(n, spec.beta, spec.lambda, nodes);
      const double e2 = spec.end_width * spec.end_width;
      for (Eigen::Index i = 0; i < N; ++i) {
        const double d = nodes[i] - spec.support_radius;
        u[i] *= 1.0 + spec.amplitude * std::pow(e2 / (d * d + e2), 1.0 / om);
      }
      break;
    }
    case InitialKind::LogTail: capped([&](double l) { return spec.A * l + spec.K; }); break;
    case InitialKind::CylinderCapped:
      capped([&](double l) { return cyl_level(n) * spec.T - spec.C / l; });
      break;
    case InitialKind::SlowLogTail: capped([](double l) { return std::sqrt(l); }); break;
    case InitialKind::Custom:
      for (Eigen::Index i = 0; i < N; ++i) u[i] = spec.custom(nodes[i]);
      break;
    case InitialKind::Cylinder: break;
  }
  const double A = spec.tail_slope();
  const double w_edge = r_max * r_max * std::pow(u[N - 1], om);
  if (const auto declared = spec.declared_tail(r_max)) {
    if (!(std::abs(w_edge - *declared) <= 0.01 * std::abs(*declared)))
      throw DomainError("make_initial_data: r^2 u^{1-m} = " + std::to_string(w_edge) + " at r_max misses the declared tail " +
                        std::to_string(*declared));
  }
  const double K0 = w_edge - A * std::log(r_max);
  auto grid = make_grid(nodes, n, InnerBC{}, OuterBC::drifting(A, K0));
  return make_state(grid, std::move(u), 0.0, rescaled_beta);
}

// ---------------------------------------------------------------------------

ExtinctionTracker::ExtinctionTracker(const FlowState& s) : t_prev_(s.t), m_(s.m) {
  const auto& r = s.grid->nodes;
  w0_ = r.array().square() * s.u.array().pow(1.0 - m_);
  w_prev_ = w0_;
  t_ext_ = Eigen::VectorXd::Constant(r.size(), std::numeric_limits<double>::quiet_NaN());
  log_r_ = r.array().log();
  // only unknown nodes with r >= 1 are tracked
  for (Eigen::Index i = 0; i < r.size(); ++i)
    if (i < s.grid->first_unknown() || i > s.grid->last_unknown() || r[i] < 1.0) t_ext_[i] = -1.0;
}

void ExtinctionTracker::observe(const FlowState& s) {
  const auto& r = s.grid->nodes;
  const Eigen::VectorXd w = r.array().square() * s.u.array().pow(1.0 - m_);
  const double dt = s.t - t_prev_;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isnan(t_ext_[i])) continue;
    const double half = 0.5 * w0_[i];
    if (w[i] > half) continue;
    const double sl = (w[i] - w_prev_[i]) / dt;
    if (!(sl < 0)) continue;
    const double tc = t_prev_ + (half - w_prev_[i]) / sl;
    t_ext_[i] = tc + half / -sl;
  }
  w_prev_ = w;
  t_prev_ = s.t;
}

std::size_t ExtinctionTracker::crossed() const {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < t_ext_.size(); ++i) c += t_ext_[i] > 0;
  return c;
}

std::optional<double> ExtinctionTracker::estimate() const {
  const double L = log_r_[log_r_.size() - 1];
  std::vector<double> x, y;
  for (Eigen::Index i = 0; i < t_ext_.size(); ++i)
    if (t_ext_[i] > 0 && log_r_[i] >= 0.5 * L && log_r_[i] > 0) {
      x.push_back(1.0 / log_r_[i]);
      y.push_back(t_ext_[i]);
    }
  if (x.size() < 5) return std::nullopt;
  const double b = slope(x, y);
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) mx += x[k], my += y[k];
  mx /= x.size();
  my /= x.size();
  return std::isfinite(b) ? my - b * mx : my;
}

// ---------------------------------------------------------------------------

CurvatureTrace make_trace(const Trajectory& traj, std::optional<double> T, double absolute_floor,
                          const TraceWindowOptions& opts) {
  if (traj.times.empty()) throw DomainError("make_trace: empty trajectory");
  const auto& g = *traj.final_state.grid;
  const bool tail_bc = g.outer.kind != OuterKind::Dirichlet;
  const double edge = std::log(g.r_max()) - opts.boundary_margin;
  CurvatureTrace tr;
  tr.T = T;
  tr.resolution = static_cast<int>(g.size());
  bool trusted = true;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double t = traj.times[k];
    if (T && !(t < *T)) break;
    tr.times.push_back(t);
    tr.max_R.push_back(traj.max_R[k]);
    tr.argmax_r.push_back(traj.argmax_r[k]);
    tr.diagnostic.push_back(T ? traj.max_R[k] * (*T - t) : traj.max_R[k]);
    if (trusted) {
      const bool floor_ok = traj.max_u[k] >= opts.floor_margin * absolute_floor;
      const bool edge_ok = !tail_bc || traj.argmax_r[k] <= 0 || std::log(traj.argmax_r[k]) <= edge;
      if (floor_ok && edge_ok) tr.window_end = t;
      else trusted = false;
    }
  }
  tr.window_begin = tr.times.front();
  return tr;
}

ClassificationReport classify(const std::vector<CurvatureTrace>& traces, TraceMode mode, const ClassifyOptions& opts) {
  ClassificationReport rep;
  if (traces.empty()) throw DomainError("classify: no traces");
  const bool finite = mode == TraceMode::FiniteTime;
  double T = 0;
  if (finite) {
    if (!traces.front().T) throw DomainError("classify: finite mode needs T");
    T = *traces.front().T;
    for (const auto& t : traces)
      if (!t.T || *t.T != T) throw DomainError("classify: traces disagree on T");
  }
  double b = -std::numeric_limits<double>::infinity(), e = std::numeric_limits<double>::infinity();
  for (const auto& t : traces) {
    b = std::max(b, t.window_begin);
    e = std::min(e, t.window_end);
  }
  rep.window_begin = b;
  rep.window_end = e;
  if (!(e > b)) {
    rep.message = "empty trusted window";
    return rep;
  }
  const int S = std::max(opts.samples, 3);
  std::vector<double> tk;
  if (finite) {
    const double x0 = std::log(T - b), x1 = std::log(T - e);
    const double xs = x0 + opts.transient * (x1 - x0);
    for (int k = 0; k < S; ++k) tk.push_back(T - std::exp(xs + (x1 - xs) * k / (S - 1)));
  } else {
    const double ts = b + opts.transient * (e - b);
    for (int k = 0; k < S; ++k) tk.push_back(ts + (e - ts) * k / (S - 1));
  }
  tk.back() = e;
  rep.window_begin = tk.front();

  std::vector<std::vector<double>> vals;
  for (const auto& t : traces) {
    std::vector<double> v;
    for (double x : tk) v.push_back(linear_at(t.times, t.diagnostic, x));
    RungEvidence ev;
    ev.resolution = t.resolution;
    ev.monotone = true;
    for (std::size_t k = 1; k < v.size(); ++k)
      if (v[k] < v[k - 1] * (1.0 - opts.monotone_slack)) ev.monotone = false;
    ev.min_value = *std::min_element(v.begin(), v.end());
    ev.max_value = *std::max_element(v.begin(), v.end());
    ev.growth = v.back() / v.front();
    ev.sup_ratio = ev.max_value / v.front();
    if (ev.monotone && ev.growth >= opts.growth_factor) ev.verdict = Verdict::TypeII;
    else if (ev.sup_ratio <= opts.bounded_factor) ev.verdict = Verdict::TypeI;
    rep.rungs.push_back(ev);
    vals.push_back(std::move(v));
  }
  rep.growth = rep.rungs.front().growth;
  for (const auto& r : rep.rungs) rep.growth = std::min(rep.growth, r.growth);
  for (std::size_t j = 1; j < vals.size(); ++j)
    for (std::size_t k = 0; k < tk.size(); ++k) {
      const double a = vals[0][k], c = vals[j][k];
      rep.max_disagreement = std::max(rep.max_disagreement, std::abs(a - c) / std::max(std::abs(a), std::abs(c)));
    }
  rep.resolution_sensitive = rep.max_disagreement > opts.agreement;

  {
    std::vector<double> x, y;
    for (std::size_t k = 0; k < tk.size(); ++k) {
      if (!(vals[0][k] > 0)) continue;
      if (finite) x.push_back(-std::log(T - tk[k]));
      else if (tk[k] > 0) x.push_back(std::log(tk[k]));
      else continue;
      y.push_back(std::log(vals[0][k]));
    }
    const double sl = slope(x, y);
    if (std::isfinite(sl)) rep.growth_exponent = sl;
  }

  if (traces.size() < 2) {
    rep.message = "a single resolution cannot be classified";
    return rep;
  }
  const Verdict v0 = rep.rungs.front().verdict;
  bool same = true;
  for (const auto& r : rep.rungs) same = same && r.verdict == v0;
  if (!same) {
    rep.message = "resolutions disagree on the verdict";
    return rep;
  }
  if (v0 == Verdict::TypeII && rep.resolution_sensitive) {
    rep.message = "diagnostic differs across resolutions by " + std::to_string(rep.max_disagreement);
    return rep;
  }
  rep.verdict = v0;
  rep.message = v0 == Verdict::Inconclusive ? "diagnostic neither bounded nor monotonically growing" : "ok";
  return rep;
}

// ---------------------------------------------------------------------------

CylinderOracleReport run_cylinder_oracle(const CylinderOracleOptions& o) {
  CylinderOracleReport rep;
  InitialDataSpec spec;
  spec.kind = InitialKind::Cylinder;
  spec.n = o.n;
  spec.T = o.T;
  {
    auto s = make_initial_data(spec, annulus_nodes(o.r_in, o.r_out, o.intervals));
    ExtinctionTracker tracker(s);
    Controller ctl;
    ctl.dt_init = 1e-5;
    ctl.target_change = o.target_change;
    ctl.snapshot_times = o.check_times;
    ctl.extinction_floor = o.extinction_floor;
    ctl.on_step = [&](const FlowState& st, const CurvatureField&) {
      tracker.observe(st);
      return false;
    };
    rep.trajectory = evolve(s, 2 * o.T, ctl);
    for (std::size_t k = 1; k < rep.trajectory.snapshots.size(); ++k)
      rep.max_rel_error = std::max(rep.max_rel_error, max_rel_error_to_cylinder(rep.trajectory.snapshots[k], o.T));
    rep.extinction_estimate = tracker.estimate();
    rep.floor_crossing = rep.trajectory.extinction_time;
    rep.lemma = pointwise_lower_bound_check(rep.trajectory);
  }
  auto fixed_run = [&](int intervals, double dt) {
    auto s = make_initial_data(spec, annulus_nodes(o.r_in, o.r_out, intervals));
    Controller ctl;
    ctl.fixed_dt = true;
    ctl.dt_init = dt;
    ctl.extinction_floor = 0;
    auto tr = evolve(s, o.ladder_time, ctl);
    if (!pointwise_lower_bound_check(tr).passed) ++rep.ladder_lemma_failures;
    return max_rel_error_to_cylinder(tr.final_state, o.T);
  };
  for (int N : o.space_ladder) rep.space_errors.push_back(fixed_run(N, o.space_dt));
  for (std::size_t k = 1; k < rep.space_errors.size(); ++k)
    rep.space_orders.push_back(std::log(rep.space_errors[k - 1] / rep.space_errors[k]) /
                               std::log(static_cast<double>(o.space_ladder[k]) / o.space_ladder[k - 1]));
  for (double dt : o.time_ladder) rep.time_errors.push_back(fixed_run(o.time_intervals, dt));
  for (std::size_t k = 1; k < rep.time_errors.size(); ++k)
    rep.time_orders.push_back(std::log(rep.time_errors[k - 1] / rep.time_errors[k]) /
                              std::log(o.time_ladder[k - 1] / o.time_ladder[k]));
  return rep;
}

StationarityReport run_stationarity(const SolitonParams& p, double horizon, const RunOptions& opts) {
  if (p.kind != SolitonKind::Steady) throw DomainError("run_stationarity: steady soliton required");
  InitialDataSpec spec;
  spec.n = p.n;
  spec.beta = p.beta;
  spec.lambda = p.lambda;
  const auto s0 = make_initial_data(spec, graded_nodes(std::exp(opts.mesh.log_r_max), opts.mesh.nodes), p.beta);
  Controller ctl = opts.controller;
  ctl.snapshot_times = even_times(0, horizon, opts.snapshots);
  StationarityReport rep;
  rep.trajectory = evolve(s0, horizon, ctl);
  const double scale = s0.u.cwiseAbs().maxCoeff();
  for (std::size_t k = 1; k < rep.trajectory.snapshots.size(); ++k) {
    const auto& sn = rep.trajectory.snapshots[k];
    const double d = (sn.u - s0.u).cwiseAbs().maxCoeff() / scale;
    rep.times.push_back(sn.t);
    rep.drift.push_back(d);
    rep.drift_per_time = std::max(rep.drift_per_time, d / sn.t);
  }
  rep.lemma = pointwise_lower_bound_check(rep.trajectory, opts.lemma_slack);
  return rep;
}

TailConstant fit_tail_constant(const FlowState& s, double A, std::pair<double, double> window,
                               std::optional<double> known_C3) {
  const auto& g = *s.grid;
  std::vector<double> ss, ys;
  for (Eigen::Index i = g.first_unknown(); i <= g.last_unknown(); ++i) {
    const double r = g.nodes[i];
    if (!(r > 0)) continue;
    const double sv = std::log(r);
    if (sv < window.first || sv > window.second) continue;
    double y = r * r * std::pow(s.u[i], 1.0 - s.m) - A * sv;
    if (known_C3) y -= *known_C3 / sv;
    ss.push_back(sv);
    ys.push_back(y);
  }
  if (ss.size() < 4) throw FitError("fit_tail_constant: window holds too few nodes");
  Eigen::MatrixXd X(ss.size(), 2);
  Eigen::VectorXd y(ss.size());
  for (std::size_t k = 0; k < ss.size(); ++k) {
    X(k, 0) = 1.0;
    X(k, 1) = known_C3 ? 1.0 / (ss[k] * ss[k]) : 1.0 / ss[k];
    y[k] = ys[k];
  }
  const Eigen::Vector2d c = X.colPivHouseholderQr().solve(y);
  TailConstant out;
  out.K = c[0];
  out.C3 = known_C3 ? *known_C3 : c[1];
  out.residual = (X * c - y).cwiseAbs().maxCoeff();
  return out;
}

ConvergenceReport run_convergence(const InitialDataSpec& spec, double beta, double horizon,
                                  const ConvergenceOptions& opts) {
  const int n = spec.n;
  const double A = cyl_level(n) / beta;
  if (!(std::abs(spec.tail_slope() - A) <= 1e-12 * A))
    throw DomainError("run_convergence: data tail slope must be (n-1)(n-2)/beta");
  const auto kappa = kappa_fixture(n);
  if (!kappa) throw FitError("run_convergence: no kappa fixture for n=" + std::to_string(n));
  const auto nodes = graded_nodes(std::exp(opts.run.mesh.log_r_max), opts.run.mesh.nodes);
  const auto s0 = make_initial_data(spec, nodes, beta);

  ConvergenceReport rep;
  rep.tail = fit_tail_constant(s0, A, opts.tail_window, -(6.0 - n) * (n - 1.0) / (4.0 * beta));
  rep.tail_K = spec.tail_constant().value_or(rep.tail.K);
  rep.lambda_target = lambda_from_tail(n, beta, rep.tail_K / A, *kappa);
  const auto target = make_state(s0.grid, soliton_on(n, beta, rep.lambda_target, nodes), 0.0, beta);

  Controller ctl = opts.run.controller;
  ctl.snapshot_times = even_times(0, horizon, opts.run.snapshots);
  rep.trajectory = evolve(s0, horizon, ctl);
  for (const auto& sn : rep.trajectory.snapshots) {
    rep.times.push_back(sn.t);
    rep.l1.push_back(l1_distance(sn, target, opts.ball_radius));
    rep.sup.push_back(sup_distance(sn, target, opts.ball_radius));
  }
  rep.l1_monotone = rep.sup_monotone = true;
  for (std::size_t k = 1; k < rep.times.size(); ++k) {
    rep.l1_monotone = rep.l1_monotone && rep.l1[k] < rep.l1[k - 1];
    rep.sup_monotone = rep.sup_monotone && rep.sup[k] < rep.sup[k - 1];
  }
  rep.l1_reduction = rep.l1.front() / rep.l1.back();
  rep.lambda_identified = rep.trajectory.final_state.u[0];
  rep.lemma = pointwise_lower_bound_check(rep.trajectory, opts.run.lemma_slack);
  return rep;
}

ContractionReport run_contraction(const InitialDataSpec& a, const InitialDataSpec& b, double beta, double horizon,
                                  const RunOptions& opts, double slack) {
  if (a.n != b.n || std::abs(a.tail_slope() - b.tail_slope()) > 1e-12 * std::abs(a.tail_slope()))
    throw DomainError("run_contraction: data must share dimension and tail");
  const auto nodes = graded_nodes(std::exp(opts.mesh.log_r_max), opts.mesh.nodes);
  const auto sa = make_initial_data(a, nodes, beta);
  const auto sb = make_initial_data(b, nodes, beta);
  if (std::abs(sa.grid->outer.K0 - sb.grid->outer.K0) > 1e-9 * std::max(1.0, std::abs(sa.grid->outer.K0)))
    throw DomainError("run_contraction: tails differ at r_max, the difference is not integrable");
  Controller ctl = opts.controller;
  ctl.snapshot_times = even_times(0, horizon, opts.snapshots);
  // identical step sequences keep the two runs comparable
  ctl.fixed_dt = true;
  if (!(ctl.dt_init > 0)) throw DomainError("run_contraction: dt_init must be positive");
  ctl.dt_init = std::min(ctl.dt_init, ctl.dt_max);
  // share one grid so that the difference is taken nodewise
  const auto sb_on_a = make_state(sa.grid, sb.u, 0.0, beta);
  auto ta = evolve(sa, horizon, ctl);
  auto tb = evolve(sb_on_a, horizon, ctl);

  ContractionReport rep;
  rep.slack = slack;
  rep.predicted_rate = sa.gamma - sa.n * beta;
  const double radius = sa.grid->r_max();
  const double g0 = l1_distance(sa, sb_on_a, radius);
  std::vector<double> x, y;
  for (std::size_t k = 0; k < ta.snapshots.size() && k < tb.snapshots.size(); ++k) {
    const double t = ta.snapshots[k].t;
    const double gap = l1_distance(ta.snapshots[k], tb.snapshots[k], radius);
    const double env = std::exp(rep.predicted_rate * t) * g0;
    rep.times.push_back(t);
    rep.gap.push_back(gap);
    rep.envelope.push_back(env);
    if (gap > (1.0 + slack) * env) ++rep.violations;
    if (gap > 0) {
      x.push_back(t);
      y.push_back(std::log(gap));
    }
  }
  rep.fitted_rate = x.size() >= 2 ? slope(x, y) : 0.0;
  rep.passed = rep.violations == 0;
  rep.lemma_a = pointwise_lower_bound_check(ta, opts.lemma_slack);
  rep.lemma_b = pointwise_lower_bound_check(tb, opts.lemma_slack);
  rep.trajectory_a = std::move(ta);
  rep.trajectory_b = std::move(tb);
  return rep;
}

TailDriftReport run_tail_drift(const InitialDataSpec& spec, double horizon, const TailDriftOptions& opts) {
  if (spec.kind != InitialKind::LogTail) throw DomainError("run_tail_drift: LogTail data required");
  const auto nodes = graded_nodes(std::exp(opts.run.mesh.log_r_max), opts.run.mesh.nodes);
  auto s0 = make_initial_data(spec, nodes);
  if (opts.frozen_boundary) {
    auto g = make_grid(nodes, spec.n, InnerBC{}, OuterBC::frozen(s0.grid->outer.A, s0.grid->outer.K0));
    s0 = make_state(g, s0.u);
  }
  Controller ctl = opts.run.controller;
  ctl.snapshot_times = even_times(0, horizon, opts.run.snapshots);
  TailDriftReport rep;
  rep.expected = cyl_level(spec.n);
  rep.trajectory = evolve(s0, horizon, ctl);
  for (const auto& sn : rep.trajectory.snapshots) {
    rep.times.push_back(sn.t);
    rep.K.push_back(fit_tail_constant(sn, spec.A, opts.window).K);
  }
  rep.rate = -slope(rep.times, rep.K);
  rep.rel_error = std::abs(rep.rate - rep.expected) / rep.expected;
  rep.lemma = pointwise_lower_bound_check(rep.trajectory, opts.lemma_slack);
  return rep;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd soliton_operator_residual(const RadialProfile& profile, const SolitonParams& p) {
  if (profile.rep != Representation::U || profile.coord_kind != Coordinate::R)
    throw DomainError("soliton_operator_residual: u(r) profile required");
  const auto N = profile.size();
  if (profile.deriv.size() != N || profile.deriv2.size() != N)
    throw DomainError("soliton_operator_residual: profile lacks derivatives");
  const double m = p.m;
  Eigen::VectorXd out(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double r = profile.coords[i], v = profile.values[i];
    const double vr = profile.deriv[i], vrr = profile.deriv2[i];
    const double radial = r > 0 ? vrr + (p.n - 1.0) * vr / r : p.n * vrr;
    const double lap = (p.n - 1.0) * std::pow(v, m - 1.0) * (radial + (m - 1.0) * vr * vr / v);
    out[i] = lap + p.beta * r * vr + p.gamma * v;
  }
  return out;
}

BarrierReport verify_barrier(const SolitonParams& p, double h, double r_outer_factor, int nodes) {
  if (p.kind != SolitonKind::Steady) throw DomainError("verify_barrier: steady soliton required");
  if (!(h > 0) || !(r_outer_factor > 1) || nodes < 8) throw DomainError("verify_barrier: bad mesh");
  BarrierReport rep;
  rep.h = h;
  rep.r_outer = r_outer_factor * h;
  rep.nodes = static_cast<std::size_t>(nodes);
  const double first = h * (1.0 + 1e-6);
  Eigen::VectorXd r(nodes);
  for (int i = 0; i < nodes; ++i) r[i] = first * std::pow(rep.r_outer / first, static_cast<double>(i) / (nodes - 1));
  r[nodes - 1] = rep.r_outer;
  RadialOptions o;
  o.nodes = to_std(r);
  const auto u = integrate_radial(p, rep.r_outer, o);
  const double e = 1.0 / (1.0 - p.m), h2 = h * h;

  // v = u F with F = q^{±e}, q = r²/(r²-h²)
  auto build = [&](bool super) {
    RadialProfile v = u;
    for (int i = 0; i < nodes; ++i) {
      const double x = r[i], x2 = x * x, d = x2 - h2;
      const double q = x2 / d;
      const double qr = -2.0 * h2 * x / (d * d);
      const double qrr = 2.0 * h2 * (3.0 * x2 + h2) / (d * d * d);
      const double k = super ? e : -e;
      const double F = std::pow(q, k);
      const double Fr = k * F / q * qr;
      const double Frr = k * F / q * (qrr + (k - 1.0) * qr * qr / q);
      v.values[i] = u.values[i] * F;
      v.deriv[i] = u.deriv[i] * F + u.values[i] * Fr;
      v.deriv2[i] = u.deriv2[i] * F + 2.0 * u.deriv[i] * Fr + u.values[i] * Frr;
    }
    return v;
  };
  const auto vs = build(true), vb = build(false);
  const auto Ns = soliton_operator_residual(vs, p), Nb = soliton_operator_residual(vb, p);
  rep.max_super = -std::numeric_limits<double>::infinity();
  rep.min_sub = std::numeric_limits<double>::infinity();
  for (int i = 0; i < nodes; ++i) {
    if (Ns[i] > 0) ++rep.super_violations;
    if (Nb[i] < 0) ++rep.sub_violations;
    rep.max_super = std::max(rep.max_super, Ns[i]);
    rep.min_sub = std::min(rep.min_sub, Nb[i]);
    // f_r = (vs_r - u_r f) / u
    const double f = vs.values[i] / u.values[i];
    const double fr = (vs.deriv[i] - u.deriv[i] * f) / u.values[i];
    if (Ns[i] > 0.5 * p.beta * r[i] * u.values[i] * fr) ++rep.working_bound_violations;
  }
  rep.passed = rep.super_violations == 0 && rep.sub_violations == 0;
  return rep;
}

double barrier_threshold(const SolitonParams& p, double h_lo, double h_hi, double rel_tol, double r_outer_factor,
                         BarrierSide side) {
  if (!(h_hi > h_lo) || !(h_lo > 0)) throw DomainError("barrier_threshold: bad bracket");
  auto certifies = [&](double h) {
    const auto b = verify_barrier(p, h, r_outer_factor);
    switch (side) {
      case BarrierSide::Super: return b.super_violations == 0;
      case BarrierSide::Sub: return b.sub_violations == 0;
      default: return b.passed;
    }
  };
  if (!certifies(h_hi)) throw FitError("barrier_threshold: h_hi does not certify");
  if (certifies(h_lo)) return h_lo;
  while (h_hi - h_lo > rel_tol * h_hi) {
    const double mid = std::sqrt(h_lo * h_hi);
    (certifies(mid) ? h_hi : h_lo) = mid;
  }
  return h_hi;
}

// ---------------------------------------------------------------------------

DominationResult domination_search(const FlowState& u0, const DominationFamily& fam, double lambda_min, double q,
                                   int max_steps) {
  u0.validate();
  if (u0.rescaled) throw DomainError("domination_search: original-variable data required");
  if (!(lambda_min > 0) || !(q > 1)) throw DomainError("domination_search: bad search grid");
  const auto& g = *u0.grid;
  if (g.inner.kind != InnerKind::Symmetry) throw DomainError("domination_search: mesh must start at r = 0");
  const int n = u0.n;
  const double om = 1.0 - u0.m, R = g.r_max();
  const double w0_edge = R * R * std::pow(u0.u[g.size() - 1], om);
  const double A0 = g.outer.kind == OuterKind::Dirichlet ? 0.0 : g.outer.A;
  DominationResult res;
  if (fam.kind == SolitonKind::Steady) {
    if (A0 > cyl_level(n) / fam.beta * (1 + 1e-12)) {
      res.message = "tail slope of u0 exceeds the family's";
      return res;
    }
  } else if (A0 != 0.0 || !(w0_edge < cyl_level(n) * fam.T)) {
    res.message = "tail of u0 reaches the shrinker level (n-1)(n-2)T";
    return res;
  }
  const double sc = fam.kind == SolitonKind::Shrinker ? std::pow(fam.T, fam.beta) : 1.0;
  const Eigen::VectorXd x = g.nodes * sc;
  RadialOptions o;
  o.nodes = to_std(x);
  double lam = lambda_min;
  for (int k = 0; k < max_steps; ++k, lam *= q) {
    res.tried.push_back(lam);
    const auto p = derive_params(n, fam.beta, lam, fam.kind);
    Eigen::VectorXd v;
    try {
      v = integrate_radial(p, x[x.size() - 1], o).values;
    } catch (const SolverError&) {
      continue;
    }
    if (fam.kind == SolitonKind::Shrinker) v *= std::pow(fam.T, p.gamma);
    if (!(u0.u.array() <= v.array()).all()) continue;
    // beyond r_max: equal slopes need an ordered constant, a smaller slope wins eventually
    const double wf_edge = R * R * std::pow(v[v.size() - 1], om);
    if (fam.kind == SolitonKind::Steady && std::abs(A0 - cyl_level(n) / fam.beta) <= 1e-12 * A0 &&
        !(w0_edge <= wf_edge))
      continue;
    res.lambda = lam;
    res.message = "ok";
    return res;
  }
  res.message = "no dominating member up to lambda=" + std::to_string(lam / q);
  return res;
}

// ---------------------------------------------------------------------------

SingularityReport run_singularity(const InitialDataSpec& spec, TraceMode mode, double horizon,
                                  const SingularityOptions& opts) {
  if (opts.ladder.empty()) throw DomainError("run_singularity: empty ladder");
  const bool finite = mode == TraceMode::FiniteTime;
  SingularityReport rep;
  std::vector<CurvatureTrace> traces;
  for (int N : opts.ladder) {
    const Eigen::VectorXd nodes = spec.kind == InitialKind::Cylinder
                                      ? annulus_nodes(opts.annulus.first, opts.annulus.second, N)
                                      : graded_nodes(std::exp(opts.log_r_max), N);
    const auto s0 = make_initial_data(spec, nodes);
    ExtinctionTracker tracker(s0);
    Controller ctl;
    ctl.dt_init = 1e-5;
    ctl.target_change = opts.target_change;
    ctl.extinction_floor = opts.extinction_floor;
    for (int k = 1; k <= opts.snapshots; ++k)
      ctl.snapshot_times.push_back(finite ? spec.T * (1.0 - std::pow(10.0, -3.0 * k / opts.snapshots))
                                          : horizon * k / opts.snapshots);
    ctl.on_step = [&](const FlowState& s, const CurvatureField&) {
      tracker.observe(s);
      return false;
    };
    auto traj = evolve(s0, horizon, ctl);
    SingularityRun run;
    run.r_max = nodes[nodes.size() - 1];
    run.trace = make_trace(traj, finite ? std::optional<double>(spec.T) : std::nullopt,
                           opts.extinction_floor * s0.u.maxCoeff(), opts.window);
    run.trace.resolution = N;
    run.lemma = pointwise_lower_bound_check(traj, opts.lemma_slack);
    run.extinction_estimate = tracker.estimate();
    run.floor_crossing = traj.extinction_time;
    run.termination = traj.termination;
    run.steps = traj.steps;
    run.trajectory = std::move(traj);
    traces.push_back(run.trace);
    rep.runs.push_back(std::move(run));
  }
  rep.classification = classify(traces, mode, opts.classify);
  return rep;
}

SingularityReport run_finite_time_typeII(double T, double C, const SingularityOptions& opts, int n) {
  InitialDataSpec spec;
  spec.kind = InitialKind::CylinderCapped;
  spec.n = n;
  spec.T = T;
  spec.C = C;
  spec.cap_radius = std::exp(3.0);
  return run_singularity(spec, TraceMode::FiniteTime, 2 * T, opts);
}

SingularityReport run_infinite_time_typeII(double horizon, const SingularityOptions& opts, int n) {
  InitialDataSpec spec;
  spec.kind = InitialKind::SlowLogTail;
  spec.n = n;
  spec.cap_radius = std::exp(8.0);
  return run_singularity(spec, TraceMode::InfiniteTime, horizon, opts);
}

}  // namespace yamabe
