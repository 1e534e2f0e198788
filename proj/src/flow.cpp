#include "yamabe/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace yamabe {

namespace {

double cyl_level(int n) { return (n - 1.0) * (n - 2.0); }

// Solves a tridiagonal system in place; lo/up are the sub/super diagonals
// (lo[0] and up[N-1] ignored). Diagonal dominance makes pivoting unnecessary.
void thomas(Eigen::VectorXd& lo, Eigen::VectorXd& d, Eigen::VectorXd& up, Eigen::VectorXd& rhs) {
  const auto N = d.size();
  for (Eigen::Index i = 1; i < N; ++i) {
    const double w = lo[i] / d[i - 1];
    d[i] -= w * up[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[N - 1] /= d[N - 1];
  for (Eigen::Index i = N - 2; i >= 0; --i) rhs[i] = (rhs[i] - up[i] * rhs[i + 1]) / d[i];
}

// Second-order Laplacian of U at node i from the quadratic through i and two
// neighbours on one side (dir = +1 forward, -1 backward).
double one_sided_laplacian(const FlowGrid& g, const Eigen::VectorXd& U, Eigen::Index i, int dir) {
  const double x0 = g.nodes[i], x1 = g.nodes[i + dir], x2 = g.nodes[i + 2 * dir];
  const double f0 = U[i], f1 = U[i + dir], f2 = U[i + 2 * dir];
  // Newton divided differences
  const double d01 = (f1 - f0) / (x1 - x0), d12 = (f2 - f1) / (x2 - x1);
  const double d012 = (d12 - d01) / (x2 - x0);
  const double Ur = d01 + d012 * (x0 - x1);
  const double Urr = 2.0 * d012;
  return Urr + (g.n - 1.0) * Ur / x0;
}

// Finite-volume (n-1)/m Δ(u^m) at unknown nodes, plus the rescaling terms.
void apply_operator(const FlowState& s, const Eigen::VectorXd& u, const Eigen::VectorXd& U, Eigen::VectorXd& out) {
  const auto& g = *s.grid;
  const auto N = g.size();
  const double c = (s.n - 1.0) / s.m;
  out.setZero(N);
  for (Eigen::Index f = 0; f + 1 < N; ++f) {
    double flux = c * g.coupling[f] * (U[f + 1] - U[f]);
    if (s.rescaled) flux += s.beta * g.face_pow_n[f] * 0.5 * (u[f] + u[f + 1]);
    out[f] += flux;
    out[f + 1] -= flux;
  }
  out.array() /= g.volume.array();
  if (s.rescaled) out += (s.gamma - s.n * s.beta) * u;
}

Eigen::VectorXd pchip_slopes(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto N = x.size();
  Eigen::VectorXd d(N);
  if (N == 2) {
    d.setConstant((y[1] - y[0]) / (x[1] - x[0]));
    return d;
  }
  Eigen::VectorXd h = x.tail(N - 1) - x.head(N - 1);
  Eigen::VectorXd del = (y.tail(N - 1) - y.head(N - 1)).cwiseQuotient(h);
  for (Eigen::Index i = 1; i + 1 < N; ++i)
    d[i] = (h[i] * del[i - 1] + h[i - 1] * del[i]) / (h[i - 1] + h[i]);
  d[0] = del[0] - h[0] * (d[1] - del[0]) / (h[0] + h[1]);
  d[N - 1] = del[N - 2] + h[N - 2] * (del[N - 2] - d[N - 2]) / (h[N - 3] + h[N - 2]);
  // monotonicity limiter (Hyman)
  for (Eigen::Index i = 0; i < N; ++i) {
    const double a = i > 0 ? del[i - 1] : del[0];
    const double b = i + 1 < N ? del[i] : del[N - 2];
    if (a * b <= 0) {
      if (i > 0 && i + 1 < N) d[i] = 0;
      continue;
    }
    const double lim = 3.0 * std::min(std::abs(a), std::abs(b));
    if (d[i] * a <= 0) d[i] = 0;
    else if (std::abs(d[i]) > lim) d[i] = std::copysign(lim, a);
  }
  return d;
}

double hermite(double x0, double x1, double y0, double y1, double d0, double d1, double x) {
  const double h = x1 - x0, t = (x - x0) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1;
}

double tail_u(double A, double K, double r, double m) {
  const double w = A * std::log(r) + K;
  if (!(w > 0)) throw TailExtinct("tail level r^2 u^{1-m} <= 0 at r=" + std::to_string(r));
  return std::pow(w / (r * r), 1.0 / (1.0 - m));
}

}  // namespace

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Reached: return "reached";
    case Termination::Extinct: return "extinct";
    case Termination::TailExtinct: return "tail_extinct";
    case Termination::Stopped: return "stopped";
  }
  return "?";
}

std::shared_ptr<const FlowGrid> make_grid(Eigen::VectorXd nodes, int n, InnerBC inner, OuterBC outer) {
  if (n < 3) throw DomainError("make_grid: n must be >= 3");
  const auto N = nodes.size();
  if (N < 4) throw DomainError("make_grid: need at least 4 nodes");
  for (Eigen::Index i = 1; i < N; ++i)
    if (!(nodes[i] > nodes[i - 1])) throw DomainError("make_grid: nodes not strictly increasing");
  if (inner.kind == InnerKind::Symmetry && nodes[0] != 0.0)
    throw DomainError("make_grid: symmetry inner condition needs the first node at r = 0");
  if (inner.kind == InnerKind::Dirichlet && !(nodes[0] > 0))
    throw DomainError("make_grid: Dirichlet inner condition needs r_in > 0");
  if (inner.kind == InnerKind::Dirichlet && !inner.series.value)
    throw DomainError("make_grid: inner Dirichlet condition without a series");
  if (outer.kind == OuterKind::Dirichlet && !outer.series.value)
    throw DomainError("make_grid: outer Dirichlet condition without a series");
  auto g = std::make_shared<FlowGrid>();
  g->nodes = std::move(nodes);
  g->n = n;
  g->inner = std::move(inner);
  g->outer = std::move(outer);
  const auto& r = g->nodes;
  g->faces = 0.5 * (r.head(N - 1) + r.tail(N - 1));
  g->coupling.resize(N - 1);
  g->face_pow_n.resize(N - 1);
  for (Eigen::Index f = 0; f + 1 < N; ++f) {
    g->coupling[f] = std::pow(g->faces[f], n - 1) / (r[f + 1] - r[f]);
    g->face_pow_n[f] = std::pow(g->faces[f], n);
  }
  g->volume.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double lo = i == 0 ? r[0] : g->faces[i - 1];
    const double hi = i + 1 == N ? r[N - 1] : g->faces[i];
    g->volume[i] = (std::pow(hi, n) - std::pow(lo, n)) / n;
  }
  return g;
}

Eigen::VectorXd graded_nodes(double r_max, int total_nodes) {
  if (!(r_max > 1)) throw DomainError("graded_nodes: r_max must exceed 1");
  if (total_nodes < 8) throw DomainError("graded_nodes: too few nodes");
  const double L = std::log(r_max);
  // n1 + ceil(L / ln(1 + 1/n1)) <= total_nodes, largest such n1
  int n1 = std::max(2, static_cast<int>(total_nodes / (1.0 + L)));
  auto count = [&](int k) { return k + static_cast<int>(std::ceil(L / std::log1p(1.0 / k))); };
  while (n1 > 2 && count(n1) > total_nodes) --n1;
  while (count(n1 + 1) <= total_nodes) ++n1;
  const double q = 1.0 + 1.0 / n1;
  if (q > 1.1) throw DomainError("graded_nodes: stretching ratio above 1.1, add nodes");
  std::vector<double> r;
  for (int i = 0; i <= n1; ++i) r.push_back(static_cast<double>(i) / n1);
  double x = 1.0;
  while (true) {
    x *= q;
    if (x >= r_max * (1 - 1e-12)) break;
    r.push_back(x);
  }
  // avoid a sliver before r_max
  if (r_max - r.back() < 0.25 * (r.back() - r[r.size() - 2])) r.pop_back();
  r.push_back(r_max);
  return Eigen::Map<Eigen::VectorXd>(r.data(), r.size());
}

Eigen::VectorXd annulus_nodes(double r_in, double r_out, int intervals) {
  if (!(r_in > 0) || !(r_out > r_in) || intervals < 3) throw DomainError("annulus_nodes: bad annulus");
  return Eigen::VectorXd::LinSpaced(intervals + 1, r_in, r_out);
}

void FlowState::validate() const {
  if (!grid) throw DomainError("FlowState: no grid");
  if (u.size() != grid->size()) throw DomainError("FlowState: size mismatch");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!(u[i] > 0) || !std::isfinite(u[i]))
      throw DomainError("FlowState: nonpositive u at r=" + std::to_string(grid->nodes[i]));
}

FlowState make_state(std::shared_ptr<const FlowGrid> grid, Eigen::VectorXd u, double t,
                     std::optional<double> rescaled_beta) {
  FlowState s;
  s.n = grid->n;
  s.m = fast_diffusion_exponent(s.n);
  s.grid = std::move(grid);
  s.u = std::move(u);
  s.t = t;
  if (rescaled_beta) {
    if (!(*rescaled_beta > 0)) throw DomainError("make_state: rescaling rate must be positive");
    s.rescaled = true;
    s.beta = *rescaled_beta;
    s.gamma = 2.0 * s.beta / (1.0 - s.m);
  }
  s.validate();
  return s;
}

CurvatureField scalar_curvature(const FlowState& s) {
  s.validate();
  const auto& g = *s.grid;
  const auto N = g.size();
  Eigen::VectorXd U = s.u.array().pow(s.m);
  // pure diffusion part: R is invariant under the rescaling
  Eigen::VectorXd lap(N);
  lap.setZero();
  for (Eigen::Index f = 0; f + 1 < N; ++f) {
    const double flux = g.coupling[f] * (U[f + 1] - U[f]);
    lap[f] += flux;
    lap[f + 1] -= flux;
  }
  // rounding bound of the differences above; flat dead cores sit at it
  Eigen::VectorXd noise(N);
  noise.setZero();
  for (Eigen::Index f = 0; f + 1 < N; ++f) {
    const double e = g.coupling[f] * (std::abs(U[f + 1]) + std::abs(U[f]));
    noise[f] += e;
    noise[f + 1] += e;
  }
  constexpr double kRound = 8 * std::numeric_limits<double>::epsilon();
  noise.array() *= kRound / g.volume.array();
  lap.array() /= g.volume.array();
  lap[N - 1] = one_sided_laplacian(g, U, N - 1, -1);
  if (g.inner.kind == InnerKind::Dirichlet) lap[0] = one_sided_laplacian(g, U, 0, +1);
  CurvatureField out;
  const double c = -(1.0 - s.m) * (s.n - 1.0) / s.m;
  out.values = c * lap.cwiseQuotient(s.u);
  out.noise = std::abs(c) * noise.cwiseQuotient(s.u);
  const auto lo = g.first_unknown(), hi = g.last_unknown();
  auto resolved = [&](Eigen::Index i) {
    return out.noise[i] <= 1e-2 * std::abs(out.values[i]) || out.noise[i] <= 1e-8;
  };
  std::optional<Eigen::Index> best;
  for (Eigen::Index i = lo; i <= hi; ++i)
    if (resolved(i) && (!best || out.values[i] > out.values[*best])) best = i;
  out.resolved = best.has_value();
  if (!best) {
    best = lo;
    for (Eigen::Index i = lo; i <= hi; ++i)
      if (out.values[i] > out.values[*best]) best = i;
  }
  out.argmax = *best;
  out.max_R = out.values[out.argmax];
  out.argmax_r = g.nodes[out.argmax];
  return out;
}

double outer_bc_value(double t, const OuterBC& bc, const FlowState& shape) {
  const double R = shape.grid->r_max();
  switch (bc.kind) {
    case OuterKind::FrozenTail: return tail_u(bc.A, bc.K0, R, shape.m);
    case OuterKind::DriftingTail: {
      // rescaled: w̄(r̄) = w(r̄ e^{βt}), so the slope term contributes Aβt
      double K = bc.K0 - cyl_level(shape.n) * t;
      if (shape.rescaled) K += bc.A * shape.beta * t;
      return tail_u(bc.A, K, R, shape.m);
    }
    case OuterKind::Dirichlet: {
      const double v = bc.series.value(R, t);
      if (!(v > 0)) throw TailExtinct("outer series value <= 0 at t=" + std::to_string(t));
      return v;
    }
  }
  throw DomainError("outer_bc_value: unknown kind");
}

namespace {

bool newton_step(const FlowState& s, double dt, const NewtonOptions& opts, FlowState& out, int& iterations) {
  const auto& g = *s.grid;
  const auto N = g.size();
  const double t1 = s.t + dt;
  const double m = s.m;
  const double c = (s.n - 1.0) / m;
  Eigen::VectorXd u = s.u;
  u[N - 1] = outer_bc_value(t1, g.outer, s);
  if (g.inner.kind == InnerKind::Dirichlet) {
    u[0] = g.inner.series.value(g.nodes[0], t1);
    if (!(u[0] > 0)) throw TailExtinct("inner series value <= 0");
  }
  Eigen::VectorXd U = u.array().pow(m);
  const auto lo = g.first_unknown(), hi = g.last_unknown();
  const auto M = hi - lo + 1;
  Eigen::VectorXd op(N), dl(M), dd(M), du(M), rhs(M), dudU(N);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    apply_operator(s, u, U, op);
    dudU = u.cwiseQuotient(U) / m;  // u^{1-m}/m
    for (Eigen::Index k = 0; k < M; ++k) {
      const auto i = lo + k;
      rhs[k] = -((u[i] - s.u[i]) / dt - op[i]);
      const double ap = i + 1 < N ? g.coupling[i] : 0.0;
      const double am = i > 0 ? g.coupling[i - 1] : 0.0;
      double diag = dudU[i] / dt + c * (ap + am) / g.volume[i];
      double upper = -c * ap / g.volume[i];
      double lower = -c * am / g.volume[i];
      if (s.rescaled) {
        const double Gp = i + 1 < N ? g.face_pow_n[i] : 0.0;
        const double Gm = i > 0 ? g.face_pow_n[i - 1] : 0.0;
        diag -= (s.beta * 0.5 * (Gp - Gm) / g.volume[i] + (s.gamma - s.n * s.beta)) * dudU[i];
        if (i + 1 < N) upper -= s.beta * 0.5 * Gp / g.volume[i] * dudU[i + 1];
        if (i > 0) lower += s.beta * 0.5 * Gm / g.volume[i] * dudU[i - 1];
      }
      dd[k] = diag;
      du[k] = upper;
      dl[k] = lower;
    }
    thomas(dl, dd, du, rhs);
    if (!rhs.allFinite()) return false;
    // keep U positive, at most a tenfold decrease per iteration
    double lam = 1.0, rel = 0.0;
    for (Eigen::Index k = 0; k < M; ++k) {
      const double Ui = U[lo + k];
      if (rhs[k] < 0) lam = std::min(lam, 0.9 * Ui / -rhs[k]);
      rel = std::max(rel, std::abs(rhs[k]) / Ui);
    }
    for (Eigen::Index k = 0; k < M; ++k) U[lo + k] += lam * rhs[k];
    for (Eigen::Index k = 0; k < M; ++k) u[lo + k] = std::pow(U[lo + k], 1.0 / m);
    iterations = it;
    if (lam == 1.0 && rel < opts.tolerance) {
      out = s;
      out.t = t1;
      out.u = std::move(u);
      return out.u.allFinite() && (out.u.array() > 0).all();
    }
  }
  return false;
}

FlowState step_split(const FlowState& s, double dt, const NewtonOptions& opts, StepReport& rep, int depth) {
  FlowState out;
  int its = 0;
  if (newton_step(s, dt, opts, out, its)) {
    rep.newton_iterations += its;
    return out;
  }
  rep.newton_iterations += its;
  if (depth >= opts.max_halvings)
    throw SolverError("step: Newton failed after " + std::to_string(depth) + " halvings at t=" + std::to_string(s.t));
  ++rep.substeps;
  FlowState mid = step_split(s, 0.5 * dt, opts, rep, depth + 1);
  return step_split(mid, s.t + dt - mid.t, opts, rep, depth + 1);
}

}  // namespace

FlowState step(const FlowState& state, double dt, const NewtonOptions& opts, StepReport* report) {
  if (!(dt > 0)) throw DomainError("step: dt must be positive");
  state.validate();
  StepReport rep;
  rep.substeps = 1;
  FlowState out = step_split(state, dt, opts, rep, 0);
  if (report) *report = rep;
  return out;
}

Trajectory evolve(const FlowState& state, double t_end, const Controller& ctl) {
  if (!(t_end > state.t)) throw DomainError("evolve: t_end must exceed the current time");
  state.validate();
  Trajectory tr;
  FlowState cur = state;
  auto record = [&](const FlowState& s, const CurvatureField& R, double integral) {
    tr.times.push_back(s.t);
    tr.max_R.push_back(R.max_R);
    tr.argmax_r.push_back(R.argmax_r);
    tr.max_u.push_back(s.u.maxCoeff());
    tr.integral_max_R.push_back(integral);
  };
  const double u0max = cur.u.maxCoeff();
  const double floor = ctl.extinction_floor * u0max;
  const auto lo = cur.grid->first_unknown(), hi = cur.grid->last_unknown();
  record(cur, scalar_curvature(cur), 0.0);
  tr.snapshots.push_back(cur);

  std::vector<double> snaps;
  for (double x : ctl.snapshot_times)
    if (x > cur.t && x <= t_end) snaps.push_back(x);
  std::sort(snaps.begin(), snaps.end());
  std::size_t next_snap = 0;

  double dt = ctl.dt_init, integral = 0.0;
  while (cur.t < t_end) {
    if (tr.steps + tr.rejected >= ctl.max_steps) throw SolverError("evolve: step budget exhausted");
    double target = t_end;
    if (next_snap < snaps.size()) target = std::min(target, snaps[next_snap]);
    double h = std::min(dt, target - cur.t);
    const bool hits = h >= target - cur.t;
    if (hits) h = target - cur.t;

    FlowState nxt;
    StepReport rep;
    try {
      nxt = step(cur, h, ctl.newton, &rep);
    } catch (const TailExtinct&) {
      tr.termination = Termination::TailExtinct;
      break;
    }
    double change = 0;
    for (auto i = lo; i <= hi; ++i) change = std::max(change, std::abs(nxt.u[i] - cur.u[i]) / cur.u[i]);
    if (!ctl.fixed_dt && change > ctl.reject_factor * ctl.target_change && h > ctl.dt_min) {
      ++tr.rejected;
      dt = std::max(ctl.dt_min, h * std::max(0.1, 0.8 * ctl.target_change / change));
      continue;
    }
    cur = std::move(nxt);
    ++tr.steps;
    const auto R = scalar_curvature(cur);
    integral += h * R.max_R;
    record(cur, R, integral);
    if (hits && next_snap < snaps.size() && target == snaps[next_snap]) {
      tr.snapshots.push_back(cur);
      ++next_snap;
    }
    if (!ctl.fixed_dt) {
      double fac = std::clamp(0.9 * ctl.target_change / std::max(change, 1e-300), 0.2, 2.0);
      if (rep.newton_iterations > ctl.newton_target * rep.substeps) fac = std::min(fac, 0.7);
      // a step clipped to a snapshot does not set the natural step size
      dt = hits && h < dt ? std::min(dt, h * fac) : h * fac;
      dt = std::clamp(dt, ctl.dt_min, ctl.dt_max);
    }
    const double umax = cur.u.maxCoeff();
    if (umax < floor) {
      // u^{1-m} is close to linear in t approaching extinction
      const double a = std::pow(tr.max_u[tr.max_u.size() - 2], 1 - cur.m), b = std::pow(umax, 1 - cur.m);
      const double f = std::pow(floor, 1 - cur.m);
      const double t0 = tr.times[tr.times.size() - 2];
      tr.extinction_time = t0 + (cur.t - t0) * (a - f) / (a - b);
      tr.termination = Termination::Extinct;
      break;
    }
    if (ctl.on_step && ctl.on_step(cur, R)) {
      tr.termination = Termination::Stopped;
      break;
    }
  }
  tr.final_state = cur;
  return tr;
}

Eigen::VectorXd interpolate_profile(const Eigen::VectorXd& r, const Eigen::VectorXd& u, const Eigen::VectorXd& x) {
  const auto N = r.size();
  if (N < 2 || u.size() != N) throw DomainError("interpolate_profile: bad data");
  Eigen::VectorXd xi = r.array().asinh(), eta = u.array().log();
  Eigen::VectorXd d = pchip_slopes(xi, eta);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double q = x[k];
    if (q < r[0] || q > r[N - 1]) throw DomainError("interpolate_profile: point outside the mesh, r=" + std::to_string(q));
    auto it = std::upper_bound(r.data(), r.data() + N, q);
    Eigen::Index i = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(it - r.data()) - 1, 0, N - 2);
    if (q == r[i]) {
      out[k] = u[i];
      continue;
    }
    out[k] = std::exp(hermite(xi[i], xi[i + 1], eta[i], eta[i + 1], d[i], d[i + 1], std::asinh(q)));
  }
  return out;
}

double interpolate_profile(const Eigen::VectorXd& r, const Eigen::VectorXd& u, double x) {
  Eigen::VectorXd q(1);
  q[0] = x;
  return interpolate_profile(r, u, q)[0];
}

FlowState rescale(const FlowState& state, double beta, Direction dir) {
  state.validate();
  if (!(beta > 0)) throw DomainError("rescale: beta must be positive");
  if ((dir == Direction::ToRescaled) == state.rescaled) throw DomainError("rescale: state already in target form");
  if (dir == Direction::ToOriginal && beta != state.beta) throw DomainError("rescale: beta differs from the state's");
  const auto& g = *state.grid;
  const double gamma = 2.0 * beta / (1.0 - state.m);
  FlowState out = state;
  const double t = state.t;
  if (dir == Direction::ToRescaled) {
    // ū(x̄) = e^{γt} u(x̄ e^{βt}); outer points from the original-variable tail at t
    out.rescaled = true;
    out.beta = beta;
    out.gamma = gamma;
    const double sc = std::exp(beta * t), amp = std::exp(gamma * t);
    const double R = g.r_max();
    double u_tail_K = 0;
    const bool tail = g.outer.kind != OuterKind::Dirichlet;
    if (tail) u_tail_K = g.outer.kind == OuterKind::DriftingTail ? g.outer.K0 - cyl_level(state.n) * t : g.outer.K0;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double x = g.nodes[i] * sc;
      double v;
      if (x <= R) v = interpolate_profile(g.nodes, state.u, x);
      else if (tail) v = tail_u(g.outer.A, u_tail_K, x, state.m);
      else v = g.outer.series.value(x, t);
      out.u[i] = amp * v;
    }
  } else {
    // u(x) = e^{-γt} ū(x e^{-βt}); always inside the mesh
    out.rescaled = false;
    out.beta = 0;
    out.gamma = 0;
    const double sc = std::exp(-beta * t), amp = std::exp(-gamma * t);
    for (Eigen::Index i = 0; i < g.size(); ++i)
      out.u[i] = amp * interpolate_profile(g.nodes, state.u, g.nodes[i] * sc);
  }
  return out;
}

double unit_sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0);
}

namespace {

Eigen::VectorXd on_mesh_of(const FlowState& a, const FlowState& b) {
  if (a.grid == b.grid || (a.grid->nodes.size() == b.grid->nodes.size() && a.grid->nodes == b.grid->nodes))
    return b.u;
  return interpolate_profile(b.grid->nodes, b.u, a.grid->nodes);
}

}  // namespace

double l1_distance(const FlowState& a, const FlowState& b, double radius) {
  if (a.n != b.n) throw DomainError("l1_distance: dimension mismatch");
  const auto& r = a.grid->nodes;
  if (!(radius > r[0]) || radius > a.grid->r_max()) throw DomainError("l1_distance: radius outside the mesh");
  const Eigen::VectorXd ub = on_mesh_of(a, b);
  auto f = [&](Eigen::Index i) { return std::abs(a.u[i] - ub[i]) * std::pow(r[i], a.n - 1); };
  double sum = 0;
  Eigen::Index i = 0;
  for (; i + 1 < r.size() && r[i + 1] <= radius; ++i) sum += 0.5 * (r[i + 1] - r[i]) * (f(i) + f(i + 1));
  if (r[i] < radius) {
    const double th = (radius - r[i]) / (r[i + 1] - r[i]);
    const double fr = (1 - th) * f(i) + th * f(i + 1);
    sum += 0.5 * (radius - r[i]) * (f(i) + fr);
  }
  return unit_sphere_area(a.n) * sum;
}

double sup_distance(const FlowState& a, const FlowState& b, double radius) {
  const Eigen::VectorXd ub = on_mesh_of(a, b);
  double best = 0;
  for (Eigen::Index i = 0; i < a.u.size() && a.grid->nodes[i] <= radius; ++i)
    best = std::max(best, std::abs(a.u[i] - ub[i]));
  return best;
}

LowerBoundReport pointwise_lower_bound_check(const Trajectory& traj, double rel_slack) {
  LowerBoundReport rep;
  if (traj.snapshots.empty()) throw DomainError("pointwise_lower_bound_check: empty trajectory");
  const auto& s0 = traj.snapshots.front();
  const auto& g = *s0.grid;
  const double om = 1.0 - s0.m;
  for (const auto& s : traj.snapshots) {
    auto it = std::lower_bound(traj.times.begin(), traj.times.end(), s.t);
    if (it == traj.times.end() || *it != s.t) throw DomainError("pointwise_lower_bound_check: snapshot time not in trace");
    const double F = traj.integral_max_R[it - traj.times.begin()];
    const double dtime = s.t - s0.t;
    for (Eigen::Index i = g.first_unknown(); i <= g.last_unknown(); ++i) {
      double rhs;
      if (s.rescaled) {
        const double x = g.nodes[i] * std::exp(s.beta * dtime);
        double u0;
        if (x <= g.r_max()) u0 = interpolate_profile(g.nodes, s0.u, x);
        else if (g.outer.kind != OuterKind::Dirichlet) u0 = tail_u(g.outer.A, g.outer.K0, x, s.m);
        else continue;
        rhs = std::exp(2.0 * s.beta * dtime) * std::pow(u0, om) * std::exp(-F);
      } else {
        rhs = std::pow(s0.u[i], om) * std::exp(-F);
      }
      const double lhs = std::pow(s.u[i], om);
      ++rep.checked;
      const double ratio = lhs / rhs;
      if (ratio < rep.worst_ratio) {
        rep.worst_ratio = ratio;
        rep.worst_t = s.t;
        rep.worst_r = g.nodes[i];
      }
      if (ratio < 1.0 - rel_slack) ++rep.violations;
    }
  }
  rep.passed = rep.violations == 0;
  return rep;
}

}  // namespace yamabe
