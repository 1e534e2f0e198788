// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "yamabe/asymptotics.hpp"
#include "yamabe/experiments.hpp"
#include "yamabe/soliton.hpp"

using namespace yamabe;

namespace {

const int kDims[] = {3, 4, 5, 6, 8};
const double kBetas[] = {0.5, 1.0, 2.0};
const double kLambdas[] = {0.5, 1.0, 4.0};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SolitonParams steady(int n, double beta, double lambda = 1) {
  return derive_params(n, beta, lambda, SolitonKind::Steady);
}

// lower-bound reports of every flow trajectory, filled by criteria 6-12
std::vector<std::pair<std::string, LowerBoundReport>> g_lemmas;
std::size_t g_cylinder_ladder_failures = 0;

void record(std::string label, const LowerBoundReport& r) { g_lemmas.emplace_back(std::move(label), r); }

Outcome slope_limit() {
  double worst = 0;
  std::string where;
  for (int n : kDims)
    for (double beta : kBetas) {
      const auto p = steady(n, beta);
      const auto w = integrate_steady_cylindrical(p, -15, 50, 1e-12);
      const double A = p.tail_slope();
      const double e = std::abs(w.deriv[w.size() - 1] - A) / A;
      if (e > worst) worst = e, where = fmt("n=%d beta=%g", n, beta);
    }
  return {worst < 1e-3, fmt("max |w_s(50) - A|/A = %.3e at %s (tol 1e-3)", worst, where.c_str())};
}

Outcome tail_correction() {
  bool ok = true;
  double worst = 0, worst6 = 0;
  for (int n : kDims)
    for (double beta : kBetas) {
      const auto p = steady(n, beta);
      CylindricalOptions o;
      o.s_end = 200;
      const auto f = fit_steady_asymptotics(integrate_steady_cylindrical(p, o));
      const double target = (6.0 - n) * (n - 1.0) / (4.0 * beta);
      if (n == 6) {
        worst6 = std::max(worst6, std::abs(f.hs_limit));
        ok = ok && std::abs(f.hs_limit) <= 1e-3;
      } else {
        const double e = std::abs(f.hs_limit - target) / std::abs(target);
        worst = std::max(worst, e);
        ok = ok && e <= 0.05;
      }
    }
  return {ok, fmt("max rel error of lim s^2 h_s = %.3e (tol 5e-2), n=6 max |lim| = %.3e (tol 1e-3)", worst, worst6)};
}

Outcome kappa_invariance() {
  double worst = 0;
  int at = 0;
  for (int n : kDims) {
    double lo = 1e300, hi = -1e300;
    for (double beta : kBetas)
      for (double lambda : kLambdas) {
        const auto p = steady(n, beta, lambda);
        CylindricalOptions o;
        o.s_end = 200;
        const double k = kappa_from_fit(p, fit_steady_asymptotics(integrate_steady_cylindrical(p, o)));
        lo = std::min(lo, k);
        hi = std::max(hi, k);
      }
    if (hi - lo > worst) worst = hi - lo, at = n;
  }
  return {worst < 1e-2, fmt("max kappa spread = %.3e at n=%d (tol 1e-2)", worst, at)};
}

Outcome scaling_closure() {
  double worst = 0;
  for (int n : kDims) {
    const auto u = integrate_radial(steady(n, 1), 1e4);
    for (double beta : kBetas)
      for (double lambda : kLambdas) {
        const auto target = steady(n, beta, lambda);
        const auto scaled = apply_scaling(u, target);
        RadialOptions o;
        o.nodes = std::vector<double>(scaled.coords.data(), scaled.coords.data() + scaled.size());
        const auto direct = integrate_radial(target, scaled.coords[scaled.size() - 1], o);
        worst = std::max(worst, ((scaled.values - direct.values).array() / direct.values.array()).abs().maxCoeff());
      }
  }
  return {worst < 1e-5, fmt("max relative closure error = %.3e (tol 1e-5)", worst)};
}

Outcome sign_structure() {
  bool ok = true;
  std::string detail;
  for (int n : kDims)
    for (double beta : kBetas) {
      const auto r = check_sign_structure(integrate_steady_cylindrical(steady(n, beta), -15, 50, 1e-12));
      const bool good = n >= 6 ? r.violations == 0 : r.sign_changes == 1;
      ok = ok && good;
      if (beta == 1.0)
        detail += n >= 6 ? fmt("n=%d violations=%zu ", n, r.violations) : fmt("n=%d changes=%zu ", n, r.sign_changes);
    }
  return {ok, detail + "(all beta)"};
}

Outcome cylinder_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_cylinder_oracle();
  const double wall = seconds_since(t0);
  record("cylinder adaptive", r.lemma);
  g_cylinder_ladder_failures = r.ladder_lemma_failures;
  const double ext = r.extinction_estimate.value_or(-1);
  const double to = *std::min_element(r.time_orders.begin(), r.time_orders.end());
  const double so = *std::min_element(r.space_orders.begin(), r.space_orders.end());
  const bool ok = r.max_rel_error < 1e-3 && std::abs(ext - 1.0) <= 0.02 && to >= 0.9 && so >= 1.8 && wall < 60 &&
                  r.time_orders.size() == 2 && r.space_orders.size() == 2;
  return {ok, fmt("error %.3e, extinction %.5f, time orders %.3f/%.3f, space orders %.3f/%.3f, %.1f s", r.max_rel_error,
                  ext, r.time_orders[0], r.time_orders[1], r.space_orders[0], r.space_orders[1], wall)};
}

Outcome stationarity() {
  const auto r = run_stationarity(steady(3, 1), 3.0);
  record("stationarity", r.lemma);
  return {r.drift_per_time < 1e-3, fmt("drift per unit time = %.3e (tol 1e-3)", r.drift_per_time)};
}

Outcome contraction() {
  InitialDataSpec a, b;
  a.amplitude = 0.5;
  a.support_radius = 2;
  b.amplitude = -0.3;
  b.support_radius = 3;
  RunOptions o;
  o.controller.dt_init = 1e-2;
  const auto r = run_contraction(a, b, 1.0, 8.0, o, 0.05);
  record("contraction a", r.lemma_a);
  record("contraction b", r.lemma_b);
  double worst = 0;
  for (std::size_t k = 0; k < r.gap.size(); ++k) worst = std::max(worst, r.gap[k] / r.envelope[k]);
  return {r.violations == 0 && !r.gap.empty(),
          fmt("max gap/envelope = %.4f (tol 1.05), fitted rate %.4f vs %.4f", worst, r.fitted_rate, r.predicted_rate)};
}

Outcome convergence() {
  InitialDataSpec s;
  s.amplitude = 0.5;
  s.support_radius = 2;
  ConvergenceOptions o;
  o.run.snapshots = 15;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_convergence(s, 1.0, 30.0, o);
  const double wall = seconds_since(t0);
  record("convergence", r.lemma);
  const bool ok = r.l1_monotone && r.l1_reduction >= 10 && r.sup.back() < r.sup.front() && wall < 120;
  return {ok, fmt("L1 monotone=%d reduction %.1f, sup %.3e -> %.3e, lambda %.4f vs %.4f, %.1f s", r.l1_monotone,
                  r.l1_reduction, r.sup.front(), r.sup.back(), r.lambda_identified, r.lambda_target, wall)};
}

Outcome barrier() {
  const auto p = steady(3, 1);
  std::string detail;
  double h_super = 0;
  try {
    h_super = barrier_threshold(p, 1, 64, 1e-3, 100, BarrierSide::Super);
    detail += fmt("super threshold %.3f; ", h_super);
  } catch (const FitError&) {
    detail += "no super threshold in [1,64]; ";
  }
  try {
    const double h = barrier_threshold(p, 1, 1024);
    bool ok = true;
    for (double f : {1.0, 2.0, 8.0, 64.0}) ok = ok && verify_barrier(p, f * h).passed;
    return {ok, detail + fmt("joint threshold %.3f", h)};
  } catch (const FitError&) {
    std::size_t sub = 0, nodes = 0;
    for (double f : {1.0, 2.0, 8.0, 64.0}) {
      const auto b = verify_barrier(p, f * std::max(h_super, 1.0));
      sub += b.sub_violations;
      nodes += b.nodes;
    }
    return {false, detail + fmt("sub-barrier never certifies for h <= 1024; N[v_lower] < 0 at %zu of %zu nodes above "
                                "the super threshold",
                                sub, nodes)};
  }
}

Outcome tail_drift() {
  InitialDataSpec s;
  s.kind = InitialKind::LogTail;
  s.A = 2;
  s.K = 1;
  const auto r = run_tail_drift(s, 1.0);
  record("tail drift", r.lemma);
  return {r.rel_error <= 0.03, fmt("rate %.5f vs %.0f, rel error %.4f (tol 3e-2)", r.rate, r.expected, r.rel_error)};
}

Outcome dichotomy() {
  const auto t0 = std::chrono::steady_clock::now();
  auto lemmas = [](const char* label, const SingularityReport& r) {
    for (const auto& run : r.runs) record(fmt("%s N=%d", label, run.trace.resolution), run.lemma);
  };

  InitialDataSpec cyl;
  cyl.kind = InitialKind::Cylinder;
  SingularityOptions co;
  co.ladder = {200, 400};
  co.target_change = 1e-3;
  co.extinction_floor = 1e-8;
  const auto c = run_singularity(cyl, TraceMode::FiniteTime, 2.0, co);
  lemmas("cylinder", c);
  double dmin = 1e300, dmax = -1e300;
  for (const auto& g : c.classification.rungs) dmin = std::min(dmin, g.min_value), dmax = std::max(dmax, g.max_value);
  const bool cyl_ok = c.classification.verdict == Verdict::TypeI && dmin >= 0.95 && dmax <= 1.05;

  const auto f = run_finite_time_typeII(1.0, 1.0);
  lemmas("capped", f);
  bool fin_ok = f.classification.verdict == Verdict::TypeII && f.classification.rungs.size() >= 2;
  for (const auto& g : f.classification.rungs) fin_ok = fin_ok && g.monotone && g.growth >= 10;

  const auto i = run_infinite_time_typeII(10.0);
  lemmas("slow tail", i);
  const bool inf_ok = i.classification.verdict == Verdict::TypeII && i.classification.growth >= 10;

  InitialDataSpec sol;
  sol.amplitude = 0.5;
  sol.support_radius = 2;
  SingularityOptions so;
  so.log_r_max = 12;
  so.ladder = {2048, 4096};
  so.target_change = 1e-2;
  const auto s = run_singularity(sol, TraceMode::InfiniteTime, 10.0, so);
  lemmas("soliton control", s);
  double ratio = 0;
  for (const auto& run : s.runs)
    ratio = std::max(ratio, *std::max_element(run.trace.max_R.begin(), run.trace.max_R.end()) / run.trace.max_R.front());
  const bool sol_ok = ratio <= 2;

  const double wall = seconds_since(t0);
  return {cyl_ok && fin_ok && inf_ok && sol_ok && wall < 600,
          fmt("cylinder %s d in [%.4f, %.4f]; capped %s growth %.1f; slow tail %s growth %.1f; control sup ratio %.3f; "
              "%.0f s",
              std::string(to_string(c.classification.verdict)).c_str(), dmin, dmax,
              std::string(to_string(f.classification.verdict)).c_str(), f.classification.growth,
              std::string(to_string(i.classification.verdict)).c_str(), i.classification.growth, ratio, wall)};
}

Outcome lower_bound() {
  bool ok = g_cylinder_ladder_failures == 0 && !g_lemmas.empty();
  std::string failed;
  double worst = 1e300;
  for (const auto& [label, r] : g_lemmas) {
    if (!r.passed) ok = false, failed += " " + label;
    worst = std::min(worst, r.worst_ratio);
  }
  return {ok, fmt("%zu trajectories plus the cylinder ladder (%zu failures), worst ratio %.6f%s", g_lemmas.size(),
                  g_cylinder_ladder_failures, worst, failed.empty() ? "" : ("; failed:" + failed).c_str())};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"soliton slope limit", slope_limit},
      {"1/s tail correction", tail_correction},
      {"kappa invariance", kappa_invariance},
      {"scaling closure", scaling_closure},
      {"sign structure", sign_structure},
      {"cylinder oracle", cylinder_oracle},
      {"rescaled stationarity", stationarity},
      {"L1 contraction", contraction},
      {"convergence to the soliton", convergence},
      {"barrier certification", barrier},
      {"tail constant drift", tail_drift},
      {"type I / type II dichotomy", dichotomy},
      {"pointwise lower bound", lower_bound},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %-28s %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str());
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
